#include "epar/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "epar/retrieval.hpp"

namespace epar {

ExplorerInput ExplorerInput::all(const EncodedInstance& enc) {
    std::vector<std::size_t> ids(enc.num_documents());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    return subset(enc, ids);
}

ExplorerInput ExplorerInput::subset(const EncodedInstance& enc, const std::vector<std::size_t>& docs) {
    ExplorerInput in;
    std::vector<Tensor> p;
    for (std::size_t d : docs) {
        if (d >= enc.num_documents()) throw ContractError("explorer: document " + std::to_string(d) + " out of range");
        p.push_back(enc.P[d]);
        in.H.push_back(enc.H[d]);
    }
    if (p.empty()) throw ContractError("explorer: no documents");
    in.P = stack_rows(p);
    in.u_s = enc.u_s;
    in.doc_ids = docs;
    return in;
}

DocumentExplorer::DocumentExplorer(ParamStore& store, const Config& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    const std::size_t e = cfg.encoded_dim(), g = cfg.memory();
    store.add("de.w_read", Shape(e, g), Init::Xavier, rng);
    store.add("de.w_write", Shape(e, g), Init::Xavier, rng);
    GruParams::create(store, "de.gru", e, g, rng);
    if (g != e) Linear::create(store, "de.init", e, g, rng);
    bind_all(store);
}

DocumentExplorer DocumentExplorer::bind(ParamStore& store, const Config& cfg) {
    DocumentExplorer de;
    de.cfg_ = cfg;
    de.bind_all(store);
    return de;
}

void DocumentExplorer::bind_all(ParamStore& store) {
    w_read = store.get("de.w_read");
    w_write = store.get("de.w_write");
    gru = GruParams::bind(store, "de.gru");
    if (store.contains("de.init.w")) init = Linear::bind(store, "de.init");
    else init.reset();
}

Tensor DocumentExplorer::initial_memory(const Tensor& u_s) const { return init ? (*init)(u_s) : u_s; }

Tensor DocumentExplorer::read_logits(const Tensor& m, const Tensor& P) const {
    return matmul(P, matmul(w_read, m));
}

Tensor DocumentExplorer::read(const Tensor& m, const Tensor& P, const std::vector<std::uint8_t>& mask) const {
    if (mask.size() != P.rows())
        throw DimensionError("read_unit: mask of " + std::to_string(mask.size()) + " for " + std::to_string(P.rows()) + " documents");
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; }))
        throw ContractError("read_unit: every document is masked");
    return masked_softmax(read_logits(m, P), mask);
}

WriteResult DocumentExplorer::write(const Tensor& m, const Tensor& h) const {
    Tensor omega = softmax_lastdim(matmul(h, matmul(w_write, m)));
    Tensor summary = matmul(omega, h);
    return {gru_cell(summary, m, gru), omega};
}

namespace {

std::size_t argmax(std::span<const Real> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

std::size_t sample(std::span<const Real> probs, std::optional<std::size_t> avoid, std::mt19937_64& rng) {
    std::vector<Real> p(probs.begin(), probs.end());
    if (avoid && *avoid < p.size()) {
        Real rest = 0;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (i != *avoid) rest += p[i];
        if (rest > 0) p[*avoid] = 0;
    }
    Real total = 0;
    for (Real x : p) total += x;
    const Real u = static_cast<Real>(rng() >> 11) * 0x1.0p-53 * total;
    Real acc = 0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0) continue;
        acc += p[i];
        last = i;
        if (u < acc) return i;
    }
    return last;
}

}  // namespace

ReasoningChain DocumentExplorer::rollout(const ExplorerInput& in, std::size_t T, RolloutMode mode,
                                         const ForcedLabels& forced, std::mt19937_64* rng) const {
    const std::size_t n = in.size();
    if (T == 0 || T > n)
        throw ContractError("rollout_chain: T=" + std::to_string(T) + " with " + std::to_string(n) + " documents");
    if (mode == RolloutMode::Sample && !rng) throw ContractError("rollout_chain: sampling needs an rng");
    std::vector<std::uint8_t> mask(n, 1);
    Tensor m = initial_memory(in.u_s);
    ReasoningChain chain;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor chi = read(m, in.P, mask);
        std::size_t pick;
        if (t == 0 && forced.hop1) pick = *forced.hop1;
        else if (t + 1 == T && forced.hopT) pick = *forced.hopT;
        else if (mode == RolloutMode::Greedy) pick = argmax(chi.data());
        else pick = sample(chi.data(), t + 1 < T ? forced.hopT : std::nullopt, *rng);
        if (pick >= n || !mask[pick])
            throw ContractError("rollout_chain: hop " + std::to_string(t + 1) + " picks unavailable document " +
                                std::to_string(pick));
        chain.log_prob += std::log(chi.at(pick));
        chain.chi.push_back(chi);
        chain.local.push_back(pick);
        chain.docs.push_back(in.doc_ids[pick]);
        mask[pick] = 0;
        if (t + 1 < T) m = write(m, in.H[pick]).memory;
    }
    return chain;
}

ReasoningTree DocumentExplorer::build_tree(const ExplorerInput& in, std::size_t T, std::size_t t_w) const {
    const std::size_t n = in.size();
    if (t_w == 0) throw ContractError("build_tree: t_w must be >= 1");
    if (T == 0 || T > n)
        throw ContractError("build_tree: T=" + std::to_string(T) + " with " + std::to_string(n) + " documents");
    ReasoningTree tree;
    std::vector<std::uint8_t> mask(n, 1);
    Tensor m0 = initial_memory(in.u_s);
    Tensor chi1 = read(m0, in.P, mask);
    const std::size_t root = argmax(chi1.data());
    mask[root] = 0;
    ReasoningChain prefix;
    prefix.local = {root};
    prefix.docs = {in.doc_ids[root]};
    prefix.chi = {chi1};
    prefix.log_prob = std::log(chi1.at(root));
    if (T == 1) {
        tree.chains.push_back(prefix);
        return tree;
    }
    Tensor m1 = write(m0, in.H[root]).memory;
    Tensor chi2 = read(m1, in.P, mask);
    std::vector<Real> c2(chi2.data().begin(), chi2.data().end());
    std::set<std::vector<std::size_t>> seen;
    std::size_t branches = 0;
    for (std::size_t d : rank_by_score(c2)) {
        if (branches == t_w) break;
        if (!mask[d]) continue;
        ++branches;
        ReasoningChain c = prefix;
        auto bmask = mask;
        c.local.push_back(d);
        c.docs.push_back(in.doc_ids[d]);
        c.chi.push_back(chi2);
        c.log_prob += std::log(chi2.at(d));
        bmask[d] = 0;
        Tensor m = m1;
        for (std::size_t t = 2; t < T; ++t) {
            m = write(m, in.H[c.local.back()]).memory;
            Tensor chi = read(m, in.P, bmask);
            std::size_t pick = argmax(chi.data());
            c.local.push_back(pick);
            c.docs.push_back(in.doc_ids[pick]);
            c.chi.push_back(chi);
            c.log_prob += std::log(chi.at(pick));
            bmask[pick] = 0;
        }
        if (seen.insert(c.local).second) tree.chains.push_back(std::move(c));
    }
    std::stable_sort(tree.chains.begin(), tree.chains.end(),
                     [](const ReasoningChain& a, const ReasoningChain& b) { return a.log_prob > b.log_prob; });
    return tree;
}

}  // namespace epar
