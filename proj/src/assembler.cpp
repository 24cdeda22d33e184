#include "epar/assembler.hpp"

#include <algorithm>
#include <set>

namespace epar {

namespace {

void append_sentence(const QueryInstance& q, AssembledContext& ctx, std::set<std::pair<std::size_t, std::size_t>>& seen,
                     KeySentence ks) {
    if (!seen.insert({ks.doc, ks.sentence}).second) return;
    ctx.sentences.push_back(ks);
    const Span sp = q.documents[ks.doc].sentence_spans[ks.sentence];
    for (std::size_t t = sp.begin; t < sp.end; ++t)
        ctx.provenance.push_back({ks.chain, ks.doc, ks.sentence, t, ks.fallback});
}

std::optional<std::size_t> first_sentence_with(const Document& d, const std::vector<std::string>& phrase) {
    for (std::size_t s = 0; s < d.sentence_spans.size(); ++s)
        if (sentence_contains(d, s, phrase)) return s;
    return std::nullopt;
}

void check_chains(const QueryInstance& q, const std::vector<std::vector<std::size_t>>& chains) {
    for (const auto& c : chains) {
        if (c.empty()) throw ContractError("assembler: empty chain");
        for (std::size_t d : c)
            if (d >= q.documents.size()) throw ContractError("assembler: document " + std::to_string(d) + " out of range");
    }
}

}  // namespace

AssembledContext extract_key_sentences(const QueryInstance& q, const std::vector<std::vector<std::size_t>>& chains,
                                       const std::vector<std::size_t>& proposals) {
    if (chains.size() != proposals.size()) throw ContractError("extract_key_sentences: one proposal per chain required");
    check_chains(q, chains);
    AssembledContext ctx;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t c = 0; c < chains.size(); ++c) {
        if (proposals[c] >= q.candidates.size()) throw ContractError("extract_key_sentences: proposal out of range");
        const auto& phrase = q.candidates[proposals[c]];
        KeySentence ks{c, chains[c].back(), 0, true};
        for (auto it = chains[c].rbegin(); it != chains[c].rend(); ++it) {
            if (auto s = first_sentence_with(q.documents[*it], phrase)) {
                ks = {c, *it, *s, false};
                break;
            }
        }
        append_sentence(q, ctx, seen, ks);
    }
    return ctx;
}

AssembledContext lead_sentences(const QueryInstance& q, const std::vector<std::vector<std::size_t>>& chains) {
    check_chains(q, chains);
    AssembledContext ctx;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t c = 0; c < chains.size(); ++c)
        for (std::size_t d : chains[c]) append_sentence(q, ctx, seen, {c, d, 0, false});
    return ctx;
}

AssembledContext full_documents(const QueryInstance& q, const std::vector<std::vector<std::size_t>>& chains) {
    check_chains(q, chains);
    AssembledContext ctx;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t c = 0; c < chains.size(); ++c)
        for (std::size_t d : chains[c])
            for (std::size_t s = 0; s < q.documents[d].sentence_spans.size(); ++s) append_sentence(q, ctx, seen, {c, d, s, false});
    return ctx;
}

Tensor gather_context(const EncodedInstance& enc, const AssembledContext& ctx) {
    if (ctx.provenance.empty()) throw ContractError("gather_context: empty context");
    std::vector<Tensor> parts;
    // consecutive tokens of one document sentence become one slice
    std::size_t i = 0;
    while (i < ctx.provenance.size()) {
        std::size_t j = i + 1;
        while (j < ctx.provenance.size() && ctx.provenance[j].doc == ctx.provenance[i].doc &&
               ctx.provenance[j].token == ctx.provenance[j - 1].token + 1)
            ++j;
        const auto& p = ctx.provenance[i];
        parts.push_back(slice(enc.H[p.doc], p.token, p.token + (j - i), 0));
        i = j;
    }
    return parts.size() == 1 ? parts.front() : concat(parts, 0);
}

BidafResult bidaf_attend(const Tensor& h, const Tensor& U, const Tensor& w_sim) {
    const std::size_t e = h.cols();
    if (U.cols() != e || w_sim.size() != 3 * e)
        throw DimensionError("bidaf: h " + h.shape().str() + ", U " + U.shape().str() + ", w " + w_sim.shape().str());
    Tensor w1 = slice(w_sim, 0, e, 0), w2 = slice(w_sim, e, 2 * e, 0), w3 = slice(w_sim, 2 * e, 3 * e, 0);
    Tensor S = matmul(mul(h, w3), transpose(U));
    S = add(S, reshape(matmul(h, w1), Shape(h.rows(), 1)));
    S = add(S, matmul(U, w2));
    Tensor h_q = matmul(softmax_lastdim(S), U);
    Tensor b = softmax_lastdim(max_lastdim(S));
    Tensor h_c = matmul(b, h);
    Tensor G = concat({h, h_q, mul(h, h_q), mul(h, h_c)}, 1);
    return {S, G};
}

EvidenceAssembler::EvidenceAssembler(ParamStore& store, const Config& cfg, std::mt19937_64& rng) {
    const std::size_t e = cfg.encoded_dim(), hid = cfg.assembler_hidden;
    store.add("ea.w_sim", Shape(3 * e), Init::Xavier, rng);
    LstmParams::create(store, "ea.model_f", 4 * e, hid, rng);
    LstmParams::create(store, "ea.model_b", 4 * e, hid, rng);
    Linear::create(store, "ea.out", 2 * hid, 1, rng);
    BetaSim::create(store, "ea.beta", e, cfg.beta_hidden(), rng);
    bind_all(store);
}

EvidenceAssembler EvidenceAssembler::bind(ParamStore& store, const Config&) {
    EvidenceAssembler ea;
    ea.bind_all(store);
    return ea;
}

void EvidenceAssembler::bind_all(ParamStore& store) {
    w_sim = store.get("ea.w_sim");
    model_f = LstmParams::bind(store, "ea.model_f");
    model_b = LstmParams::bind(store, "ea.model_b");
    out = Linear::bind(store, "ea.out");
    beta = BetaSim::bind(store, "ea.beta");
}

MatchResult EvidenceAssembler::bidaf_match(const Tensor& h, const Tensor& U_sub, const Tensor& U_bod,
                                           const ForwardMode& mode) const {
    if (!h.defined() || h.rank() != 2 || h.rows() == 0) throw ContractError("bidaf_match: empty context");
    MatchResult r;
    r.fused = bidaf_attend(h, concat({U_sub, U_bod}, 0), w_sim).fused;
    BiSequence m = run_bilstm(mode.drop(r.fused), model_f, model_b);
    r.distribution = softmax_lastdim(reshape(out(m.states), Shape(h.rows())));
    r.pooled = matmul(r.distribution, h);
    return r;
}

FinalPrediction EvidenceAssembler::assemble_predict(const Tensor& h, const Tensor& U_sub, const Tensor& U_bod,
                                                    const Tensor& candidates, const ForwardMode& mode) const {
    if (!candidates.defined() || candidates.rank() != 2 || candidates.rows() == 0)
        throw ContractError("assemble_predict: no candidates");
    FinalPrediction p;
    p.match = bidaf_match(h, U_sub, U_bod, mode);
    p.scores = beta(candidates, p.match.pooled);
    p.best = argmax_index(p.scores.data());
    return p;
}

std::size_t vote(const std::vector<std::vector<Real>>& probs, VoteMode mode) {
    if (probs.empty()) throw ContractError("vote: no chains");
    std::vector<Real> pooled = probs.front();
    for (std::size_t c = 1; c < probs.size(); ++c) {
        if (probs[c].size() != pooled.size()) throw DimensionError("vote: chains disagree on candidate count");
        for (std::size_t l = 0; l < pooled.size(); ++l)
            pooled[l] = mode == VoteMode::Avg ? pooled[l] + probs[c][l] : std::max(pooled[l], probs[c][l]);
    }
    return argmax_index(pooled);
}

Reranker::Reranker(ParamStore& store, const Config& cfg, std::mt19937_64& rng) {
    const std::size_t e = cfg.encoded_dim();
    store.add("rr.w_sim", Shape(3 * e), Init::Xavier, rng);
    Linear::create(store, "rr.proj", 4 * e, e, rng);
    AlphaSim::create(store, "rr.alpha", e, e, rng);
    BetaSim::create(store, "rr.beta", e, cfg.beta_hidden(), rng);
    bind_all(store);
}

Reranker Reranker::bind(ParamStore& store, const Config&) {
    Reranker r;
    r.bind_all(store);
    return r;
}

void Reranker::bind_all(ParamStore& store) {
    w_sim = store.get("rr.w_sim");
    proj = Linear::bind(store, "rr.proj");
    alpha = AlphaSim::bind(store, "rr.alpha");
    beta = BetaSim::bind(store, "rr.beta");
}

Tensor Reranker::chain_score(const ChainInput& chain, const Tensor& proposal) const {
    Tensor refined = chain.leaf;
    if (chain.ancestors.defined() && chain.ancestors.rows() > 0)
        refined = tanh(proj(bidaf_attend(chain.leaf, chain.ancestors, w_sim).fused));
    Tensor weights = softmax_lastdim(add(alpha(refined, chain.u_s), alpha(refined, chain.u_b)));
    return beta(proposal, matmul(weights, refined));
}

RerankResult Reranker::rerank(const std::vector<ChainInput>& chains, const std::vector<Tensor>& proposals) const {
    if (chains.empty() || chains.size() != proposals.size()) throw ContractError("rerank: one proposal per chain required");
    std::vector<Tensor> s;
    for (std::size_t c = 0; c < chains.size(); ++c) s.push_back(reshape(chain_score(chains[c], proposals[c]), Shape(1)));
    RerankResult r;
    r.scores = concat(s, 0);
    r.best_chain = argmax_index(r.scores.data());
    return r;
}

}  // namespace epar
