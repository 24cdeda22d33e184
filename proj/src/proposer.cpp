#include "epar/proposer.hpp"

namespace epar {

AlphaSim AlphaSim::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t u_dim,
                          std::mt19937_64& rng) {
    Linear::create(store, prefix + ".w1", in, u_dim, rng);
    store.add(prefix + ".w2", Shape(u_dim), Init::Xavier, rng);
    return bind(store, prefix);
}

AlphaSim AlphaSim::bind(ParamStore& store, const std::string& prefix) {
    return {Linear::bind(store, prefix + ".w1"), store.get(prefix + ".w2")};
}

Tensor AlphaSim::operator()(const Tensor& h, const Tensor& u) const {
    if (u.rank() != 1 || u.size() != w2.size())
        throw DimensionError("alpha: u " + u.shape().str() + " vs " + w2.shape().str());
    return matmul(mul(w1(h), u), w2);
}

BetaSim BetaSim::create(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden,
                        std::mt19937_64& rng) {
    Linear::create(store, prefix + ".w2", 3 * dim, hidden, rng);
    Linear::create(store, prefix + ".w1", hidden, 1, rng);
    return bind(store, prefix);
}

BetaSim BetaSim::bind(ParamStore& store, const std::string& prefix) {
    return {Linear::bind(store, prefix + ".w2"), Linear::bind(store, prefix + ".w1")};
}

Tensor BetaSim::operator()(const Tensor& h, const Tensor& u) const {
    if (u.rank() != 1 || h.cols() != u.size() || 3 * u.size() != w2.weight.rows())
        throw DimensionError("beta: h " + h.shape().str() + ", u " + u.shape().str());
    if (h.rank() == 1) {
        Tensor out = w1(relu(w2(concat({h, u, mul(h, u)}, 0))));
        return reshape(out, Shape());
    }
    Tensor x = concat({h, repeat_rows(u, h.rows()), mul(h, u)}, 1);
    return reshape(w1(relu(w2(x))), Shape(h.rows()));
}

std::size_t argmax_index(std::span<const Real> v) {
    if (v.empty()) throw ContractError("argmax over an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

AnswerProposer::AnswerProposer(ParamStore& store, const Config& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    const std::size_t e = cfg.encoded_dim(), hid = cfg.proposer_hidden, a = cfg.proposer_attention_hidden();
    store.add("ap.att_h", Shape(e, a), Init::Xavier, rng);
    Linear::create(store, "ap.att_s", hid, a, rng);
    store.add("ap.att_v", Shape(a), Init::Xavier, rng);
    LstmParams::create(store, "ap.lstm", 2 * e, hid, rng);
    AlphaSim::create(store, "ap.alpha", hid, e, rng);
    BetaSim::create(store, "ap.beta", e, cfg.beta_hidden(), rng);
    bind_all(store);
}

AnswerProposer AnswerProposer::bind(ParamStore& store, const Config& cfg) {
    AnswerProposer ap;
    ap.cfg_ = cfg;
    ap.bind_all(store);
    return ap;
}

void AnswerProposer::bind_all(ParamStore& store) {
    att_h = store.get("ap.att_h");
    att_s = Linear::bind(store, "ap.att_s");
    att_v = store.get("ap.att_v");
    lstm = LstmParams::bind(store, "ap.lstm");
    alpha = AlphaSim::bind(store, "ap.alpha");
    beta = BetaSim::bind(store, "ap.beta");
}

AncestorAware AnswerProposer::encode_ancestor_aware(const ChainInput& in) const {
    if (!in.leaf.defined() || in.leaf.rank() != 2 || in.leaf.rows() == 0)
        throw ContractError("encode_ancestor_aware: empty leaf");
    const std::size_t e = in.leaf.cols();
    const bool attend = cfg_.proposer_attention && in.ancestors.defined() && in.ancestors.rows() > 0;
    Tensor pre;
    if (attend) pre = matmul(in.ancestors, att_h);
    AncestorAware out;
    LstmState s = lstm_zero_state(lstm);
    Tensor word = Tensor::zeros(Shape(e));
    Tensor ctx = Tensor::zeros(Shape(e));
    std::vector<Tensor> ys;
    for (std::size_t k = 0; k < in.leaf.rows(); ++k) {
        s = lstm_cell(concat({word, ctx}, 0), s, lstm);
        ys.push_back(s.h);
        if (attend) {
            Tensor scores = matmul(tanh(add(pre, att_s(s.h))), att_v);
            Tensor a = softmax_lastdim(scores);
            out.attentions.push_back(a);
            ctx = matmul(a, in.ancestors);
        }
        word = row(in.leaf, k);
    }
    out.states = stack_rows(ys);
    return out;
}

ProposalResult AnswerProposer::propose(const ChainInput& in) const {
    if (!in.candidates.defined() || in.candidates.rows() == 0 || in.candidates.rank() != 2)
        throw ContractError("propose: no candidates");
    ProposalResult r;
    r.encoded = encode_ancestor_aware(in);
    Tensor w = add(alpha(r.encoded.states, in.u_s), alpha(r.encoded.states, in.u_b));
    r.epsilon = softmax_lastdim(w);
    r.pooled = matmul(r.epsilon, in.leaf);
    r.scores = beta(in.candidates, r.pooled);
    r.best = argmax_index(r.scores.data());
    return r;
}

}  // namespace epar
