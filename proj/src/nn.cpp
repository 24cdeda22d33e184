#include "epar/nn.hpp"

#include <vector>

namespace epar {

Linear Linear::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                      std::mt19937_64& rng, Real bias_init) {
    Linear l;
    l.weight = store.add(prefix + ".w", Shape(in, out), Init::Xavier, rng);
    l.bias = store.add(prefix + ".b", Shape(out), Init::Constant, rng, bias_init);
    return l;
}

Linear Linear::bind(ParamStore& store, const std::string& prefix) {
    return {store.get(prefix + ".w"), store.get(prefix + ".b")};
}

LstmParams LstmParams::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                              std::mt19937_64& rng) {
    LstmParams p;
    p.wx = store.add(prefix + ".wx", Shape(in, 4 * hidden), Init::Xavier, rng);
    p.wh = store.add(prefix + ".wh", Shape(hidden, 4 * hidden), Init::Xavier, rng);
    p.b = store.add(prefix + ".b", Shape(4 * hidden), Init::Zeros, rng);
    // forget gate starts open
    auto b = p.b.mutable_data();
    for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
    return p;
}

LstmParams LstmParams::bind(ParamStore& store, const std::string& prefix) {
    return {store.get(prefix + ".wx"), store.get(prefix + ".wh"), store.get(prefix + ".b")};
}

GruParams GruParams::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                            std::mt19937_64& rng) {
    GruParams p;
    p.wx = store.add(prefix + ".wx", Shape(in, 3 * hidden), Init::Xavier, rng);
    p.uzr = store.add(prefix + ".uzr", Shape(hidden, 2 * hidden), Init::Xavier, rng);
    p.un = store.add(prefix + ".un", Shape(hidden, hidden), Init::Xavier, rng);
    p.b = store.add(prefix + ".b", Shape(3 * hidden), Init::Zeros, rng);
    return p;
}

GruParams GruParams::bind(ParamStore& store, const std::string& prefix) {
    return {store.get(prefix + ".wx"), store.get(prefix + ".uzr"), store.get(prefix + ".un"), store.get(prefix + ".b")};
}

LstmState lstm_zero_state(const LstmParams& p) {
    return {Tensor::zeros(Shape(p.hidden())), Tensor::zeros(Shape(p.hidden()))};
}

LstmState lstm_cell_projected(const Tensor& xproj, const LstmState& prev, const LstmParams& p) {
    const std::size_t h = p.hidden();
    if (xproj.size() != 4 * h) throw DimensionError("lstm_cell: projected input " + xproj.shape().str() + " for hidden " + std::to_string(h));
    if (prev.h.size() != h || prev.c.size() != h)
        throw DimensionError("lstm_cell: state " + prev.h.shape().str() + " for hidden " + std::to_string(h));
    Tensor gates = add(xproj, matmul(prev.h, p.wh));
    Tensor i = sigmoid(slice(gates, 0, h, 0));
    Tensor f = sigmoid(slice(gates, h, 2 * h, 0));
    Tensor g = tanh(slice(gates, 2 * h, 3 * h, 0));
    Tensor o = sigmoid(slice(gates, 3 * h, 4 * h, 0));
    Tensor c = add(mul(f, prev.c), mul(i, g));
    return {mul(o, tanh(c)), c};
}

LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmParams& p) {
    if (x.rank() != 1 || x.size() != p.input())
        throw DimensionError("lstm_cell: input " + x.shape().str() + " for input dim " + std::to_string(p.input()));
    return lstm_cell_projected(add(matmul(x, p.wx), p.b), prev, p);
}

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruParams& p) {
    const std::size_t h = p.hidden();
    if (x.rank() != 1 || x.size() != p.input())
        throw DimensionError("gru_cell: input " + x.shape().str() + " for input dim " + std::to_string(p.input()));
    if (h_prev.rank() != 1 || h_prev.size() != h)
        throw DimensionError("gru_cell: state " + h_prev.shape().str() + " for hidden " + std::to_string(h));
    Tensor xp = add(matmul(x, p.wx), p.b);
    Tensor hp = matmul(h_prev, p.uzr);
    Tensor z = sigmoid(add(slice(xp, 0, h, 0), slice(hp, 0, h, 0)));
    Tensor r = sigmoid(add(slice(xp, h, 2 * h, 0), slice(hp, h, 2 * h, 0)));
    Tensor n = tanh(add(slice(xp, 2 * h, 3 * h, 0), matmul(mul(r, h_prev), p.un)));
    return add(mul(one_minus(z), h_prev), mul(z, n));
}

Tensor run_lstm(const Tensor& xs, const LstmParams& p, Tensor* final_h) {
    if (xs.rank() != 2 || xs.cols() != p.input())
        throw DimensionError("run_lstm: input " + xs.shape().str() + " for input dim " + std::to_string(p.input()));
    Tensor proj = add(matmul(xs, p.wx), p.b);
    LstmState s = lstm_zero_state(p);
    std::vector<Tensor> hs;
    hs.reserve(xs.rows());
    for (std::size_t t = 0; t < xs.rows(); ++t) {
        s = lstm_cell_projected(row(proj, t), s, p);
        hs.push_back(s.h);
    }
    if (final_h) *final_h = s.h;
    return stack_rows(hs);
}

BiSequence run_bilstm(const Tensor& xs, const LstmParams& fwd, const LstmParams& bwd) {
    if (xs.rank() != 2 || xs.rows() == 0) throw DimensionError("run_bilstm: needs a non-empty matrix");
    BiSequence out;
    Tensor f = run_lstm(xs, fwd, &out.final_fwd);
    Tensor b = reverse_rows(run_lstm(reverse_rows(xs), bwd, &out.final_bwd));
    out.states = concat({f, b}, 1);
    return out;
}

HighwayLayer HighwayLayer::create(ParamStore& store, const std::string& prefix, std::size_t dim, std::mt19937_64& rng) {
    return {Linear::create(store, prefix + ".gate", dim, dim, rng, -1.0), Linear::create(store, prefix + ".hidden", dim, dim, rng)};
}

HighwayLayer HighwayLayer::bind(ParamStore& store, const std::string& prefix) {
    return {Linear::bind(store, prefix + ".gate"), Linear::bind(store, prefix + ".hidden")};
}

Tensor HighwayLayer::operator()(const Tensor& x) const {
    Tensor t = sigmoid(transform(x));
    return add(mul(t, relu(hidden(x))), mul(one_minus(t), x));
}

}  // namespace epar
