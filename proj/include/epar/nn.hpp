#pragma once

// Recurrent cells and small layers shared by every module.

#include <random>
#include <string>
#include <utility>

#include "epar/params.hpp"
#include "epar/tensor.hpp"

namespace epar {

// Training flag plus the dropout source for one forward pass.
struct ForwardMode {
    bool training = false;
    Real dropout_rate = 0.0;
    std::mt19937_64* rng = nullptr;

    Tensor drop(const Tensor& x) const {
        if (!training || dropout_rate <= 0.0 || !rng) return x;
        return dropout(x, dropout_rate, true, *rng);
    }
    static ForwardMode eval() { return {}; }
};

struct Linear {
    Tensor weight;  // [in x out]
    Tensor bias;    // [out]

    static Linear create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                         std::mt19937_64& rng, Real bias_init = 0.0);
    static Linear bind(ParamStore& store, const std::string& prefix);
    // x: [in] or [m x in]
    Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
};

// Gate layout [input | forget | candidate | output]:
//   c' = f*c + i*g,  h' = o*tanh(c').
struct LstmParams {
    Tensor wx;  // [in x 4h]
    Tensor wh;  // [h x 4h]
    Tensor b;   // [4h]

    std::size_t hidden() const { return wh.rows(); }
    std::size_t input() const { return wx.rows(); }
    static LstmParams create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                             std::mt19937_64& rng);
    static LstmParams bind(ParamStore& store, const std::string& prefix);
};

// Update/reset/candidate convention:
//   z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br),
//   n = tanh(x Wn + (r*h) Un + bn),  h' = (1-z)*h + z*n.
struct GruParams {
    Tensor wx;   // [in x 3h]  (z | r | n)
    Tensor uzr;  // [h x 2h]
    Tensor un;   // [h x h]
    Tensor b;    // [3h]

    std::size_t hidden() const { return un.rows(); }
    std::size_t input() const { return wx.rows(); }
    static GruParams create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                            std::mt19937_64& rng);
    static GruParams bind(ParamStore& store, const std::string& prefix);
};

struct LstmState {
    Tensor h;
    Tensor c;
};

LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmParams& p);
// Same cell with x Wx + b already computed.
LstmState lstm_cell_projected(const Tensor& xproj, const LstmState& prev, const LstmParams& p);
LstmState lstm_zero_state(const LstmParams& p);

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruParams& p);

struct BiSequence {
    Tensor states;     // [len x 2h]: forward half, then backward half
    Tensor final_fwd;  // forward state after the last position
    Tensor final_bwd;  // backward state after position 0
    Tensor finals() const { return concat({final_fwd, final_bwd}, 0); }
};

// Runs an LSTM over the rows of `xs`.
Tensor run_lstm(const Tensor& xs, const LstmParams& p, Tensor* final_h = nullptr);
BiSequence run_bilstm(const Tensor& xs, const LstmParams& fwd, const LstmParams& bwd);

struct HighwayLayer {
    Linear transform;  // gate
    Linear hidden;

    static HighwayLayer create(ParamStore& store, const std::string& prefix, std::size_t dim, std::mt19937_64& rng);
    static HighwayLayer bind(ParamStore& store, const std::string& prefix);
    // y = t * relu(x Wh + bh) + (1 - t) * x,  t = sigmoid(x Wt + bt)
    Tensor operator()(const Tensor& x) const;
};

}  // namespace epar
