#pragma once

#include <random>
#include <string>
#include <vector>

#include "epar/config.hpp"
#include "epar/nn.hpp"

namespace epar {

// alpha(h, u) = W2^T ((W1 h + b1) * u). Rows of a matrix h are scored
// independently.
struct AlphaSim {
    Linear w1;  // in -> u_dim
    Tensor w2;  // [u_dim]

    static AlphaSim create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t u_dim,
                           std::mt19937_64& rng);
    static AlphaSim bind(ParamStore& store, const std::string& prefix);
    Tensor operator()(const Tensor& h, const Tensor& u) const;
};

// beta(h, u) = W1 relu(W2 [h; u; h*u] + b2) + b1.
struct BetaSim {
    Linear w2;  // 3*dim -> hidden
    Linear w1;  // hidden -> 1

    static BetaSim create(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden,
                          std::mt19937_64& rng);
    static BetaSim bind(ParamStore& store, const std::string& prefix);
    // h: [dim] -> scalar, or [L x dim] -> [L]
    Tensor operator()(const Tensor& h, const Tensor& u) const;
};

// Lowest index among the maxima.
std::size_t argmax_index(std::span<const Real> v);

struct ChainInput {
    Tensor leaf;       // [K x 2v]
    Tensor ancestors;  // [A x 2v], undefined when the chain has one document
    Tensor u_s, u_b;
    Tensor candidates;  // [L x 2v]
};

struct AncestorAware {
    Tensor states;                   // y, [K x hidden]
    std::vector<Tensor> attentions;  // a^k over ancestor positions (empty without ancestors)
};

struct ProposalResult {
    AncestorAware encoded;
    Tensor epsilon;  // [K]
    Tensor pooled;   // [2v]
    Tensor scores;   // [L]
    std::size_t best = 0;
};

class AnswerProposer {
public:
    AnswerProposer() = default;
    AnswerProposer(ParamStore& store, const Config& cfg, std::mt19937_64& rng);
    static AnswerProposer bind(ParamStore& store, const Config& cfg);

    AncestorAware encode_ancestor_aware(const ChainInput& in) const;
    ProposalResult propose(const ChainInput& in) const;
    bool attention_enabled() const { return cfg_.proposer_attention; }

    Tensor att_h;    // [2v x a]
    Linear att_s;    // hidden -> a, carries the shared bias
    Tensor att_v;    // [a]
    LstmParams lstm;  // input [word; context] = 4v
    AlphaSim alpha;
    BetaSim beta;

private:
    void bind_all(ParamStore& store);
    Config cfg_;
};

}  // namespace epar
