#pragma once

#include <optional>
#include <random>
#include <vector>

#include "epar/config.hpp"
#include "epar/encoder.hpp"
#include "epar/nn.hpp"

namespace epar {

// The documents one exploration runs over: summaries, word states and the
// instance-level index of each row.
struct ExplorerInput {
    Tensor P;                       // [N x 2v]
    std::vector<Tensor> H;          // N x [K x 2v]
    Tensor u_s;
    std::vector<std::size_t> doc_ids;

    static ExplorerInput all(const EncodedInstance& enc);
    static ExplorerInput subset(const EncodedInstance& enc, const std::vector<std::size_t>& docs);
    std::size_t size() const { return H.size(); }
};

enum class RolloutMode { Sample, Greedy };

struct ForcedLabels {
    std::optional<std::size_t> hop1;  // positions within the ExplorerInput
    std::optional<std::size_t> hopT;
};

struct ReasoningChain {
    std::vector<std::size_t> docs;   // instance document indices
    std::vector<std::size_t> local;  // positions within the ExplorerInput
    std::vector<Tensor> chi;         // selection distribution at each hop
    Real log_prob = 0.0;
};

struct ReasoningTree {
    std::vector<ReasoningChain> chains;  // sorted by log_prob, highest first
    std::size_t root() const { return chains.front().docs.front(); }
};

struct WriteResult {
    Tensor memory;
    Tensor omega;  // word attention over the written document
};

class DocumentExplorer {
public:
    DocumentExplorer() = default;
    DocumentExplorer(ParamStore& store, const Config& cfg, std::mt19937_64& rng);
    static DocumentExplorer bind(ParamStore& store, const Config& cfg);

    Tensor initial_memory(const Tensor& u_s) const;
    Tensor read_logits(const Tensor& m, const Tensor& P) const;
    // Documents with mask 0 get probability exactly 0.
    Tensor read(const Tensor& m, const Tensor& P, const std::vector<std::uint8_t>& mask) const;
    WriteResult write(const Tensor& m, const Tensor& h) const;

    ReasoningChain rollout(const ExplorerInput& in, std::size_t T, RolloutMode mode, const ForcedLabels& forced = {},
                           std::mt19937_64* rng = nullptr) const;
    // Greedy root, top-t_w branches at hop 2, greedy afterwards.
    ReasoningTree build_tree(const ExplorerInput& in, std::size_t T, std::size_t t_w) const;

    Tensor w_read, w_write;  // [2v x g]
    GruParams gru;
    std::optional<Linear> init;

private:
    void bind_all(ParamStore& store);
    Config cfg_;
};

}  // namespace epar
