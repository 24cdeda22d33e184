#pragma once

#include <optional>
#include <vector>

#include "epar/assembler.hpp"
#include "epar/config.hpp"
#include "epar/corpus.hpp"
#include "epar/encoder.hpp"
#include "epar/explorer.hpp"
#include "epar/params.hpp"
#include "epar/proposer.hpp"

namespace epar {

struct Inference {
    std::vector<std::size_t> retrieved;  // documents the tree was built over
    ReasoningTree tree;
    std::vector<ProposalResult> proposals;
    std::vector<std::vector<Real>> chain_probs;  // softmax of each chain's Score
    AssembledContext context;
    FinalPrediction final;
    std::size_t prediction = 0;  // according to Config::aggregation
    std::size_t single_chain = 0;
    std::size_t avg_vote = 0;
    std::size_t max_vote = 0;
    std::optional<std::size_t> reranked;
};

class EparModel {
public:
    EparModel(const Config& cfg, const Vocabulary& vocab);
    EparModel(const EparModel&) = delete;
    EparModel& operator=(const EparModel&) = delete;

    const Config& config() const { return cfg_; }
    const Vocabulary& vocabulary() const { return *vocab_; }

    // Documents the tree is built over: 2-hop TF-IDF when enabled, else all.
    std::vector<std::size_t> retrieve(const QueryInstance& q) const;
    ChainInput chain_input(const EncodedInstance& enc, const std::vector<std::size_t>& chain) const;
    AssembledContext sentences_for(const QueryInstance& q, const std::vector<std::vector<std::size_t>>& chains,
                                   const std::vector<std::size_t>& proposals, SentenceProvider provider) const;

    // Runs in evaluation mode without recording gradients.
    Inference infer(const QueryInstance& q) const;
    Inference infer(const QueryInstance& q, SentenceProvider provider) const;

    ParamStore params;
    Encoder encoder;
    DocumentExplorer explorer;
    AnswerProposer proposer;
    EvidenceAssembler assembler;
    std::optional<Reranker> reranker;

private:
    Config cfg_;
    const Vocabulary* vocab_;
};

std::vector<std::vector<std::size_t>> chain_documents(const ReasoningTree& tree);

}  // namespace epar
