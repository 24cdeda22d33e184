#pragma once

#include <random>
#include <vector>

#include "epar/config.hpp"
#include "epar/corpus.hpp"
#include "epar/encoder.hpp"
#include "epar/nn.hpp"
#include "epar/proposer.hpp"

namespace epar {

struct KeySentence {
    std::size_t chain = 0;
    std::size_t doc = 0;
    std::size_t sentence = 0;
    bool fallback = false;
};

struct TokenProvenance {
    std::size_t chain = 0;
    std::size_t doc = 0;
    std::size_t sentence = 0;
    std::size_t token = 0;  // position within the document
    bool fallback = false;
};

struct AssembledContext {
    std::vector<KeySentence> sentences;
    std::vector<TokenProvenance> provenance;  // one entry per row of h'
    std::size_t length() const { return provenance.size(); }
};

// chains: instance document indices, root first. For each chain, the first
// sentence of the leaf containing that chain's proposal, else the nearest
// ancestor's, else the leaf's first sentence (flagged). Repeated
// (doc, sentence) pairs are kept once.
AssembledContext extract_key_sentences(const QueryInstance& q, const std::vector<std::vector<std::size_t>>& chains,
                                       const std::vector<std::size_t>& proposals);
// First sentence of every distinct document in the chains.
AssembledContext lead_sentences(const QueryInstance& q, const std::vector<std::vector<std::size_t>>& chains);
// Every sentence of every distinct document in the chains.
AssembledContext full_documents(const QueryInstance& q, const std::vector<std::vector<std::size_t>>& chains);

// Rows of H picked out by the provenance map: h' [K' x 2v].
Tensor gather_context(const EncodedInstance& enc, const AssembledContext& ctx);

struct BidafResult {
    Tensor similarity;  // S [K x J]
    Tensor fused;       // G [K x 8v]
};

// S_kj = w^T [h_k; u_j; h_k * u_j], context-to-query and query-to-context
// attention, G = [h; h_q; h * h_q; h * h_c].
BidafResult bidaf_attend(const Tensor& h, const Tensor& U, const Tensor& w_sim);

struct MatchResult {
    Tensor fused;
    Tensor distribution;  // over the words of h'
    Tensor pooled;        // [2v]
};

struct FinalPrediction {
    MatchResult match;
    Tensor scores;  // [L]
    std::size_t best = 0;
};

class EvidenceAssembler {
public:
    EvidenceAssembler() = default;
    EvidenceAssembler(ParamStore& store, const Config& cfg, std::mt19937_64& rng);
    static EvidenceAssembler bind(ParamStore& store, const Config& cfg);

    MatchResult bidaf_match(const Tensor& h, const Tensor& U_sub, const Tensor& U_bod,
                            const ForwardMode& mode = ForwardMode::eval()) const;
    FinalPrediction assemble_predict(const Tensor& h, const Tensor& U_sub, const Tensor& U_bod,
                                     const Tensor& candidates, const ForwardMode& mode = ForwardMode::eval()) const;

    Tensor w_sim;  // [6v]
    LstmParams model_f, model_b;
    Linear out;    // 2*hidden -> 1
    BetaSim beta;

private:
    void bind_all(ParamStore& store);
};

enum class VoteMode { Avg, Max };
// probs: one softmax(Score) vector per chain.
std::size_t vote(const std::vector<std::vector<Real>>& probs, VoteMode mode);

struct RerankResult {
    Tensor scores;  // one per chain
    std::size_t best_chain = 0;
};

// Refines each leaf against its ancestors with bidirectional attention,
// pools it with alpha weights against the query finals and scores it with
// beta against the chain's proposed candidate.
class Reranker {
public:
    Reranker() = default;
    Reranker(ParamStore& store, const Config& cfg, std::mt19937_64& rng);
    static Reranker bind(ParamStore& store, const Config& cfg);

    Tensor chain_score(const ChainInput& chain, const Tensor& proposal) const;
    RerankResult rerank(const std::vector<ChainInput>& chains, const std::vector<Tensor>& proposals) const;

    Tensor w_sim;
    Linear proj;  // 8v -> 2v
    AlphaSim alpha;
    BetaSim beta;

private:
    void bind_all(ParamStore& store);
};

}  // namespace epar
