#pragma once

#include <random>
#include <string>
#include <vector>

#include "epar/config.hpp"
#include "epar/corpus.hpp"
#include "epar/nn.hpp"
#include "epar/params.hpp"

namespace epar {

struct EncodedInstance {
    std::vector<Tensor> H;           // per document [K x 2v]
    std::vector<Tensor> P;           // per document [2v]
    Tensor U_sub;                    // [J_s x 2v]
    Tensor U_bod;                    // [J_b x 2v]
    Tensor u_s;                      // [2v]
    Tensor u_b;                      // [2v]
    std::vector<Tensor> candidates;  // per candidate [2v]
    std::vector<bool> candidate_mentioned;

    std::size_t num_documents() const { return H.size(); }
    Tensor P_matrix() const { return stack_rows(P); }
    Tensor candidate_matrix() const { return stack_rows(candidates); }
    Tensor query_matrix() const { return concat({U_sub, U_bod}, 0); }
};

class Encoder {
public:
    Encoder() = default;
    // Registers parameters under "enc." and copies the vocabulary vectors
    // into the word table.
    Encoder(ParamStore& store, const Config& cfg, const Vocabulary& vocab, std::mt19937_64& rng);
    static Encoder bind(ParamStore& store, const Config& cfg, const Vocabulary& vocab);

    // Char-CNN + word vector -> linear -> Highway stack, one row per token.
    Tensor embed_words(const std::vector<std::string>& tokens, const ForwardMode& mode) const;
    // Embeds several token sequences in one batch.
    std::vector<Tensor> embed_many(const std::vector<const std::vector<std::string>*>& seqs,
                                   const ForwardMode& mode) const;
    BiSequence encode_sequence(const Tensor& embedded, const ForwardMode& mode) const;

    Tensor self_attention_weights(const Tensor& H) const;  // [K]
    Tensor summarize(const BiSequence& seq) const;         // [2v]

    EncodedInstance encode(const QueryInstance& q, const ForwardMode& mode) const;

    const Config& config() const { return cfg_; }

    Tensor word_table, char_table;
    Tensor conv_w, conv_b;        // [(width*char_dim) x filters], [filters]
    Linear merge;                 // (d + filters) -> d
    std::vector<HighwayLayer> highway;
    LstmParams fwd, bwd;
    Linear att1;                  // 2v -> att
    Linear att2;                  // att -> 1

private:
    void bind_all(ParamStore& store);
    Tensor char_features(const std::vector<std::string>& tokens) const;

    Config cfg_;
    const Vocabulary* vocab_ = nullptr;
};

}  // namespace epar
