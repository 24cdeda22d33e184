#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "epar/corpus.hpp"

namespace epar {

enum class SummaryMode { SelfAttention, LastHiddenState };
enum class SentenceProvider { Proposer, Lead1, FullDoc };
enum class Aggregation { Assembler, SingleChain, AvgVote, MaxVote };

std::string to_string(SummaryMode m);
std::string to_string(SentenceProvider p);
std::string to_string(Aggregation a);

// Every knob of the model and the training loop. Stored as flat key=value
// text; unknown keys are rejected.
struct Config {
    // encoder
    std::size_t word_dim = 300;        // d
    std::size_t lstm_units = 100;      // v, BiLSTM outputs 2v
    std::size_t char_dim = 8;
    std::size_t char_width = 5;
    std::size_t char_filters = 0;      // 0 -> d/2
    std::size_t highway_layers = 2;
    std::size_t attention_dim = 0;     // self-attention hidden, 0 -> v
    SummaryMode summary = SummaryMode::SelfAttention;
    std::string embedding_file;        // optional pretrained vectors
    bool train_embeddings = false;     // word vectors stay fixed unless set
    double embedding_std = 0.1;        // N(0, std^2) for words without a pretrained vector
    double char_embedding_std = 0.1;

    // explorer
    std::size_t memory_dim = 0;        // 0 -> 2v
    std::size_t hops = 3;              // T
    std::size_t tree_width = 4;        // t_w
    std::size_t n_prime = 8;           // documents kept by TF-IDF retrieval
    bool use_tfidf = true;
    bool hop1_supervision = true;

    // proposer
    std::size_t proposer_hidden = 80;
    std::size_t proposer_attention_dim = 0;  // 0 -> proposer_hidden
    bool proposer_attention = true;

    // assembler
    std::size_t assembler_hidden = 80;
    std::size_t similarity_hidden = 0;  // beta hidden, 0 -> 2v
    SentenceProvider sentence_provider = SentenceProvider::Proposer;
    Aggregation aggregation = Aggregation::Assembler;
    bool reranker = false;

    // training
    double learning_rate = 0.001;
    std::size_t batch_size = 10;
    double clip_norm = 5.0;
    double dropout = 0.2;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    std::size_t eval_every = 0;        // batches between dev evaluations, 0 -> once per epoch
    double time_budget_seconds = 0.0;  // 0 -> unlimited

    std::size_t filters() const { return char_filters ? char_filters : word_dim / 2; }
    std::size_t self_attention_dim() const { return attention_dim ? attention_dim : lstm_units; }
    std::size_t encoded_dim() const { return 2 * lstm_units; }
    std::size_t memory() const { return memory_dim ? memory_dim : encoded_dim(); }
    std::size_t proposer_attention_hidden() const {
        return proposer_attention_dim ? proposer_attention_dim : proposer_hidden;
    }
    std::size_t beta_hidden() const { return similarity_hidden ? similarity_hidden : encoded_dim(); }

    void set(const std::string& key, const std::string& value);
    std::map<std::string, std::string> to_map() const;
    void validate() const;
};

// "full", "small" or "medhop".
Config preset(const std::string& name);
Config load_config(const std::filesystem::path& path, const std::string& base_preset = "small");
void save_config(const std::filesystem::path& path, const Config& cfg);

}  // namespace epar
