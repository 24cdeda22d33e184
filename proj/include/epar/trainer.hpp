#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "epar/model.hpp"

namespace epar {

struct WeakLabels {
    std::size_t hop1 = 0;
    std::size_t hopT = 0;
    bool has_hop1 = false;
    bool has_hopT = false;
    bool skip_de = false;  // no document mentions the answer
};

// hop1: best TF-IDF match for the query subject. hopT: uniform draw among
// answer-bearing documents other than hop1.
WeakLabels build_weak_labels(const QueryInstance& q, std::mt19937_64& rng, bool hop1_supervision = true);

struct LossBreakdown {
    Tensor total;
    Real de_hop1 = 0, de_hopT = 0, ap = 0, ea = 0, rerank = 0;
    bool de_skipped = false;
    std::size_t chains = 0;
    std::size_t prediction = 0;
};

// Teacher-forced exploration over every document, a gradient-free tree over
// the retrieved documents, the proposer on each chain and the assembler on
// the extracted sentences. Throws NumericError naming a non-finite term.
LossBreakdown joint_loss(const EparModel& model, const QueryInstance& q, const WeakLabels& labels,
                         const ForwardMode& mode, std::mt19937_64& rng);

// Independent stream for one instance at one position of one epoch.
std::mt19937_64 instance_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t position);
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

struct TrainOptions {
    std::filesystem::path out_dir;   // empty: nothing written
    bool resume = false;             // continue from out_dir/last.*
    std::size_t max_steps = 0;       // stop once the optimizer step count reaches this; 0: run every epoch
    std::function<void(const std::string&)> on_log;  // receives each JSONL line
    std::function<void(std::size_t step)> after_eval;  // called after each dev evaluation
};

struct TrainSummary {
    std::vector<Real> step_losses;
    double best_dev = -1.0;
    double last_dev = -1.0;
    std::size_t steps = 0;
    double seconds = 0.0;
    double seconds_to_best = 0.0;
    bool stopped_by_budget = false;
};

double accuracy(const EparModel& model, const std::vector<QueryInstance>& data);

TrainSummary train(EparModel& model, const std::vector<QueryInstance>& train_set, const std::vector<QueryInstance>& dev_set,
                   const TrainOptions& opts = {});

// Everything needed to rebuild a trained model: config, vocabulary, weights.
void save_model(const std::filesystem::path& dir, const EparModel& model, const std::string& tag);
struct LoadedModel {
    Config config;
    std::unique_ptr<Vocabulary> vocab;
    std::unique_ptr<EparModel> model;
};
LoadedModel load_model(const std::filesystem::path& dir, const std::string& tag = "best");

}  // namespace epar
