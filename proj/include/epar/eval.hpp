#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "epar/corpus.hpp"
#include "epar/model.hpp"

namespace epar {

enum class Subset { All, FollowsMultiple, FollowsSingle, NotFollows };
Subset parse_subset(const std::string& name);
std::string to_string(Subset s);
bool in_subset(const QueryInstance& q, Subset s);

struct AccuracyResult {
    std::optional<double> rate;  // absent for an empty subset
    std::size_t total = 0;
    std::size_t correct = 0;
    std::size_t missing = 0;     // instances without a prediction, counted wrong
};

// predictions: instance id -> candidate index.
AccuracyResult accuracy(const std::map<std::string, std::size_t>& predictions, const std::vector<QueryInstance>& data,
                        Subset subset = Subset::All, std::vector<std::string>* warnings = nullptr);

// Ranked root-to-leaf paths (document index sets) for one instance.
using RankedPaths = std::vector<std::vector<std::size_t>>;

// Hit when one of the first k paths contains every gold document. Instances
// without a gold chain are skipped and counted in `excluded`.
struct RecallResult {
    double rate = 0.0;
    std::size_t counted = 0;
    std::size_t excluded = 0;
};
RecallResult chain_recall_at_k(const std::map<std::string, RankedPaths>& paths, const GoldChains& gold, std::size_t k);
// Hit when a document of the first k paths mentions the answer.
RecallResult answer_span_recall_at_k(const std::map<std::string, RankedPaths>& paths,
                                     const std::vector<QueryInstance>& data, std::size_t k);

enum class Selector { Random, OneHop, TwoHop, DE, TfidfDE };
Selector parse_selector(const std::string& name);
std::string to_string(Selector s);

// Paths a selector yields for recall@k. The TF-IDF and random baselines
// return one document set of size T-1+k; the explorer selectors return the
// tree's chains ranked by log-probability, built with t_w = k.
RankedPaths selector_paths(const EparModel& model, const QueryInstance& q, Selector sel, std::size_t k, std::uint64_t seed);

struct RecallTable {
    std::map<std::string, std::vector<double>> chain;   // selector -> recall@1..K
    std::map<std::string, std::vector<double>> answer;
    std::size_t instances = 0;
    std::size_t excluded = 0;
};
RecallTable analyze_chains(const EparModel& model, const std::vector<QueryInstance>& data, const GoldChains& gold,
                           const std::vector<Selector>& selectors, std::size_t max_k, std::uint64_t seed);

struct AblationRow {
    std::string name;
    AccuracyResult all, follows_multiple, follows_single;
};
// Full-doc, Lead-1, AP (assembler over proposer sentences), Single-chain,
// Avg-vote, Max-vote and, when the model has one, Reranker.
std::vector<AblationRow> ablation_rows(const EparModel& model, const std::vector<QueryInstance>& data);
AblationRow accuracy_row(const std::string& name, const std::map<std::string, std::size_t>& preds,
                         const std::vector<QueryInstance>& data);

}  // namespace epar

namespace epar {

// Reasoning tree, proposals, key sentences and final scores as a JSON
// document (pretty-printed).
std::string trace_instance(const EparModel& model, const QueryInstance& q);

}  // namespace epar
