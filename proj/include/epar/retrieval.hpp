#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "epar/corpus.hpp"

namespace epar {

// Per-instance TF-IDF statistics. tf is the raw count over document length,
// idf = ln((1 + N) / (1 + df)) + 1, and document vectors are L2-normalised.
class TfidfIndex {
public:
    explicit TfidfIndex(const std::vector<Document>& docs);

    std::size_t num_documents() const { return counts_.size(); }
    std::size_t document_frequency(const std::string& term) const;
    double idf(const std::string& term) const;
    // Sum over distinct query terms present in the document of its normalised
    // tf-idf weight.
    double score(const std::vector<std::string>& query, std::size_t doc) const;
    std::vector<double> scores(const std::vector<std::string>& query) const;

private:
    std::vector<std::map<std::string, std::size_t>> counts_;
    std::vector<std::size_t> lengths_;
    std::vector<double> norms_;
    std::map<std::string, std::size_t> df_;
};

// Indices sorted by descending score, ties to the lower index.
std::vector<std::size_t> rank_by_score(const std::vector<double>& scores);

// Best document for the query subject, then the n_prime-1 documents closest
// to it. Returns every document when N < n_prime.
std::vector<std::size_t> two_hop_select(const QueryInstance& q, std::size_t n_prime);
std::vector<std::size_t> one_hop_select(const QueryInstance& q, std::size_t k);
std::vector<std::size_t> random_select(const QueryInstance& q, std::size_t k, std::uint64_t seed);

}  // namespace epar
