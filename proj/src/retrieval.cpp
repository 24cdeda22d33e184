#include "epar/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace epar {

TfidfIndex::TfidfIndex(const std::vector<Document>& docs) {
    for (const auto& d : docs) {
        std::map<std::string, std::size_t> c;
        for (const auto& t : d.tokens) ++c[t];
        for (const auto& [t, _] : c) ++df_[t];
        counts_.push_back(std::move(c));
        lengths_.push_back(d.tokens.size());
    }
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        double s = 0;
        for (const auto& [t, n] : counts_[i]) {
            double w = static_cast<double>(n) / static_cast<double>(lengths_[i]) * idf(t);
            s += w * w;
        }
        norms_.push_back(std::sqrt(s));
    }
}

std::size_t TfidfIndex::document_frequency(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

double TfidfIndex::idf(const std::string& term) const {
    const double n = static_cast<double>(counts_.size());
    return std::log((1.0 + n) / (1.0 + static_cast<double>(document_frequency(term)))) + 1.0;
}

double TfidfIndex::score(const std::vector<std::string>& query, std::size_t doc) const {
    if (doc >= counts_.size()) throw ContractError("tfidf_score: document " + std::to_string(doc) + " not indexed");
    if (norms_[doc] == 0.0) return 0.0;
    std::set<std::string> terms(query.begin(), query.end());
    double s = 0;
    for (const auto& t : terms) {
        auto it = counts_[doc].find(t);
        if (it == counts_[doc].end()) continue;
        s += static_cast<double>(it->second) / static_cast<double>(lengths_[doc]) * idf(t);
    }
    return s / norms_[doc];
}

std::vector<double> TfidfIndex::scores(const std::vector<std::string>& query) const {
    std::vector<double> out(counts_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = score(query, i);
    return out;
}

std::vector<std::size_t> rank_by_score(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

std::vector<std::size_t> two_hop_select(const QueryInstance& q, std::size_t n_prime) {
    if (n_prime == 0) throw ContractError("two_hop_select: n_prime must be >= 1");
    const std::size_t n = q.documents.size();
    TfidfIndex index(q.documents);
    const std::size_t first = rank_by_score(index.scores(q.query_subject_tokens)).front();
    std::vector<std::size_t> out = {first};
    if (n_prime == 1) return out;
    auto second = index.scores(q.documents[first].tokens);
    for (std::size_t i : rank_by_score(second)) {
        if (out.size() >= std::min(n, n_prime)) break;
        if (i != first) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> one_hop_select(const QueryInstance& q, std::size_t k) {
    TfidfIndex index(q.documents);
    auto ranked = rank_by_score(index.scores(q.query_subject_tokens));
    ranked.resize(std::min(k, ranked.size()));
    return ranked;
}

std::vector<std::size_t> random_select(const QueryInstance& q, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> idx(q.documents.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    k = std::min(k, idx.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + static_cast<std::size_t>(rng() % (idx.size() - i))]);
    idx.resize(k);
    return idx;
}

}  // namespace epar
