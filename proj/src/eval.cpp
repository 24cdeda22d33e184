#include "epar/eval.hpp"

#include <algorithm>
#include <set>

#include "epar/retrieval.hpp"

namespace epar {

Subset parse_subset(const std::string& name) {
    if (name == "all" || name.empty()) return Subset::All;
    if (name == "follows_multiple") return Subset::FollowsMultiple;
    if (name == "follows_single") return Subset::FollowsSingle;
    if (name == "not_follows") return Subset::NotFollows;
    throw ConfigError("unknown subset '" + name + "' (all, follows_multiple, follows_single, not_follows)");
}

std::string to_string(Subset s) {
    switch (s) {
        case Subset::All: return "all";
        case Subset::FollowsMultiple: return "follows_multiple";
        case Subset::FollowsSingle: return "follows_single";
        case Subset::NotFollows: return "not_follows";
    }
    return "?";
}

bool in_subset(const QueryInstance& q, Subset s) {
    if (s == Subset::All) return true;
    if (!q.annotation) return false;
    switch (s) {
        case Subset::FollowsMultiple: return q.annotation->follows && q.annotation->multiple;
        case Subset::FollowsSingle: return q.annotation->follows && !q.annotation->multiple;
        case Subset::NotFollows: return !q.annotation->follows;
        case Subset::All: break;
    }
    return true;
}

AccuracyResult accuracy(const std::map<std::string, std::size_t>& predictions, const std::vector<QueryInstance>& data,
                        Subset subset, std::vector<std::string>* warnings) {
    AccuracyResult r;
    for (const auto& q : data) {
        if (!q.answer_index || !in_subset(q, subset)) continue;
        ++r.total;
        auto it = predictions.find(q.instance_id);
        if (it == predictions.end()) {
            ++r.missing;
            if (warnings) warnings->push_back("no prediction for " + q.instance_id);
            continue;
        }
        if (it->second == *q.answer_index) ++r.correct;
    }
    if (r.total) r.rate = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

RecallResult chain_recall_at_k(const std::map<std::string, RankedPaths>& paths, const GoldChains& gold, std::size_t k) {
    RecallResult r;
    std::size_t hits = 0;
    for (const auto& [id, ranked] : paths) {
        auto g = gold.find(id);
        if (g == gold.end() || g->second.empty()) {
            ++r.excluded;
            continue;
        }
        ++r.counted;
        const std::set<std::size_t> need(g->second.begin(), g->second.end());
        for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
            const std::set<std::size_t> have(ranked[i].begin(), ranked[i].end());
            if (std::includes(have.begin(), have.end(), need.begin(), need.end())) {
                ++hits;
                break;
            }
        }
    }
    if (r.counted) r.rate = static_cast<double>(hits) / static_cast<double>(r.counted);
    return r;
}

RecallResult answer_span_recall_at_k(const std::map<std::string, RankedPaths>& paths,
                                     const std::vector<QueryInstance>& data, std::size_t k) {
    RecallResult r;
    std::size_t hits = 0;
    for (const auto& q : data) {
        auto it = paths.find(q.instance_id);
        if (it == paths.end() || !q.answer_index) {
            ++r.excluded;
            continue;
        }
        ++r.counted;
        const auto& answer = q.candidates[*q.answer_index];
        bool hit = false;
        for (std::size_t i = 0; i < std::min(k, it->second.size()) && !hit; ++i)
            for (std::size_t d : it->second[i])
                if (document_contains(q.documents[d], answer)) {
                    hit = true;
                    break;
                }
        hits += hit ? 1 : 0;
    }
    if (r.counted) r.rate = static_cast<double>(hits) / static_cast<double>(r.counted);
    return r;
}

Selector parse_selector(const std::string& name) {
    if (name == "random") return Selector::Random;
    if (name == "1hop") return Selector::OneHop;
    if (name == "2hop") return Selector::TwoHop;
    if (name == "de") return Selector::DE;
    if (name == "tfidf_de") return Selector::TfidfDE;
    throw ConfigError("unknown selector '" + name + "' (random, 1hop, 2hop, de, tfidf_de)");
}

std::string to_string(Selector s) {
    switch (s) {
        case Selector::Random: return "random";
        case Selector::OneHop: return "1hop";
        case Selector::TwoHop: return "2hop";
        case Selector::DE: return "de";
        case Selector::TfidfDE: return "tfidf_de";
    }
    return "?";
}

RankedPaths selector_paths(const EparModel& model, const QueryInstance& q, Selector sel, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ContractError("selector_paths: k must be >= 1");
    const std::size_t T = model.config().hops;
    const std::size_t budget = T - 1 + k;
    switch (sel) {
        case Selector::Random: return {random_select(q, budget, seed)};
        case Selector::OneHop: return {one_hop_select(q, budget)};
        case Selector::TwoHop: return {two_hop_select(q, budget)};
        case Selector::DE:
        case Selector::TfidfDE: break;
    }
    NoGradGuard no_grad;
    EncodedInstance enc = model.encoder.encode(q, ForwardMode::eval());
    std::vector<std::size_t> docs;
    if (sel == Selector::TfidfDE) {
        docs = two_hop_select(q, model.config().n_prime);
    } else {
        docs.resize(q.documents.size());
        for (std::size_t i = 0; i < docs.size(); ++i) docs[i] = i;
    }
    ExplorerInput in = ExplorerInput::subset(enc, docs);
    ReasoningTree tree = model.explorer.build_tree(in, std::min(T, in.size()), k);
    return chain_documents(tree);
}

RecallTable analyze_chains(const EparModel& model, const std::vector<QueryInstance>& data, const GoldChains& gold,
                           const std::vector<Selector>& selectors, std::size_t max_k, std::uint64_t seed) {
    RecallTable table;
    table.instances = data.size();
    for (Selector sel : selectors) {
        const std::string name = to_string(sel);
        std::vector<std::map<std::string, RankedPaths>> per_k(max_k + 1);
        const bool tree = sel == Selector::DE || sel == Selector::TfidfDE;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& q = data[i];
            const std::uint64_t s = seed + i;
            if (tree) {
                // one tree of width max_k serves every k: top-k chains by log-probability
                RankedPaths all = selector_paths(model, q, sel, max_k, s);
                for (std::size_t k = 1; k <= max_k; ++k)
                    per_k[k][q.instance_id] = RankedPaths(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(k, all.size())));
            } else {
                for (std::size_t k = 1; k <= max_k; ++k) per_k[k][q.instance_id] = selector_paths(model, q, sel, k, s);
            }
        }
        for (std::size_t k = 1; k <= max_k; ++k) {
            RecallResult c = chain_recall_at_k(per_k[k], gold, k);
            table.chain[name].push_back(c.rate);
            table.excluded = c.excluded;
            table.answer[name].push_back(answer_span_recall_at_k(per_k[k], data, k).rate);
        }
    }
    return table;
}

AblationRow accuracy_row(const std::string& name, const std::map<std::string, std::size_t>& preds,
                         const std::vector<QueryInstance>& data) {
    return {name, accuracy(preds, data, Subset::All), accuracy(preds, data, Subset::FollowsMultiple),
            accuracy(preds, data, Subset::FollowsSingle)};
}

std::vector<AblationRow> ablation_rows(const EparModel& model, const std::vector<QueryInstance>& data) {
    std::map<std::string, std::size_t> full_doc, lead1, ap, single, avg, mx, rr;
    for (const auto& q : data) {
        Inference r = model.infer(q, SentenceProvider::Proposer);
        ap[q.instance_id] = r.final.best;
        single[q.instance_id] = r.single_chain;
        avg[q.instance_id] = r.avg_vote;
        mx[q.instance_id] = r.max_vote;
        if (r.reranked) rr[q.instance_id] = *r.reranked;
        lead1[q.instance_id] = model.infer(q, SentenceProvider::Lead1).final.best;
        full_doc[q.instance_id] = model.infer(q, SentenceProvider::FullDoc).final.best;
    }
    std::vector<AblationRow> rows = {accuracy_row("Full-doc", full_doc, data), accuracy_row("Lead-1", lead1, data),
                                     accuracy_row("AP", ap, data),           accuracy_row("Single-chain", single, data),
                                     accuracy_row("Avg-vote", avg, data),    accuracy_row("Max-vote", mx, data)};
    if (model.reranker) rows.push_back(accuracy_row("Reranker", rr, data));
    return rows;
}

}  // namespace epar

#include "json.hpp"

namespace epar {

namespace {

nlohmann::json top_entries(std::span<const Real> v, const std::vector<std::size_t>& ids, std::size_t n) {
    std::vector<double> d(v.begin(), v.end());
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i : rank_by_score(d)) {
        if (out.size() == n) break;
        out.push_back({ids.empty() ? i : ids[i], d[i]});
    }
    return out;
}

std::string join(const std::vector<std::string>& toks, std::size_t b, std::size_t e) {
    std::string s;
    for (std::size_t i = b; i < e; ++i) s += (i > b ? " " : "") + toks[i];
    return s;
}

}  // namespace

std::string trace_instance(const EparModel& model, const QueryInstance& q) {
    Inference r = model.infer(q);
    nlohmann::json j;
    j["id"] = q.instance_id;
    j["retrieved"] = r.retrieved;
    j["root"] = r.tree.root();
    j["chains"] = nlohmann::json::array();
    for (std::size_t c = 0; c < r.tree.chains.size(); ++c) {
        const auto& ch = r.tree.chains[c];
        nlohmann::json hops = nlohmann::json::array();
        for (const auto& chi : ch.chi) hops.push_back(top_entries(chi.data(), r.retrieved, 5));
        const auto& p = r.proposals[c];
        const auto& leaf = q.documents[ch.docs.back()].tokens;
        nlohmann::json words = nlohmann::json::array();
        std::vector<double> eps(p.epsilon.data().begin(), p.epsilon.data().end());
        for (std::size_t i : rank_by_score(eps)) {
            if (words.size() == 5) break;
            words.push_back({leaf[i], eps[i]});
        }
        j["chains"].push_back({{"docs", ch.docs},
                               {"log_prob", ch.log_prob},
                               {"top_chi", hops},
                               {"proposal", p.best},
                               {"proposal_text", q.candidate_texts[p.best]},
                               {"top_words", words}});
    }
    j["sentences"] = nlohmann::json::array();
    for (const auto& ks : r.context.sentences) {
        const auto& d = q.documents[ks.doc];
        const Span sp = d.sentence_spans[ks.sentence];
        j["sentences"].push_back({{"chain", ks.chain},
                                  {"doc", ks.doc},
                                  {"sentence", ks.sentence},
                                  {"fallback", ks.fallback},
                                  {"text", join(d.tokens, sp.begin, sp.end)}});
    }
    j["scores"] = std::vector<double>(r.final.scores.data().begin(), r.final.scores.data().end());
    j["prediction"] = r.prediction;
    j["prediction_text"] = q.candidate_texts[r.prediction];
    if (q.answer_index) j["answer"] = *q.answer_index;
    return j.dump(2);
}

}  // namespace epar
