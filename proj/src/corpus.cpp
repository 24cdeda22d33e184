#include "epar/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace epar {

using nlohmann::json;

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool is_terminator(const std::string& t) { return t == "." || t == "!" || t == "?"; }

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// ___MASK12___ style placeholders.
bool is_mask_placeholder(std::string_view w) {
    auto pos = lower(std::string(w)).find("mask");
    return w.size() > 4 && w.front() == '_' && w.back() == '_' && pos != std::string::npos;
}

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

std::size_t Document::sentence_of(std::size_t token) const {
    for (std::size_t s = 0; s < sentence_spans.size(); ++s)
        if (token >= sentence_spans[s].begin && token < sentence_spans[s].end) return s;
    throw ContractError("token " + std::to_string(token) + " outside document " + std::to_string(id));
}

Tokenized tokenize(std::string_view text) {
    Tokenized out;
    std::size_t sent_begin = 0;
    std::size_t i = 0;
    const std::size_t n = text.size();
    auto close_sentence = [&] {
        if (out.tokens.size() > sent_begin) {
            out.sentence_spans.push_back({sent_begin, out.tokens.size()});
            sent_begin = out.tokens.size();
        }
    };
    while (i < n) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (c == '@' && i + 1 < n && is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
            std::size_t j = i + 1;
            while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
            out.tokens.emplace_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        if (is_word_byte(c)) {
            std::size_t j = i;
            while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
            std::string_view w = text.substr(i, j - i);
            out.tokens.push_back(is_mask_placeholder(w) ? std::string(w) : lower(std::string(w)));
            i = j;
            continue;
        }
        out.tokens.emplace_back(1, static_cast<char>(c));
        ++i;
        if (is_terminator(out.tokens.back()) && (i == n || std::isspace(static_cast<unsigned char>(text[i]))))
            close_sentence();
    }
    close_sentence();
    return out;
}

std::vector<std::string> tokenize_words(std::string_view text) { return tokenize(text).tokens; }

Document make_document(std::size_t id, std::string_view text) {
    Tokenized t = tokenize(text);
    Document d;
    d.id = id;
    d.tokens = std::move(t.tokens);
    d.sentence_spans = std::move(t.sentence_spans);
    for (const auto& w : d.tokens) d.char_tokens.push_back(w.substr(0, kMaxWordChars));
    return d;
}

std::pair<std::vector<std::string>, std::vector<std::string>> parse_query(std::string_view query) {
    auto fields = split_ws(query);
    if (fields.empty()) throw IngestionError("empty query");
    std::vector<std::string> body;
    std::string part;
    for (char c : fields[0]) {
        if (c == '_') {
            if (!part.empty()) body.push_back(lower(part));
            part.clear();
        } else {
            part.push_back(c);
        }
    }
    if (!part.empty()) body.push_back(lower(part));
    std::string rest;
    for (std::size_t i = 1; i < fields.size(); ++i) rest += (i > 1 ? " " : "") + fields[i];
    return {body, tokenize_words(rest)};
}

QueryInstance instance_from_record(const RawRecord& rec, bool masked, std::vector<std::string>* warnings) {
    QueryInstance q;
    q.instance_id = rec.id;
    q.masked = masked;
    if (rec.supports.empty()) throw IngestionError("instance " + rec.id + ": empty supports");
    if (rec.candidates.empty()) throw IngestionError("instance " + rec.id + ": no candidates");
    try {
        auto [body, subject] = parse_query(rec.query);
        q.query_body_tokens = std::move(body);
        q.query_subject_tokens = std::move(subject);
    } catch (const IngestionError& e) {
        throw IngestionError("instance " + rec.id + ": " + e.what());
    }
    if (q.query_body_tokens.empty() || q.query_subject_tokens.empty())
        throw IngestionError("instance " + rec.id + ": query needs a relation and a subject");
    auto fields = split_ws(rec.query);
    q.relation = fields.front();
    for (std::size_t i = 0; i < rec.supports.size(); ++i) {
        Document d = make_document(i, rec.supports[i]);
        if (d.tokens.empty()) throw IngestionError("instance " + rec.id + ": support " + std::to_string(i) + " is empty");
        q.documents.push_back(std::move(d));
    }
    for (const auto& c : rec.candidates) {
        auto toks = tokenize_words(c);
        if (toks.empty()) throw IngestionError("instance " + rec.id + ": empty candidate");
        q.candidates.push_back(std::move(toks));
        q.candidate_texts.push_back(c);
    }
    if (rec.answer) {
        auto ans = tokenize_words(*rec.answer);
        auto it = std::find(q.candidates.begin(), q.candidates.end(), ans);
        if (it == q.candidates.end()) {
            if (warnings) warnings->push_back("instance " + rec.id + ": answer '" + *rec.answer + "' not among candidates");
        } else {
            q.answer_index = static_cast<std::size_t>(it - q.candidates.begin());
        }
    }
    return q;
}

std::vector<RawRecord> read_qangaroo_records(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IngestionError("cannot open " + path.string());
    json doc;
    try {
        is >> doc;
    } catch (const json::exception& e) {
        throw IngestionError(path.string() + ": malformed JSON: " + e.what());
    }
    if (!doc.is_array()) throw IngestionError(path.string() + ": expected a JSON array of instances");
    std::vector<RawRecord> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& o = doc[i];
        std::string id = o.is_object() && o.contains("id") && o["id"].is_string() ? o["id"].get<std::string>()
                                                                                   : "#" + std::to_string(i);
        try {
            RawRecord r;
            r.id = id;
            r.query = o.at("query").get<std::string>();
            r.candidates = o.at("candidates").get<std::vector<std::string>>();
            r.supports = o.at("supports").get<std::vector<std::string>>();
            if (o.contains("answer") && !o["answer"].is_null()) r.answer = o["answer"].get<std::string>();
            if (!o.contains("id")) throw IngestionError("missing field 'id'");
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw IngestionError("instance " + id + ": " + e.what());
        } catch (const IngestionError& e) {
            throw IngestionError("instance " + id + ": " + e.what());
        }
    }
    return out;
}

void write_qangaroo_records(const std::filesystem::path& path, const std::vector<RawRecord>& records) {
    json arr = json::array();
    for (const auto& r : records) {
        json o;
        o["id"] = r.id;
        o["query"] = r.query;
        o["candidates"] = r.candidates;
        if (r.answer) o["answer"] = *r.answer;
        o["supports"] = r.supports;
        arr.push_back(std::move(o));
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << arr.dump(1) << '\n';
}

std::vector<QueryInstance> load_qangaroo(const std::filesystem::path& path, bool masked, std::vector<std::string>* warnings) {
    std::vector<QueryInstance> out;
    for (const auto& r : read_qangaroo_records(path)) out.push_back(instance_from_record(r, masked, warnings));
    return out;
}

std::map<std::string, Annotation> load_annotations(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IngestionError("cannot open " + path.string());
    json doc;
    try {
        is >> doc;
    } catch (const json::exception& e) {
        throw IngestionError(path.string() + ": malformed JSON: " + e.what());
    }
    std::map<std::string, Annotation> out;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string v = it.value().get<std::string>();
        if (v == "follows_multiple")
            out[it.key()] = {true, true};
        else if (v == "follows_single")
            out[it.key()] = {true, false};
        else if (v == "not_follows")
            out[it.key()] = {false, false};
        else
            throw IngestionError("annotation for " + it.key() + ": unknown value '" + v + "'");
    }
    return out;
}

void write_annotations(const std::filesystem::path& path, const std::map<std::string, Annotation>& ann) {
    json o = json::object();
    for (const auto& [id, a] : ann) o[id] = !a.follows ? "not_follows" : a.multiple ? "follows_multiple" : "follows_single";
    std::ofstream os(path, std::ios::trunc);
    os << o.dump(1) << '\n';
}

void apply_annotations(std::vector<QueryInstance>& instances, const std::map<std::string, Annotation>& ann) {
    for (auto& q : instances) {
        auto it = ann.find(q.instance_id);
        if (it != ann.end()) q.annotation = it->second;
    }
}

GoldChains load_gold_chains(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IngestionError("cannot open " + path.string());
    json doc;
    try {
        is >> doc;
        GoldChains out;
        for (auto it = doc.begin(); it != doc.end(); ++it) out[it.key()] = it.value().get<std::vector<std::size_t>>();
        return out;
    } catch (const json::exception& e) {
        throw IngestionError(path.string() + ": " + e.what());
    }
}

void write_gold_chains(const std::filesystem::path& path, const GoldChains& chains) {
    json o = json::object();
    for (const auto& [id, c] : chains) o[id] = c;
    std::ofstream os(path, std::ios::trunc);
    os << o.dump() << '\n';
}

// ---- mentions -------------------------------------------------------------

namespace {

bool match_at(const std::vector<std::string>& tokens, std::size_t start, std::size_t end,
              const std::vector<std::string>& phrase) {
    if (phrase.empty() || start + phrase.size() > end) return false;
    for (std::size_t k = 0; k < phrase.size(); ++k)
        if (tokens[start + k] != phrase[k]) return false;
    return true;
}

}  // namespace

std::vector<Mention> find_mentions(const QueryInstance& instance, const std::vector<std::string>& phrase) {
    std::vector<Mention> out;
    if (phrase.empty()) return out;
    for (std::size_t d = 0; d < instance.documents.size(); ++d) {
        const auto& toks = instance.documents[d].tokens;
        for (std::size_t s = 0; s + phrase.size() <= toks.size(); ++s)
            if (match_at(toks, s, toks.size(), phrase)) out.push_back({d, s, s + phrase.size()});
    }
    return out;
}

std::vector<std::vector<Mention>> locate_candidate_mentions(const QueryInstance& instance) {
    std::vector<std::vector<Mention>> out;
    out.reserve(instance.candidates.size());
    for (const auto& c : instance.candidates) out.push_back(find_mentions(instance, c));
    return out;
}

bool sentence_contains(const Document& doc, std::size_t sentence, const std::vector<std::string>& phrase) {
    const Span sp = doc.sentence_spans.at(sentence);
    for (std::size_t s = sp.begin; s < sp.end; ++s)
        if (match_at(doc.tokens, s, sp.end, phrase)) return true;
    return false;
}

bool document_contains(const Document& doc, const std::vector<std::string>& phrase) {
    for (std::size_t s = 0; s < doc.tokens.size(); ++s)
        if (match_at(doc.tokens, s, doc.tokens.size(), phrase)) return true;
    return false;
}

// ---- vocabulary -----------------------------------------------------------

std::size_t Vocabulary::word_id(const std::string& w) const {
    auto it = word_ids.find(w);
    return it == word_ids.end() ? kUnk : it->second;
}

std::size_t Vocabulary::char_id(char c) const {
    auto it = char_ids.find(c);
    return it == char_ids.end() ? 1 : it->second;
}

std::vector<std::size_t> Vocabulary::ids(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(word_id(t));
    return out;
}

std::vector<std::size_t> Vocabulary::char_ids_padded(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> out(tokens.size() * kMaxWordChars, 0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& w = tokens[i];
        for (std::size_t k = 0; k < std::min(w.size(), kMaxWordChars); ++k) out[i * kMaxWordChars + k] = char_id(w[k]);
    }
    return out;
}

Vocabulary build_vocabulary(const std::vector<QueryInstance>& train, std::size_t dim, std::uint64_t seed, Real init_std,
                            const std::optional<std::filesystem::path>& embedding_file, VocabularyReport* report) {
    if (dim == 0) throw ConfigError("embedding dimension must be positive");
    std::set<std::string> words;
    auto take = [&](const std::vector<std::string>& toks) { words.insert(toks.begin(), toks.end()); };
    for (const auto& q : train) {
        take(q.query_body_tokens);
        take(q.query_subject_tokens);
        for (const auto& d : q.documents) take(d.tokens);
        for (const auto& c : q.candidates) take(c);
    }
    Vocabulary v;
    v.dim = dim;
    v.words = {"<pad>", "<unk>"};
    for (const auto& w : words) v.words.push_back(w);
    for (std::size_t i = 0; i < v.words.size(); ++i) v.word_ids[v.words[i]] = i;
    std::set<char> chars;
    for (const auto& w : words)
        for (std::size_t k = 0; k < std::min(w.size(), kMaxWordChars); ++k) chars.insert(w[k]);
    v.chars = {'\0', '\1'};
    for (char c : chars) v.chars.push_back(c);
    for (std::size_t i = 2; i < v.chars.size(); ++i) v.char_ids[v.chars[i]] = i;

    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> normal(0.0, init_std);
    v.embeddings.assign(v.size() * dim, 0.0);
    for (std::size_t i = dim; i < v.embeddings.size(); ++i) v.embeddings[i] = normal(rng);

    VocabularyReport rep;
    if (embedding_file) {
        std::ifstream is(*embedding_file);
        if (!is) throw ConfigError("cannot open embedding file " + embedding_file->string());
        std::string line;
        std::optional<std::size_t> file_dim;
        std::vector<char> seen(v.size(), 0);
        while (std::getline(is, line)) {
            std::istringstream ls(line);
            std::string word;
            if (!(ls >> word)) continue;
            std::vector<Real> vec;
            std::string tok;
            bool ok = true;
            while (ls >> tok) {
                try {
                    std::size_t used = 0;
                    vec.push_back(std::stod(tok, &used));
                    if (used != tok.size()) ok = false;
                } catch (const std::exception&) {
                    ok = false;
                }
            }
            if (!ok || vec.empty()) {
                ++rep.skipped_lines;
                continue;
            }
            if (!file_dim) {
                file_dim = vec.size();
                if (*file_dim != dim)
                    throw ConfigError("embedding file dimension " + std::to_string(*file_dim) + " does not match configured d=" +
                                      std::to_string(dim));
            }
            if (vec.size() != *file_dim) {
                ++rep.skipped_lines;
                continue;
            }
            auto it = v.word_ids.find(lower(word));
            if (it == v.word_ids.end() || it->second < 2 || seen[it->second]) continue;
            seen[it->second] = 1;
            std::copy(vec.begin(), vec.end(), v.embeddings.begin() + static_cast<std::ptrdiff_t>(it->second * dim));
            ++rep.matched;
        }
    }
    rep.coverage = v.size() > 2 ? static_cast<double>(rep.matched) / static_cast<double>(v.size() - 2) : 0.0;
    if (report) *report = rep;
    return v;
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
    json o;
    o["dim"] = vocab.dim;
    o["words"] = vocab.words;
    std::string chars(vocab.chars.begin() + 2, vocab.chars.end());
    std::vector<int> codes;
    for (char c : chars) codes.push_back(static_cast<unsigned char>(c));
    o["chars"] = codes;
    o["embeddings"] = vocab.embeddings;
    std::ofstream os(path, std::ios::trunc);
    os << o.dump() << '\n';
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IngestionError("cannot open vocabulary " + path.string());
    json o;
    is >> o;
    Vocabulary v;
    v.dim = o.at("dim").get<std::size_t>();
    v.words = o.at("words").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < v.words.size(); ++i) v.word_ids[v.words[i]] = i;
    v.chars = {'\0', '\1'};
    for (int c : o.at("chars").get<std::vector<int>>()) v.chars.push_back(static_cast<char>(c));
    for (std::size_t i = 2; i < v.chars.size(); ++i) v.char_ids[v.chars[i]] = i;
    if (o.contains("embeddings")) v.embeddings = o.at("embeddings").get<std::vector<Real>>();
    else v.embeddings.assign(v.size() * v.dim, 0.0);
    if (v.embeddings.size() != v.size() * v.dim)
        throw IngestionError("vocabulary " + path.string() + ": embedding matrix does not match " +
                             std::to_string(v.size()) + " x " + std::to_string(v.dim));
    return v;
}

// ---- synthetic data -------------------------------------------------------

const std::vector<std::pair<std::string, std::vector<std::string>>>& synthetic_relations() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> rels = {
        {"located_in", {"is", "located", "in"}},
        {"part_of", {"is", "part", "of"}},
        {"capital_of", {"is", "the", "capital", "of"}},
        {"member_of", {"is", "a", "member", "of"}},
        {"owned_by", {"is", "owned", "by"}},
        {"founded_by", {"was", "founded", "by"}},
        {"named_after", {"is", "named", "after"}},
        {"adjacent_to", {"is", "adjacent", "to"}},
        {"borders", {"borders"}},
    };
    return rels;
}

void SyntheticSpec::validate() const {
    if (instances == 0) throw ConfigError("synthetic: instances must be positive");
    if (hops + 1 > documents) throw ConfigError("synthetic: hops+1 must not exceed documents per instance");
    if (candidates == 0) throw ConfigError("synthetic: need at least one candidate");
    const std::size_t needed = hops + 2 + 2 * documents + candidates;
    if (vocab_size < needed)
        throw ConfigError("synthetic: vocab_size " + std::to_string(vocab_size) + " too small, need " + std::to_string(needed));
    if (hops + 1 + distractor_chains * std::max<std::size_t>(hops, 1) > documents)
        throw ConfigError("synthetic: distractor chains do not fit in the document budget");
}

namespace {

struct Gen {
    std::mt19937_64 rng;
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng() % n); }
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }
};

const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> w = {"many",   "old",     "small",   "large",  "famous", "quiet",  "green",
                                               "busy",   "ancient", "modern",  "narrow", "wide",   "rural",  "coastal",
                                               "streets", "parks",  "bridges", "farms",  "towers", "markets", "hills",
                                               "rivers", "museums", "gardens", "churches", "schools"};
    return w;
}

std::vector<std::string> entity_pool(std::size_t n, std::uint64_t seed) {
    static const std::string cons = "bdfgklmnprstvz";
    static const std::string vows = "aeiou";
    std::set<std::string> reserved(filler_words().begin(), filler_words().end());
    reserved.insert("has");
    for (const auto& [_, ws] : synthetic_relations()) reserved.insert(ws.begin(), ws.end());
    Gen g{std::mt19937_64(seed ^ 0x9e3779b97f4a7c15ULL)};
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (out.size() < n) {
        std::size_t syl = 2 + g.below(2);
        std::string w;
        for (std::size_t s = 0; s < syl; ++s) {
            w.push_back(cons[g.below(cons.size())]);
            w.push_back(vows[g.below(vows.size())]);
        }
        if (g.below(2)) w.push_back(cons[g.below(cons.size())]);
        if (reserved.count(w) || !seen.insert(w).second) continue;
        out.push_back(w);
    }
    return out;
}

struct Link {
    std::string head;
    std::size_t relation;
    std::string tail;
};

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const auto& rels = synthetic_relations();
    const auto pool = entity_pool(spec.vocab_size, spec.seed);
    Gen g{std::mt19937_64(spec.seed)};
    SyntheticDataset out;
    const std::size_t H = spec.hops;

    for (std::size_t n = 0; n < spec.instances; ++n) {
        // distinct entities for this instance
        std::vector<std::size_t> order(pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        const std::size_t budget = std::min(order.size(), H + 2 + 2 * spec.documents + spec.candidates);
        for (std::size_t i = 0; i < budget; ++i) std::swap(order[i], order[i + g.below(order.size() - i)]);
        std::size_t next = 0;
        auto fresh = [&] { return pool[order[next++]]; };

        const std::size_t query_rel = g.below(rels.size());
        auto other_rel = [&] {
            std::size_t r = g.below(rels.size() - 1);
            return r >= query_rel ? r + 1 : r;
        };
        auto any_rel = [&] { return g.below(rels.size()); };

        std::vector<std::string> chain = {fresh()};
        for (std::size_t h = 0; h < H; ++h) chain.push_back(fresh());
        const std::string answer = fresh();
        std::vector<std::string> wrong;
        for (std::size_t c = 1; c < spec.candidates; ++c) wrong.push_back(fresh());
        std::size_t wrong_used = 0;
        auto end_entity = [&] { return wrong_used < wrong.size() ? wrong[wrong_used++] : fresh(); };

        std::vector<Link> links;
        std::vector<std::size_t> gold;
        for (std::size_t h = 0; h < H; ++h) {
            gold.push_back(links.size());
            links.push_back({chain[h], any_rel(), chain[h + 1]});
        }
        gold.push_back(links.size());
        links.push_back({chain[H], query_rel, answer});

        // Branches leave the gold chain after its first document and reach a
        // wrong candidate at the same depth through a different relation.
        const std::string branch_root = chain[std::min<std::size_t>(1, H)];
        const std::size_t branch_len = std::max<std::size_t>(H, 1);
        for (std::size_t b = 0; b < spec.distractor_chains; ++b) {
            std::string head = branch_root;
            for (std::size_t k = 0; k + 1 < branch_len; ++k) {
                std::string tail = fresh();
                links.push_back({head, any_rel(), tail});
                head = tail;
            }
            links.push_back({head, other_rel(), end_entity()});
        }
        // Disconnected chains fill the remaining budget.
        while (links.size() < spec.documents) {
            std::size_t len = std::min(spec.documents - links.size(), std::max<std::size_t>(H, 1));
            std::string head = fresh();
            for (std::size_t k = 0; k + 1 < len; ++k) {
                std::string tail = fresh();
                links.push_back({head, any_rel(), tail});
                head = tail;
            }
            links.push_back({head, other_rel(), end_entity()});
        }

        std::vector<std::string> texts;
        for (const auto& l : links) {
            std::string link_sent = l.head;
            for (const auto& w : rels[l.relation].second) link_sent += " " + w;
            link_sent += " " + l.tail + " .";
            const auto& fw = filler_words();
            std::string filler = l.head + " has " + fw[g.below(fw.size())] + " " + fw[g.below(fw.size())] + " .";
            texts.push_back(g.below(2) ? link_sent + " " + filler : filler + " " + link_sent);
        }
        std::vector<std::size_t> perm(links.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        g.shuffle(perm);
        std::vector<std::size_t> position(links.size());
        RawRecord rec;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            position[perm[i]] = i;
            rec.supports.push_back(texts[perm[i]]);
        }
        std::vector<std::string> cands = {answer};
        cands.insert(cands.end(), wrong.begin(), wrong.end());
        g.shuffle(cands);

        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "%s_%05zu", spec.id_prefix.c_str(), n);
        rec.id = idbuf;
        rec.query = rels[query_rel].first + " " + chain[0];
        rec.candidates = cands;
        rec.answer = answer;
        std::vector<std::size_t> gold_docs;
        for (auto gi : gold) gold_docs.push_back(position[gi]);
        out.gold_chains[rec.id] = gold_docs;
        out.annotations[rec.id] = Annotation{true, H > 0};
        out.records.push_back(std::move(rec));
    }
    return out;
}

}  // namespace epar
