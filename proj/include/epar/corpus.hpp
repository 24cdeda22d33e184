#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "epar/tensor.hpp"

namespace epar {

inline constexpr std::size_t kMaxWordChars = 16;

struct IngestionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    std::size_t size() const { return end - begin; }
    friend bool operator==(const Span&, const Span&) = default;
};

struct Document {
    std::size_t id = 0;
    std::vector<std::string> tokens;
    std::vector<std::string> char_tokens;  // per word, at most kMaxWordChars bytes
    std::vector<Span> sentence_spans;

    std::size_t sentence_of(std::size_t token) const;
};

struct Annotation {
    bool follows = true;
    bool multiple = true;
};

struct QueryInstance {
    std::string instance_id;
    std::string relation;  // raw first field of the query string
    std::vector<std::string> query_body_tokens;
    std::vector<std::string> query_subject_tokens;
    std::vector<Document> documents;
    std::vector<std::vector<std::string>> candidates;
    std::vector<std::string> candidate_texts;
    std::optional<std::size_t> answer_index;
    std::optional<Annotation> annotation;
    bool masked = false;
};

struct Tokenized {
    std::vector<std::string> tokens;
    std::vector<Span> sentence_spans;
};

// Lowercases, splits on whitespace and punctuation, keeps placeholder tokens
// ("@name17", "___MASK3___") intact. Sentences end at '.', '!' or '?' followed
// by whitespace or end of text.
Tokenized tokenize(std::string_view text);
std::vector<std::string> tokenize_words(std::string_view text);
Document make_document(std::size_t id, std::string_view text);

// "relation_name subject words" -> (body tokens, subject tokens).
std::pair<std::vector<std::string>, std::vector<std::string>> parse_query(std::string_view query);

// Raw QAngaroo record.
struct RawRecord {
    std::string id;
    std::string query;
    std::vector<std::string> candidates;
    std::optional<std::string> answer;
    std::vector<std::string> supports;
};

QueryInstance instance_from_record(const RawRecord& rec, bool masked, std::vector<std::string>* warnings = nullptr);
std::vector<RawRecord> read_qangaroo_records(const std::filesystem::path& path);
void write_qangaroo_records(const std::filesystem::path& path, const std::vector<RawRecord>& records);

// Instances whose answer is not among the candidates keep no answer_index and
// produce a warning; they are unusable for training.
std::vector<QueryInstance> load_qangaroo(const std::filesystem::path& path, bool masked,
                                         std::vector<std::string>* warnings = nullptr);

// id -> "follows_multiple" | "follows_single" | "not_follows"
std::map<std::string, Annotation> load_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::map<std::string, Annotation>& ann);
void apply_annotations(std::vector<QueryInstance>& instances, const std::map<std::string, Annotation>& ann);

using GoldChains = std::map<std::string, std::vector<std::size_t>>;
GoldChains load_gold_chains(const std::filesystem::path& path);
void write_gold_chains(const std::filesystem::path& path, const GoldChains& chains);

struct Mention {
    std::size_t doc = 0;
    std::size_t start = 0;
    std::size_t end = 0;
    friend bool operator==(const Mention&, const Mention&) = default;
};

// Exact token-subsequence matches ordered by (doc, start).
std::vector<Mention> find_mentions(const QueryInstance& instance, const std::vector<std::string>& phrase);
std::vector<std::vector<Mention>> locate_candidate_mentions(const QueryInstance& instance);
bool sentence_contains(const Document& doc, std::size_t sentence, const std::vector<std::string>& phrase);
bool document_contains(const Document& doc, const std::vector<std::string>& phrase);

// ---- vocabulary -----------------------------------------------------------

struct Vocabulary {
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;

    std::vector<std::string> words;  // id -> word
    std::unordered_map<std::string, std::size_t> word_ids;
    std::vector<char> chars;         // id -> byte (0 pad, 1 unk)
    std::unordered_map<char, std::size_t> char_ids;
    std::size_t dim = 0;
    std::vector<Real> embeddings;    // [size() x dim], row kPad is zero

    std::size_t size() const { return words.size(); }
    std::size_t char_count() const { return chars.size(); }
    std::size_t word_id(const std::string& w) const;
    std::size_t char_id(char c) const;
    std::vector<std::size_t> ids(const std::vector<std::string>& tokens) const;
    // kMaxWordChars char ids per word, padded with 0.
    std::vector<std::size_t> char_ids_padded(const std::vector<std::string>& tokens) const;
};

struct VocabularyReport {
    std::size_t matched = 0;
    std::size_t skipped_lines = 0;
    double coverage = 0.0;  // matched / (size - 2)
};

// Counts tokens of the given (training) instances only. Words found in the
// embedding file take its vectors; the rest draw from N(0, init_std^2).
Vocabulary build_vocabulary(const std::vector<QueryInstance>& train, std::size_t dim, std::uint64_t seed,
                            Real init_std = 0.1, const std::optional<std::filesystem::path>& embedding_file = std::nullopt,
                            VocabularyReport* report = nullptr);

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::filesystem::path& path);

// ---- synthetic multi-hop data ----------------------------------------------

struct SyntheticSpec {
    std::size_t instances = 200;
    std::size_t hops = 2;  // bridge entities between subject and answer
    std::size_t vocab_size = 200;
    std::size_t documents = 8;
    std::size_t candidates = 5;
    std::size_t distractor_chains = 1;  // wrong-answer chains branching off the gold chain
    std::uint64_t seed = 7;
    std::string id_prefix = "syn";

    void validate() const;
};

struct SyntheticDataset {
    std::vector<RawRecord> records;
    GoldChains gold_chains;
    std::map<std::string, Annotation> annotations;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// Relation phrase used in generated sentences, e.g. located_in -> "is located in".
const std::vector<std::pair<std::string, std::vector<std::string>>>& synthetic_relations();

}  // namespace epar
