#include "epar/config.hpp"

#include <fstream>
#include <sstream>

namespace epar {

std::string to_string(SummaryMode m) {
    return m == SummaryMode::SelfAttention ? "self_attention" : "last_hidden_state";
}

std::string to_string(SentenceProvider p) {
    switch (p) {
        case SentenceProvider::Proposer: return "proposer";
        case SentenceProvider::Lead1: return "lead1";
        case SentenceProvider::FullDoc: return "full_doc";
    }
    return "?";
}

std::string to_string(Aggregation a) {
    switch (a) {
        case Aggregation::Assembler: return "assembler";
        case Aggregation::SingleChain: return "single_chain";
        case Aggregation::AvgVote: return "avg_vote";
        case Aggregation::MaxVote: return "max_vote";
    }
    return "?";
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
    }
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

std::string fmt(double d) {
    std::ostringstream os;
    os.precision(17);
    os << d;
    return os.str();
}

std::string fmt(bool b) { return b ? "true" : "false"; }

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
    if (key == "word_dim") word_dim = parse_size(key, value);
    else if (key == "lstm_units") lstm_units = parse_size(key, value);
    else if (key == "char_dim") char_dim = parse_size(key, value);
    else if (key == "char_width") char_width = parse_size(key, value);
    else if (key == "char_filters") char_filters = parse_size(key, value);
    else if (key == "highway_layers") highway_layers = parse_size(key, value);
    else if (key == "attention_dim") attention_dim = parse_size(key, value);
    else if (key == "summary") {
        if (value == "self_attention") summary = SummaryMode::SelfAttention;
        else if (value == "last_hidden_state") summary = SummaryMode::LastHiddenState;
        else throw ConfigError("config: summary must be self_attention or last_hidden_state, got '" + value + "'");
    } else if (key == "embedding_file") embedding_file = value;
    else if (key == "train_embeddings") train_embeddings = parse_bool(key, value);
    else if (key == "embedding_std") embedding_std = parse_real(key, value);
    else if (key == "char_embedding_std") char_embedding_std = parse_real(key, value);
    else if (key == "memory_dim") memory_dim = parse_size(key, value);
    else if (key == "hops") hops = parse_size(key, value);
    else if (key == "tree_width") tree_width = parse_size(key, value);
    else if (key == "n_prime") n_prime = parse_size(key, value);
    else if (key == "use_tfidf") use_tfidf = parse_bool(key, value);
    else if (key == "hop1_supervision") hop1_supervision = parse_bool(key, value);
    else if (key == "proposer_hidden") proposer_hidden = parse_size(key, value);
    else if (key == "proposer_attention_dim") proposer_attention_dim = parse_size(key, value);
    else if (key == "proposer_attention") proposer_attention = parse_bool(key, value);
    else if (key == "assembler_hidden") assembler_hidden = parse_size(key, value);
    else if (key == "similarity_hidden") similarity_hidden = parse_size(key, value);
    else if (key == "sentence_provider") {
        if (value == "proposer") sentence_provider = SentenceProvider::Proposer;
        else if (value == "lead1") sentence_provider = SentenceProvider::Lead1;
        else if (value == "full_doc") sentence_provider = SentenceProvider::FullDoc;
        else throw ConfigError("config: unknown sentence_provider '" + value + "'");
    } else if (key == "aggregation") {
        if (value == "assembler") aggregation = Aggregation::Assembler;
        else if (value == "single_chain") aggregation = Aggregation::SingleChain;
        else if (value == "avg_vote") aggregation = Aggregation::AvgVote;
        else if (value == "max_vote") aggregation = Aggregation::MaxVote;
        else throw ConfigError("config: unknown aggregation '" + value + "'");
    } else if (key == "reranker") reranker = parse_bool(key, value);
    else if (key == "learning_rate") learning_rate = parse_real(key, value);
    else if (key == "batch_size") batch_size = parse_size(key, value);
    else if (key == "clip_norm") clip_norm = parse_real(key, value);
    else if (key == "dropout") dropout = parse_real(key, value);
    else if (key == "epochs") epochs = parse_size(key, value);
    else if (key == "seed") seed = parse_size(key, value);
    else if (key == "eval_every") eval_every = parse_size(key, value);
    else if (key == "time_budget_seconds") time_budget_seconds = parse_real(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
}

std::map<std::string, std::string> Config::to_map() const {
    return {
        {"word_dim", std::to_string(word_dim)},
        {"lstm_units", std::to_string(lstm_units)},
        {"char_dim", std::to_string(char_dim)},
        {"char_width", std::to_string(char_width)},
        {"char_filters", std::to_string(char_filters)},
        {"highway_layers", std::to_string(highway_layers)},
        {"attention_dim", std::to_string(attention_dim)},
        {"summary", to_string(summary)},
        {"embedding_file", embedding_file},
        {"train_embeddings", fmt(train_embeddings)},
        {"embedding_std", fmt(embedding_std)},
        {"char_embedding_std", fmt(char_embedding_std)},
        {"memory_dim", std::to_string(memory_dim)},
        {"hops", std::to_string(hops)},
        {"tree_width", std::to_string(tree_width)},
        {"n_prime", std::to_string(n_prime)},
        {"use_tfidf", fmt(use_tfidf)},
        {"hop1_supervision", fmt(hop1_supervision)},
        {"proposer_hidden", std::to_string(proposer_hidden)},
        {"proposer_attention_dim", std::to_string(proposer_attention_dim)},
        {"proposer_attention", fmt(proposer_attention)},
        {"assembler_hidden", std::to_string(assembler_hidden)},
        {"similarity_hidden", std::to_string(similarity_hidden)},
        {"sentence_provider", to_string(sentence_provider)},
        {"aggregation", to_string(aggregation)},
        {"reranker", fmt(reranker)},
        {"learning_rate", fmt(learning_rate)},
        {"batch_size", std::to_string(batch_size)},
        {"clip_norm", fmt(clip_norm)},
        {"dropout", fmt(dropout)},
        {"epochs", std::to_string(epochs)},
        {"seed", std::to_string(seed)},
        {"eval_every", std::to_string(eval_every)},
        {"time_budget_seconds", fmt(time_budget_seconds)},
    };
}

void Config::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("config: " + what);
    };
    need(word_dim > 0, "word_dim must be positive");
    need(lstm_units > 0, "lstm_units must be positive");
    need(char_dim > 0 && filters() > 0, "char-CNN dimensions must be positive");
    need(char_width >= 1 && char_width <= kMaxWordChars, "char_width must be in [1, 16]");
    need(hops >= 1, "hops must be >= 1");
    need(tree_width >= 1, "tree_width must be >= 1");
    need(n_prime >= 1, "n_prime must be >= 1");
    need(proposer_hidden > 0 && assembler_hidden > 0, "hidden sizes must be positive");
    need(learning_rate >= 0, "learning_rate must be non-negative");
    need(batch_size >= 1, "batch_size must be >= 1");
    need(clip_norm > 0, "clip_norm must be positive");
    need(dropout >= 0 && dropout < 1, "dropout must be in [0, 1)");
    need(embedding_std > 0 && char_embedding_std > 0, "embedding scales must be positive");
}

Config preset(const std::string& name) {
    Config c;
    if (name == "full") {
        c.word_dim = 300;
        c.lstm_units = 100;
        c.summary = SummaryMode::SelfAttention;
    } else if (name == "small") {
        c.word_dim = 100;
        c.lstm_units = 20;
        c.summary = SummaryMode::LastHiddenState;
    } else if (name == "medhop") {
        c.word_dim = 100;
        c.lstm_units = 20;
        c.summary = SummaryMode::LastHiddenState;
        c.use_tfidf = false;
        c.hop1_supervision = false;
    } else {
        throw ConfigError("config: unknown preset '" + name + "' (full, small, medhop)");
    }
    return c;
}

Config load_config(const std::filesystem::path& path, const std::string& base_preset) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    std::string base = base_preset;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + path.string() + ":" + std::to_string(lineno) + " expected key=value");
        std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
        if (k == "preset") base = v;
        else entries.emplace_back(k, v);
    }
    Config c = preset(base);
    for (const auto& [k, v] : entries) c.set(k, v);
    c.validate();
    return c;
}

void save_config(const std::filesystem::path& path, const Config& cfg) {
    std::ofstream out(path);
    if (!out) throw ConfigError("config: cannot write " + path.string());
    for (const auto& [k, v] : cfg.to_map()) out << k << '=' << v << '\n';
}

}  // namespace epar
