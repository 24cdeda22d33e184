#include "epar/encoder.hpp"

#include <algorithm>

namespace epar {

Encoder::Encoder(ParamStore& store, const Config& cfg, const Vocabulary& vocab, std::mt19937_64& rng)
    : cfg_(cfg), vocab_(&vocab) {
    if (vocab.dim != cfg.word_dim)
        throw ConfigError("encoder: vocabulary dim " + std::to_string(vocab.dim) + " != word_dim " +
                          std::to_string(cfg.word_dim));
    const std::size_t d = cfg.word_dim, v = cfg.lstm_units, f = cfg.filters();
    if (cfg.train_embeddings) {
        Tensor& words = store.add("enc.word_emb", Shape(vocab.size(), d), Init::Zeros, rng);
        std::copy(vocab.embeddings.begin(), vocab.embeddings.end(), words.mutable_data().begin());
    }
    store.add("enc.char_emb", Shape(vocab.char_count(), cfg.char_dim), Init::Normal, rng, cfg.char_embedding_std);
    auto ce = store.get("enc.char_emb").mutable_data();
    std::fill(ce.begin(), ce.begin() + static_cast<std::ptrdiff_t>(cfg.char_dim), 0.0);
    store.add("enc.conv.w", Shape(cfg.char_width * cfg.char_dim, f), Init::Xavier, rng);
    store.add("enc.conv.b", Shape(f), Init::Zeros, rng);
    Linear::create(store, "enc.merge", d + f, d, rng);
    for (std::size_t i = 0; i < cfg.highway_layers; ++i)
        HighwayLayer::create(store, "enc.highway" + std::to_string(i), d, rng);
    LstmParams::create(store, "enc.lstm_f", d, v, rng);
    LstmParams::create(store, "enc.lstm_b", d, v, rng);
    if (cfg.summary == SummaryMode::SelfAttention) {
        Linear::create(store, "enc.att1", 2 * v, cfg.self_attention_dim(), rng);
        Linear::create(store, "enc.att2", cfg.self_attention_dim(), 1, rng);
    }
    bind_all(store);
}

Encoder Encoder::bind(ParamStore& store, const Config& cfg, const Vocabulary& vocab) {
    Encoder e;
    e.cfg_ = cfg;
    e.vocab_ = &vocab;
    e.bind_all(store);
    return e;
}

void Encoder::bind_all(ParamStore& store) {
    if (cfg_.train_embeddings) word_table = store.get("enc.word_emb");
    else word_table = Tensor::from(Shape(vocab_->size(), cfg_.word_dim), vocab_->embeddings);
    char_table = store.get("enc.char_emb");
    conv_w = store.get("enc.conv.w");
    conv_b = store.get("enc.conv.b");
    merge = Linear::bind(store, "enc.merge");
    highway.clear();
    for (std::size_t i = 0; i < cfg_.highway_layers; ++i)
        highway.push_back(HighwayLayer::bind(store, "enc.highway" + std::to_string(i)));
    fwd = LstmParams::bind(store, "enc.lstm_f");
    bwd = LstmParams::bind(store, "enc.lstm_b");
    if (cfg_.summary == SummaryMode::SelfAttention) {
        att1 = Linear::bind(store, "enc.att1");
        att2 = Linear::bind(store, "enc.att2");
    }
}

Tensor Encoder::char_features(const std::vector<std::string>& tokens) const {
    auto ids = vocab_->char_ids_padded(tokens);
    Tensor chars = embedding_lookup(char_table, ids, Vocabulary::kPad);
    Tensor windows = unfold_windows(chars, kMaxWordChars, cfg_.char_width);
    Tensor conv = add(matmul(windows, conv_w), conv_b);
    return tanh(max_pool_groups(conv, kMaxWordChars - cfg_.char_width + 1));
}

Tensor Encoder::embed_words(const std::vector<std::string>& tokens, const ForwardMode& mode) const {
    return embed_many({&tokens}, mode).front();
}

std::vector<Tensor> Encoder::embed_many(const std::vector<const std::vector<std::string>*>& seqs,
                                        const ForwardMode& mode) const {
    std::vector<std::string> all;
    for (const auto* s : seqs) {
        if (s->empty()) throw ContractError("embed_words: empty token sequence");
        all.insert(all.end(), s->begin(), s->end());
    }
    auto ids = vocab_->ids(all);
    Tensor words = mode.drop(embedding_lookup(word_table, ids, Vocabulary::kPad));
    Tensor chars = mode.drop(char_features(all));
    Tensor x = merge(concat({words, chars}, 1));
    for (const auto& hw : highway) x = hw(x);
    std::vector<Tensor> out;
    std::size_t at = 0;
    for (const auto* s : seqs) {
        out.push_back(slice(x, at, at + s->size(), 0));
        at += s->size();
    }
    return out;
}

BiSequence Encoder::encode_sequence(const Tensor& embedded, const ForwardMode& mode) const {
    return run_bilstm(mode.drop(embedded), fwd, bwd);
}

Tensor Encoder::self_attention_weights(const Tensor& H) const {
    Tensor a = tanh(att2(tanh(att1(H))));
    return softmax_lastdim(reshape(a, Shape(H.rows())));
}

Tensor Encoder::summarize(const BiSequence& seq) const {
    if (cfg_.summary == SummaryMode::LastHiddenState) return seq.finals();
    return matmul(self_attention_weights(seq.states), seq.states);
}

EncodedInstance Encoder::encode(const QueryInstance& q, const ForwardMode& mode) const {
    static const std::vector<std::string> kEmpty = {"<pad>"};
    std::vector<const std::vector<std::string>*> seqs;
    for (const auto& d : q.documents) seqs.push_back(d.tokens.empty() ? &kEmpty : &d.tokens);
    seqs.push_back(q.query_subject_tokens.empty() ? &kEmpty : &q.query_subject_tokens);
    seqs.push_back(q.query_body_tokens.empty() ? &kEmpty : &q.query_body_tokens);
    // Candidates never mentioned in any document are encoded on their own.
    auto mentions = locate_candidate_mentions(q);
    std::vector<std::size_t> unmentioned;
    for (std::size_t l = 0; l < q.candidates.size(); ++l)
        if (mentions[l].empty()) {
            unmentioned.push_back(l);
            seqs.push_back(q.candidates[l].empty() ? &kEmpty : &q.candidates[l]);
        }
    auto embedded = embed_many(seqs, mode);

    EncodedInstance out;
    const std::size_t n = q.documents.size();
    for (std::size_t i = 0; i < n; ++i) {
        BiSequence s = encode_sequence(embedded[i], mode);
        out.P.push_back(summarize(s));
        out.H.push_back(s.states);
    }
    BiSequence sub = encode_sequence(embedded[n], mode);
    BiSequence bod = encode_sequence(embedded[n + 1], mode);
    out.U_sub = sub.states;
    out.U_bod = bod.states;
    out.u_s = sub.finals();
    out.u_b = bod.finals();

    out.candidates.resize(q.candidates.size());
    out.candidate_mentioned.assign(q.candidates.size(), false);
    for (std::size_t l = 0; l < q.candidates.size(); ++l) {
        if (mentions[l].empty()) continue;
        const Mention& m = mentions[l].front();
        Tensor rows = slice(out.H[m.doc], m.start, m.end, 0);
        out.candidates[l] = scale(sum_rows(rows), 1.0 / static_cast<Real>(m.end - m.start));
        out.candidate_mentioned[l] = true;
    }
    for (std::size_t j = 0; j < unmentioned.size(); ++j) {
        BiSequence s = encode_sequence(embedded[n + 2 + j], mode);
        out.candidates[unmentioned[j]] = scale(sum_rows(s.states), 1.0 / static_cast<Real>(s.states.rows()));
    }
    return out;
}

}  // namespace epar
