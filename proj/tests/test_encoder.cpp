#include <doctest.h>

#include <cmath>
#include <random>

#include "epar/encoder.hpp"
#include "support.hpp"

using namespace epar;
using testing::gradcheck;
using testing::random_tensor;

namespace {

struct Fixture {
    Config cfg = testing::tiny_config();
    QueryInstance q = testing::toy_instance();
    Vocabulary vocab;
    ParamStore store;
    Encoder enc;

    explicit Fixture(bool train_embeddings = true, SummaryMode mode = SummaryMode::SelfAttention) {
        cfg.train_embeddings = train_embeddings;
        cfg.summary = mode;
        vocab = build_vocabulary({q}, cfg.word_dim, 5, cfg.embedding_std);
        std::mt19937_64 rng(3);
        enc = Encoder(store, cfg, vocab, rng);
    }
};

Tensor swap_halves(const Tensor& x) {
    const std::size_t h = x.cols() / 2;
    return concat({slice(x, h, 2 * h, 1), slice(x, 0, h, 1)}, 1);
}

}  // namespace

TEST_CASE("embedding shapes follow the token count") {
    Fixture f;
    for (std::size_t len : {1, 2, 7}) {
        std::vector<std::string> toks(len, "dirom");
        toks.back() = "unseen-word";
        auto e = f.enc.embed_words(toks, ForwardMode::eval());
        CHECK(e.shape() == Shape(len, f.cfg.word_dim));
    }
}

TEST_CASE("char-CNN and highway pass finite differences") {
    Fixture f;
    std::mt19937_64 rng(1);
    const std::vector<std::string> toks = {"rinado", "is", "in", "dirom"};
    auto probe = random_tensor(Shape(toks.size(), f.cfg.word_dim), rng);
    auto fn = [&] { return sum(mul(f.enc.embed_words(toks, ForwardMode::eval()), probe)); };
    auto rep = gradcheck(fn, {{"word", f.enc.word_table},
                              {"char", f.enc.char_table},
                              {"conv_w", f.enc.conv_w},
                              {"conv_b", f.enc.conv_b},
                              {"merge", f.enc.merge.weight},
                              {"hw0.t", f.enc.highway[0].transform.weight},
                              {"hw1.h", f.enc.highway[1].hidden.bias}},
                         10);
    CHECK_MESSAGE(rep.max_rel <= 1e-4, rep.worst);
}

TEST_CASE("sequence encoder shape and gradient") {
    Fixture f;
    std::mt19937_64 rng(2);
    auto x1 = random_tensor(Shape(1, f.cfg.word_dim), rng);
    CHECK(f.enc.encode_sequence(x1, ForwardMode::eval()).states.shape() == Shape(1, f.cfg.encoded_dim()));

    auto x = random_tensor(Shape(5, f.cfg.word_dim), rng);
    auto probe = random_tensor(Shape(5, f.cfg.encoded_dim()), rng);
    auto fn = [&] { return sum(mul(f.enc.encode_sequence(x, ForwardMode::eval()).states, probe)); };
    auto rep = gradcheck(fn, {{"x", x}, {"fwd.wx", f.enc.fwd.wx}, {"bwd.wh", f.enc.bwd.wh}, {"bwd.b", f.enc.bwd.b}});
    CHECK_MESSAGE(rep.max_rel <= 1e-4, rep.worst);
}

TEST_CASE("reversing the input with swapped directions mirrors the encoding") {
    Fixture f;
    std::mt19937_64 rng(4);
    auto x = random_tensor(Shape(6, f.cfg.word_dim), rng);
    auto a = run_bilstm(x, f.enc.fwd, f.enc.bwd).states;
    auto b = run_bilstm(reverse_rows(x), f.enc.bwd, f.enc.fwd).states;
    auto want = swap_halves(reverse_rows(a));
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(std::abs(b.at(i) - want.at(i)) <= 1e-12);
}

TEST_CASE("self-attention summary") {
    Fixture f;
    std::mt19937_64 rng(6);
    const std::size_t w = f.cfg.encoded_dim();

    auto row_vec = random_tensor(Shape(w), rng);
    auto same = repeat_rows(row_vec, 4);
    BiSequence seq{same, Tensor(), Tensor()};
    auto p = f.enc.summarize(seq);
    for (std::size_t i = 0; i < w; ++i) CHECK(std::abs(p.at(i) - row_vec.at(i)) <= 1e-12);

    for (int trial = 0; trial < 200; ++trial) {
        auto H = random_tensor(Shape(1 + rng() % 8, w), rng, 2.0);
        auto a = f.enc.self_attention_weights(H);
        Real total = 0;
        for (Real v : a.data()) {
            REQUIRE(v >= 0.0);
            total += v;
        }
        REQUIRE(std::abs(total - 1.0) <= 1e-9);
    }

    // Hand evaluation on three words with fixed weights.
    auto fill = [](Tensor t, Real v, Real step) {
        auto d = t.mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = v + step * static_cast<Real>(i);
    };
    fill(f.enc.att1.weight, -0.3, 0.05);
    fill(f.enc.att1.bias, 0.1, -0.1);
    fill(f.enc.att2.weight, 0.7, -0.4);
    fill(f.enc.att2.bias, 0.2, 0.0);
    auto H = random_tensor(Shape(3, w), rng);
    const std::size_t att = f.cfg.self_attention_dim();
    std::vector<double> logits(3);
    for (std::size_t k = 0; k < 3; ++k) {
        double outer = f.enc.att2.bias.at(0);
        for (std::size_t j = 0; j < att; ++j) {
            double inner = f.enc.att1.bias.at(j);
            for (std::size_t i = 0; i < w; ++i) inner += H.at(k, i) * f.enc.att1.weight.at(i, j);
            outer += std::tanh(inner) * f.enc.att2.weight.at(j, 0);
        }
        logits[k] = std::tanh(outer);
    }
    double z = 0;
    for (double l : logits) z += std::exp(l);
    auto got = f.enc.self_attention_weights(H);
    auto pooled = f.enc.summarize(BiSequence{H, Tensor(), Tensor()});
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(got.at(k) - std::exp(logits[k]) / z) <= 1e-9);
    for (std::size_t i = 0; i < w; ++i) {
        double want = 0;
        for (std::size_t k = 0; k < 3; ++k) want += std::exp(logits[k]) / z * H.at(k, i);
        CHECK(std::abs(pooled.at(i) - want) <= 1e-9);
    }
}

TEST_CASE("encoded instance dims") {
    for (auto mode : {SummaryMode::SelfAttention, SummaryMode::LastHiddenState}) {
        Fixture f(false, mode);
        auto e = f.enc.encode(f.q, ForwardMode::eval());
        const std::size_t w = f.cfg.encoded_dim();
        REQUIRE(e.H.size() == f.q.documents.size());
        REQUIRE(e.P.size() == f.q.documents.size());
        for (std::size_t d = 0; d < e.H.size(); ++d) {
            CHECK(e.H[d].shape() == Shape(f.q.documents[d].tokens.size(), w));
            CHECK(e.P[d].shape() == Shape(w));
        }
        CHECK(e.U_sub.shape() == Shape(f.q.query_subject_tokens.size(), w));
        CHECK(e.U_bod.shape() == Shape(f.q.query_body_tokens.size(), w));
        CHECK(e.u_s.shape() == Shape(w));
        CHECK(e.u_b.shape() == Shape(w));
        CHECK(e.candidates.size() == f.q.candidates.size());
    }
}

TEST_CASE("candidate vectors average their first mention") {
    Fixture f;
    auto e = f.enc.encode(f.q, ForwardMode::eval());
    auto m = locate_candidate_mentions(f.q);
    // "doga": single-token mention in document 1
    REQUIRE(m[0].size() == 1);
    const auto& d0 = m[0][0];
    for (std::size_t i = 0; i < f.cfg.encoded_dim(); ++i) CHECK(e.candidates[0].at(i) == e.H[d0.doc].at(d0.start, i));
    CHECK(e.candidate_mentioned[0]);
    CHECK_FALSE(e.candidate_mentioned[2]);

    auto r = testing::toy_record();
    r.candidates.push_back("old farms");
    auto q2 = instance_from_record(r, false);
    auto e2 = f.enc.encode(q2, ForwardMode::eval());
    auto mm = locate_candidate_mentions(q2)[3].front();
    for (std::size_t i = 0; i < f.cfg.encoded_dim(); ++i) {
        const double want = 0.5 * (e2.H[mm.doc].at(mm.start, i) + e2.H[mm.doc].at(mm.start + 1, i));
        CHECK(std::abs(e2.candidates[3].at(i) - want) <= 1e-12);
    }
}

TEST_CASE("candidate vectors depend on distant context") {
    Fixture f;
    auto base = f.enc.encode(f.q, ForwardMode::eval());
    auto r = testing::toy_record();
    r.supports[1] = "dirom is part of doga . dirom has new farms .";
    auto q2 = instance_from_record(r, false);
    auto moved = f.enc.encode(q2, ForwardMode::eval());
    double delta = 0;
    for (std::size_t i = 0; i < f.cfg.encoded_dim(); ++i) delta += std::abs(base.candidates[0].at(i) - moved.candidates[0].at(i));
    CHECK(delta > 0);
}

TEST_CASE("document summaries carry gradient to word and char embeddings") {
    Fixture f;
    std::mt19937_64 rng(9);
    auto probe = random_tensor(Shape(f.cfg.encoded_dim()), rng);
    auto fn = [&] { return sum(mul(f.enc.encode(f.q, ForwardMode::eval()).P[1], probe)); };
    auto rep = gradcheck(fn, {{"word", f.enc.word_table}, {"char", f.enc.char_table}, {"att1", f.enc.att1.weight}}, 12);
    CHECK_MESSAGE(rep.max_rel <= 1e-4, rep.worst);

    // Check that some word row actually received gradient.
    f.enc.word_table.set_requires_grad(true);
    backward(fn());
    double mass = 0;
    for (Real g : f.enc.word_table.grad()) mass += std::abs(g);
    CHECK(mass > 0);
    f.enc.word_table.zero_grad();
}

TEST_CASE("evaluation forward passes are repeatable") {
    Fixture f;
    auto a = f.enc.encode(f.q, ForwardMode::eval());
    auto b = f.enc.encode(f.q, ForwardMode::eval());
    for (std::size_t d = 0; d < a.P.size(); ++d)
        for (std::size_t i = 0; i < a.P[d].size(); ++i) CHECK(a.P[d].at(i) == b.P[d].at(i));
}
