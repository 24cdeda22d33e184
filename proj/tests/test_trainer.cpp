#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "epar/config.hpp"
#include "epar/trainer.hpp"
#include "support.hpp"

using namespace epar;
using testing::gradcheck;

namespace {

std::vector<QueryInstance> synthetic(std::size_t n, std::uint64_t seed = 7) {
    SyntheticSpec spec;
    spec.instances = n;
    spec.seed = seed;
    std::vector<QueryInstance> out;
    for (const auto& r : generate_synthetic(spec).records) out.push_back(instance_from_record(r, false));
    return out;
}

struct Fixture {
    Config cfg = testing::tiny_config();
    std::vector<QueryInstance> data;
    Vocabulary vocab;
    std::unique_ptr<EparModel> model;

    explicit Fixture(std::size_t n = 10, bool reranker = false) : data(synthetic(n)) {
        cfg.reranker = reranker;
        vocab = build_vocabulary(data, cfg.word_dim, 3, cfg.embedding_std);
        model = std::make_unique<EparModel>(cfg, vocab);
    }

    void zero(const std::string& prefix) {
        for (auto& [name, t] : model->params.all())
            if (name.rfind(prefix, 0) == 0)
                for (auto& v : t.mutable_data()) v = 0.0;
    }

    double mean_loss() {
        double s = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::mt19937_64 rng(100 + i);
            auto labels = build_weak_labels(data[i], rng);
            NoGradGuard g;
            s += joint_loss(*model, data[i], labels, ForwardMode::eval(), rng).total.item();
        }
        return s / static_cast<double>(data.size());
    }
};

std::map<std::string, std::vector<Real>> snapshot(const ParamStore& p) {
    std::map<std::string, std::vector<Real>> out;
    for (const auto& [name, t] : p.all()) out[name].assign(t.data().begin(), t.data().end());
    return out;
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("config keys, presets and round trip") {
    auto full = preset("full");
    CHECK(full.word_dim == 300);
    CHECK(full.lstm_units == 100);
    CHECK(full.summary == SummaryMode::SelfAttention);
    auto small = preset("small");
    CHECK(small.word_dim == 100);
    CHECK(small.lstm_units == 20);
    CHECK(small.summary == SummaryMode::LastHiddenState);
    auto med = preset("medhop");
    CHECK_FALSE(med.use_tfidf);
    CHECK_FALSE(med.hop1_supervision);
    CHECK(full.learning_rate == 0.001);
    CHECK(full.batch_size == 10);
    CHECK(full.dropout == 0.2);
    CHECK(full.hops == 3);
    CHECK(full.tree_width == 4);
    CHECK(full.n_prime == 8);
    CHECK_THROWS_AS(preset("huge"), ConfigError);

    Config c = small;
    CHECK_THROWS_AS(c.set("no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(c.set("hops", "zero"), ConfigError);
    c.set("lstm_units", "16");
    c.set("summary", "self_attention");
    auto path = std::filesystem::temp_directory_path() / "epar_cfg_test.txt";
    save_config(path, c);
    auto back = load_config(path);
    CHECK(back.to_map() == c.to_map());
}

TEST_CASE("weak labels") {
    auto q = testing::toy_instance();
    std::mt19937_64 rng(1);
    auto w = build_weak_labels(q, rng);
    CHECK(w.has_hop1);
    CHECK(w.hop1 == 0);
    // only document 1 mentions "doga"
    CHECK(w.has_hopT);
    CHECK(w.hopT == 1);
    for (int i = 0; i < 10; ++i) CHECK(build_weak_labels(q, rng).hopT == 1);

    auto r = testing::toy_record();
    r.candidates.push_back("nowhere");
    r.answer = "nowhere";
    auto missing = instance_from_record(r, false);
    auto s = build_weak_labels(missing, rng);
    CHECK(s.skip_de);

    auto data = synthetic(300);
    SyntheticSpec spec;
    spec.instances = 300;
    auto gold = generate_synthetic(spec).gold_chains;
    std::size_t hit = 0, oracle_hit = 0;
    for (const auto& inst : data) {
        auto l = build_weak_labels(inst, rng);
        REQUIRE(l.hop1 < inst.documents.size());
        REQUIRE(document_contains(inst.documents[l.hopT], inst.candidates[*inst.answer_index]));
        const auto first = gold.at(inst.instance_id).front();
        hit += l.hop1 == first;
        // graph view: the gold chain starts at the only document headed by the subject
        oracle_hit += inst.documents[first].tokens.front() == inst.query_subject_tokens.front();
    }
    CHECK(hit == oracle_hit);
}

TEST_CASE("uniform predictions give log-count cross entropies") {
    Fixture f;
    f.zero("de.w_read");
    f.zero("ap.beta");
    f.zero("ea.beta");
    const auto& q = f.data[0];
    std::mt19937_64 rng(3);
    auto labels = build_weak_labels(q, rng);
    auto lb = joint_loss(*f.model, q, labels, ForwardMode::eval(), rng);
    Tape::current().clear();
    const double N = static_cast<double>(q.documents.size()), L = static_cast<double>(q.candidates.size());
    const double T = static_cast<double>(f.cfg.hops);
    CHECK(std::abs(lb.de_hop1 - std::log(N)) <= 1e-6);
    CHECK(std::abs(lb.de_hopT - std::log(N - T + 1)) <= 1e-6);
    CHECK(std::abs(lb.ap - std::log(L)) <= 1e-6);
    CHECK(std::abs(lb.ea - std::log(L)) <= 1e-6);
}

TEST_CASE("confident correct logits give near-zero cross entropy") {
    CHECK(cross_entropy(Tensor::vector({40, 0, 0}), 0).item() <= 1e-6);
}

TEST_CASE("total loss is the sum of its components") {
    Fixture f(6, true);
    for (const auto& q : f.data) {
        std::mt19937_64 rng(9);
        auto labels = build_weak_labels(q, rng);
        NoGradGuard g;
        auto lb = joint_loss(*f.model, q, labels, ForwardMode::eval(), rng);
        CHECK(std::abs(lb.total.item() - (lb.de_hop1 + lb.de_hopT + lb.ap + lb.ea + lb.rerank)) <= 1e-9);
        CHECK(lb.de_hop1 >= 0);
        CHECK(lb.ap >= 0);
        CHECK(lb.ea >= 0);
    }
}

TEST_CASE("joint loss gradient on a two-document instance") {
    Fixture f;
    auto r = testing::toy_record();
    r.supports = {"rinado is located in dirom .", "dirom is part of doga . dirom has farms ."};
    r.candidates = {"doga", "dirom", "rinado"};
    auto q = instance_from_record(r, false);
    std::mt19937_64 lr(1);
    auto labels = build_weak_labels(q, lr);
    const auto& ps = f.model->params;
    auto fn = [&] {
        std::mt19937_64 rng(42);
        return joint_loss(*f.model, q, labels, ForwardMode::eval(), rng).total;
    };
    auto rep = gradcheck(fn, {{"de.w_read", ps.get("de.w_read")},
                              {"de.w_write", ps.get("de.w_write")},
                              {"enc.lstm_f.wx", ps.get("enc.lstm_f.wx")},
                              {"enc.conv.w", ps.get("enc.conv.w")},
                              {"ap.att_v", ps.get("ap.att_v")},
                              {"ap.beta.w2.w", ps.get("ap.beta.w2.w")},
                              {"ea.w_sim", ps.get("ea.w_sim")},
                              {"ea.out.w", ps.get("ea.out.w")}},
                         8, 3, 1e-5, 1e-6);
    CHECK_MESSAGE(rep.max_rel <= 1e-3, rep.worst);
}

TEST_CASE("skipped explorer term leaves its weights without gradient") {
    Fixture f;
    auto r = testing::toy_record();
    r.answer = "vulon kes";  // a candidate no document mentions
    auto q = instance_from_record(r, false);
    std::mt19937_64 rng(2);
    auto labels = build_weak_labels(q, rng);
    REQUIRE(labels.skip_de);
    f.model->params.zero_grad();
    auto lb = joint_loss(*f.model, q, labels, ForwardMode::eval(), rng);
    CHECK(lb.de_skipped);
    backward(lb.total);
    for (const char* name : {"de.w_read", "de.w_write"}) {
        const auto& t = f.model->params.get(name);
        for (Real g : t.grad()) CHECK(g == 0.0);
    }
    CHECK(f.model->params.get("ea.w_sim").has_grad());
    f.model->params.zero_grad();
}

TEST_CASE("evaluation is dropout free and repeatable") {
    Fixture f;
    f.cfg.dropout = 0.5;
    EparModel m(f.cfg, f.vocab);
    for (const auto& q : f.data) {
        auto a = m.infer(q), b = m.infer(q);
        CHECK(a.prediction == b.prediction);
        for (std::size_t l = 0; l < a.final.scores.size(); ++l) CHECK(a.final.scores.at(l) == b.final.scores.at(l));
    }
}

TEST_CASE("one epoch on ten instances lowers the loss") {
    Fixture f;
    f.cfg.batch_size = 2;
    f.cfg.learning_rate = 0.01;
    f.cfg.epochs = 1;
    EparModel m(f.cfg, f.vocab);
    f.model = std::make_unique<EparModel>(f.cfg, f.vocab);
    const double before = f.mean_loss();
    auto s = train(*f.model, f.data, {});
    CHECK(s.steps == 5);
    const double after = f.mean_loss();
    CHECK(after < before);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    Fixture f;
    f.cfg.learning_rate = 0.0;
    f.cfg.epochs = 1;
    f.cfg.batch_size = 5;
    f.model = std::make_unique<EparModel>(f.cfg, f.vocab);
    auto before = snapshot(f.model->params);
    train(*f.model, f.data, {});
    CHECK(snapshot(f.model->params) == before);
}

TEST_CASE("training is deterministic and resumable") {
    Fixture f(12);
    f.cfg.batch_size = 3;
    f.cfg.epochs = 2;
    auto run = [&](std::size_t steps, const std::filesystem::path& dir, bool resume) {
        EparModel m(f.cfg, f.vocab);
        TrainOptions o;
        o.out_dir = dir;
        o.max_steps = steps;
        o.resume = resume;
        return train(m, f.data, {}, o).step_losses;
    };
    auto a = run(6, scratch("epar_train_a"), false);
    auto b = run(6, scratch("epar_train_b"), false);
    CHECK(a == b);

    auto dir = scratch("epar_train_c");
    auto first = run(4, dir, false);
    REQUIRE(first.size() == 4);
    auto rest = run(6, dir, true);
    REQUIRE(rest.size() == 2);
    CHECK(std::abs(rest[0] - a[4]) <= 1e-5);
    CHECK(std::abs(rest[1] - a[5]) <= 1e-5);
    CHECK(std::filesystem::exists(dir / "train_log.jsonl"));

    auto loaded = load_model(dir, "last");
    CHECK(loaded.model->params.names() == EparModel(f.cfg, f.vocab).params.names());
}
