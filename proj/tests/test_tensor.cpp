#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "epar/nn.hpp"
#include "epar/params.hpp"
#include "epar/tensor.hpp"
#include "support.hpp"

using namespace epar;
using testing::gradcheck;
using testing::rand_dim;
using testing::random_tensor;

namespace {

std::vector<Real> matmul_oracle(const Tensor& a, const Tensor& b) {
    std::vector<Real> c(a.rows() * b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j)
            for (std::size_t k = 0; k < a.cols(); ++k) c[i * b.cols() + j] += a.at(i, k) * b.at(k, j);
    return c;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
    auto s = softmax_lastdim(Tensor::vector({0, 0}));
    CHECK(s.at(0) == doctest::Approx(0.5));
    CHECK(s.at(1) == doctest::Approx(0.5));
}

TEST_CASE("relu clamps negatives") {
    auto r = relu(Tensor::vector({-1, 2}));
    CHECK(r.at(0) == 0.0);
    CHECK(r.at(1) == 2.0);
}

TEST_CASE("matmul agrees with triple loop") {
    std::mt19937_64 rng(11);
    auto a = random_tensor(Shape(2, 3), rng);
    auto b = random_tensor(Shape(3, 2), rng);
    auto c = matmul(a, b);
    REQUIRE(c.shape() == Shape(2, 2));
    auto want = matmul_oracle(a, b);
    for (std::size_t i = 0; i < 4; ++i) CHECK(c.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));

    for (int trial = 0; trial < 50; ++trial) {
        std::size_t m = rand_dim(rng), k = rand_dim(rng), n = rand_dim(rng);
        auto x = random_tensor(Shape(m, k), rng), y = random_tensor(Shape(k, n), rng);
        auto z = matmul(x, y);
        auto o = matmul_oracle(x, y);
        for (std::size_t i = 0; i < o.size(); ++i) CHECK(std::abs(z.data()[i] - o[i]) < 1e-12);
    }
}

TEST_CASE("shape mismatch is a dimension error") {
    CHECK_THROWS_AS(matmul(Tensor::zeros(Shape(2, 3)), Tensor::zeros(Shape(2, 3))), DimensionError);
    CHECK_THROWS_AS(add(Tensor::zeros(Shape(2, 3)), Tensor::zeros(Shape(3, 2))), DimensionError);
}

TEST_CASE("non-finite output names the op") {
    try {
        log(Tensor::vector({0.0}));
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("log") != std::string::npos);
    }
}

TEST_CASE("backward of a product") {
    auto x = Tensor::scalar(2.0, true), y = Tensor::scalar(3.0, true);
    backward(mul(x, y));
    CHECK(x.grad()[0] == doctest::Approx(3.0));
    CHECK(y.grad()[0] == doctest::Approx(2.0));
    CHECK(Tape::current().empty());
}

TEST_CASE("sum of softmax has zero gradient") {
    auto v = Tensor::vector({0.3, -1.2, 2.0, 0.1}, true);
    backward(sum(softmax_lastdim(v)));
    for (Real g : v.grad()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("backward rejects a non-scalar loss") {
    auto v = Tensor::vector({1, 2}, true);
    CHECK_THROWS_AS(backward(tanh(v)), ContractError);
    Tape::current().clear();
}

TEST_CASE("random three-layer composition passes finite differences") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t m = rand_dim(rng), a = rand_dim(rng), b = rand_dim(rng), c = rand_dim(rng);
        auto x = random_tensor(Shape(m, a), rng);
        auto w1 = random_tensor(Shape(a, b), rng, 0.5), w2 = random_tensor(Shape(b, c), rng, 0.5);
        auto b1 = random_tensor(Shape(b), rng);
        auto f = [&] { return sum(softmax_lastdim(matmul(tanh(add(matmul(x, w1), b1)), w2))) ; };
        auto g = [&] { return mean(mul(sigmoid(matmul(relu(add(matmul(x, w1), b1)), w2)), tanh(matmul(x, matmul(w1, w2))))); };
        auto r1 = gradcheck(g, {{"x", x}, {"w1", w1}, {"w2", w2}, {"b1", b1}});
        CHECK_MESSAGE(r1.max_rel <= 1e-4, r1.worst);
        // softmax rows sum to one, so every gradient of f vanishes
        auto r2 = gradcheck(f, {{"w1", w1}});
        CHECK(r2.max_rel <= 1e-4);
    }
}

TEST_CASE("every differentiable op passes finite differences") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 8; ++trial) {
        std::size_t m = rand_dim(rng, 2), n = rand_dim(rng, 2);
        auto a = random_tensor(Shape(m, n), rng), b = random_tensor(Shape(m, n), rng);
        auto row_b = random_tensor(Shape(n), rng), col = random_tensor(Shape(m, 1), rng);
        auto pos = Tensor::from(Shape(m, n), std::vector<Real>(m * n, 0.0));
        for (std::size_t i = 0; i < m * n; ++i) pos.mutable_data()[i] = 0.5 + std::abs(a.at(i));
        auto probe = random_tensor(Shape(m, n), rng);
        auto dot = [&](const Tensor& t) { return sum(mul(t, t.shape() == probe.shape() ? probe : t)); };

        std::vector<std::pair<std::string, std::function<Tensor()>>> cases = {
            {"add-row", [&] { return dot(add(a, row_b)); }},
            {"sub-col", [&] { return dot(sub(a, col)); }},
            {"mul", [&] { return dot(mul(a, b)); }},
            {"scale", [&] { return dot(scale(a, 1.7)); }},
            {"one_minus", [&] { return dot(one_minus(a)); }},
            {"exp", [&] { return dot(exp(scale(a, 0.3))); }},
            {"log", [&] { return dot(log(pos)); }},
            {"sigmoid", [&] { return dot(sigmoid(a)); }},
            {"transpose", [&] { return sum(mul(transpose(a), transpose(probe))); }},
            {"sum_rows", [&] { return sum(mul(sum_rows(a), row_b)); }},
            {"sum_lastdim", [&] { return sum(tanh(sum_lastdim(a))); }},
            {"max_lastdim", [&] { return sum(tanh(max_lastdim(a))); }},
            {"masked_softmax", [&] {
                 std::vector<std::uint8_t> mask(n, 1);
                 mask[0] = 0;
                 return sum(mul(masked_softmax(row(a, 0), mask), row_b));
             }},
            {"cross_entropy", [&] { return cross_entropy(row(a, 0), n - 1); }},
            {"concat", [&] { return dot(slice(concat({a, b}, 1), 1, n + 1, 1)); }},
            {"slice-rows", [&] { return sum(tanh(slice(a, 1, m, 0))); }},
            {"reverse_rows", [&] { return dot(reverse_rows(a)); }},
            {"repeat_rows", [&] { return sum(tanh(repeat_rows(row_b, 3))); }},
            {"element", [&] { return mul(element(a, 1), element(b, 0)); }},
            {"reshape", [&] { return sum(tanh(reshape(a, Shape(m * n)))); }},
            {"max_pool_groups", [&] { return sum(tanh(max_pool_groups(concat({a, b}, 0), 2))); }},
            {"unfold_windows", [&] { return sum(tanh(unfold_windows(concat({a, b}, 0), m, 2))); }},
        };
        for (auto& [name, f] : cases) {
            auto rep = gradcheck(f, {{"a", a}, {"b", b}, {"row", row_b}, {"col", col}, {"pos", pos}});
            CHECK_MESSAGE(rep.max_rel <= 1e-4, name << ": " << rep.worst);
        }
    }
}

TEST_CASE("embedding lookup accumulates gradient and freezes the pad row") {
    auto table = Tensor::from(Shape(3, 2), {0, 0, 1, 2, 3, 4}, true);
    std::vector<std::size_t> ids = {1, 0, 1};
    backward(sum(embedding_lookup(table, ids, 0)));
    auto g = table.grad();
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 2.0);
    CHECK(g[3] == 2.0);
    CHECK(g[4] == 0.0);
}

TEST_CASE("dropout is identity in evaluation") {
    std::mt19937_64 rng(1);
    auto x = Tensor::vector({1, 2, 3});
    auto y = dropout(x, 0.5, false, rng);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y.at(i) == x.at(i));
    auto z = dropout(Tensor::from(Shape(100), std::vector<Real>(100, 1.0)), 0.5, true, rng);
    for (Real v : z.data()) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("apply dispatches by name") {
    auto a = Tensor::from(Shape(2, 3), {1, 2, 3, 4, 5, 6});
    auto b = Tensor::from(Shape(3, 2), {1, 0, 0, 1, 1, 1});
    std::vector<Tensor> in = {a, b};
    auto c = epar::apply("matmul", in);
    auto want = matmul_oracle(a, b);
    for (std::size_t i = 0; i < 4; ++i) CHECK(c.data()[i] == want[i]);
    std::vector<Tensor> one = {a};
    std::vector<Real> args = {1, 3, 1};
    CHECK(epar::apply("slice", one, args).shape() == Shape(2, 2));
    CHECK(epar::apply("softmax_lastdim", one).shape() == a.shape());
    CHECK_THROWS_AS(epar::apply("conv3d", one), ContractError);
    CHECK_THROWS_AS(epar::apply("matmul", one), DimensionError);
}

TEST_CASE("softmax property: distribution and shift invariance") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t m = rand_dim(rng), n = rand_dim(rng);
        auto x = random_tensor(Shape(m, n), rng, 5.0);
        auto s = softmax_lastdim(x);
        auto t = softmax_lastdim(add_scalar(x, 37.5));
        for (std::size_t i = 0; i < m; ++i) {
            Real total = 0;
            for (std::size_t j = 0; j < n; ++j) {
                REQUIRE(s.at(i, j) >= 0.0);
                total += s.at(i, j);
                REQUIRE(std::abs(s.at(i, j) - t.at(i, j)) <= 1e-9);
            }
            REQUIRE(std::abs(total - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("masked softmax gives masked entries exactly zero") {
    auto s = masked_softmax(Tensor::vector({5, 1, 2}), std::vector<std::uint8_t>{0, 1, 1});
    CHECK(s.at(0) == 0.0);
    CHECK(s.at(1) + s.at(2) == doctest::Approx(1.0));
}

TEST_CASE("forward values are bit-identical across runs") {
    auto run = [] {
        std::mt19937_64 rng(99);
        auto x = random_tensor(Shape(4, 5), rng), w = random_tensor(Shape(5, 3), rng);
        auto y = softmax_lastdim(tanh(matmul(x, w)));
        return std::vector<Real>(y.data().begin(), y.data().end());
    };
    CHECK(run() == run());
}

// ---- cells --------------------------------------------------------------

TEST_CASE("gru with zero weights halves the state") {
    std::mt19937_64 rng(1);
    ParamStore store;
    auto p = GruParams::create(store, "g", 3, 4, rng);
    for (auto& [_, t] : store.all())
        for (auto& v : t.mutable_data()) v = 0.0;
    auto h = gru_cell(Tensor::vector({1, 2, 3}), Tensor::vector({1, -2, 4, 0.5}), p);
    CHECK(h.at(0) == doctest::Approx(0.5));
    CHECK(h.at(1) == doctest::Approx(-1.0));
    CHECK(h.at(2) == doctest::Approx(2.0));
    CHECK(h.at(3) == doctest::Approx(0.25));
    auto z = gru_cell(Tensor::vector({1, 2, 3}), Tensor::zeros(Shape(4)), p);
    for (Real v : z.data()) CHECK(v == 0.0);
    CHECK_THROWS_AS(gru_cell(Tensor::vector({1, 2}), Tensor::zeros(Shape(4)), p), DimensionError);
}

TEST_CASE("lstm hand-evaluated gates") {
    std::mt19937_64 rng(1);
    ParamStore store;
    auto p = LstmParams::create(store, "l", 2, 3, rng);
    for (auto& [_, t] : store.all())
        for (auto& v : t.mutable_data()) v = 0.0;
    auto s = lstm_cell(Tensor::vector({1, 1}), lstm_zero_state(p), p);
    for (Real v : s.h.data()) CHECK(v == 0.0);

    for (auto& v : p.b.mutable_data()) v = 1.0;
    auto t = lstm_cell(Tensor::zeros(Shape(2)), lstm_zero_state(p), p);
    const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
    const double c = sig1 * std::tanh(1.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(t.c.at(i) == doctest::Approx(c).epsilon(1e-12));
        CHECK(t.h.at(i) == doctest::Approx(sig1 * std::tanh(c)).epsilon(1e-12));
    }
}

TEST_CASE("cells pass finite differences on random dims") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 6; ++trial) {
        std::size_t in = rand_dim(rng), hid = rand_dim(rng);
        ParamStore store;
        auto g = GruParams::create(store, "g", in, hid, rng);
        auto l = LstmParams::create(store, "l", in, hid, rng);
        auto x = random_tensor(Shape(in), rng), h0 = random_tensor(Shape(hid), rng), c0 = random_tensor(Shape(hid), rng);
        auto probe = random_tensor(Shape(hid), rng);
        auto fg = [&] { return sum(mul(gru_cell(x, h0, g), probe)); };
        auto fl = [&] {
            auto s = lstm_cell(x, LstmState{h0, c0}, l);
            return sum(mul(add(s.h, s.c), probe));
        };
        auto rg = gradcheck(fg, {{"x", x}, {"h", h0}, {"wx", g.wx}, {"uzr", g.uzr}, {"un", g.un}, {"b", g.b}});
        CHECK_MESSAGE(rg.max_rel <= 1e-4, rg.worst);
        auto rl = gradcheck(fl, {{"x", x}, {"h", h0}, {"c", c0}, {"wx", l.wx}, {"wh", l.wh}, {"b", l.b}});
        CHECK_MESSAGE(rl.max_rel <= 1e-4, rl.worst);
    }
}

TEST_CASE("bilstm sequence passes finite differences") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 4; ++trial) {
        std::size_t len = rand_dim(rng), in = rand_dim(rng), hid = rand_dim(rng);
        ParamStore store;
        auto f = LstmParams::create(store, "f", in, hid, rng);
        auto b = LstmParams::create(store, "b", in, hid, rng);
        auto xs = random_tensor(Shape(len, in), rng);
        auto probe = random_tensor(Shape(len, 2 * hid), rng);
        auto fn = [&] {
            auto s = run_bilstm(xs, f, b);
            return add(sum(mul(s.states, probe)), sum(s.finals()));
        };
        auto rep = gradcheck(fn, {{"xs", xs}, {"f.wx", f.wx}, {"f.wh", f.wh}, {"b.wh", b.wh}, {"b.b", b.b}});
        CHECK_MESSAGE(rep.max_rel <= 1e-4, rep.worst);
    }
}

TEST_CASE("highway gate closed carries the input") {
    std::mt19937_64 rng(2);
    ParamStore store;
    auto hw = HighwayLayer::create(store, "hw", 4, rng);
    for (auto& v : hw.transform.bias.mutable_data()) v = -1e6;
    auto x = random_tensor(Shape(3, 4), rng);
    auto y = hw(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y.at(i) - x.at(i)) <= 1e-6);
}

// ---- optimizer and checkpoints ---------------------------------------------

TEST_CASE("adam first step moves by the learning rate") {
    std::mt19937_64 rng(1);
    ParamStore store;
    auto& w = store.add("w", Shape(2), Init::Constant, rng, 1.0);
    w.mutable_grad()[0] = 0.3;
    w.mutable_grad()[1] = -7.0;
    AdamState st;
    adam_step(store, st);
    CHECK(std::abs(w.at(0) - (1.0 - 0.001)) <= 1e-6);
    CHECK(std::abs(w.at(1) - (1.0 + 0.001)) <= 1e-6);
    CHECK(st.step == 1);

    const Real before = w.at(0);
    const Real d1 = 0.001;
    w.mutable_grad()[0] = 0.3;
    w.mutable_grad()[1] = -7.0;
    adam_step(store, st);
    CHECK(std::abs(w.at(0) - before) <= d1 * (1 + 1e-6));
    CHECK(st.step == 2);
}

TEST_CASE("adam leaves parameters alone under zero gradient and requires gradients") {
    std::mt19937_64 rng(1);
    ParamStore store;
    auto& w = store.add("w", Shape(3), Init::Normal, rng, 1.0);
    std::vector<Real> keep(w.data().begin(), w.data().end());
    w.mutable_grad();
    AdamState st;
    adam_step(store, st);
    CHECK(std::vector<Real>(w.data().begin(), w.data().end()) == keep);
    w.zero_grad();
    CHECK_THROWS_AS(adam_step(store, st), ContractError);
}

TEST_CASE("checkpoint round trip in float32") {
    std::mt19937_64 rng(4);
    ParamStore a, b;
    a.add("x.w", Shape(3, 2), Init::Normal, rng, 1.0);
    a.add("y", Shape(5), Init::Normal, rng, 1.0);
    b.add("x.w", Shape(3, 2), Init::Zeros, rng);
    b.add("y", Shape(5), Init::Zeros, rng);
    auto path = std::filesystem::temp_directory_path() / "epar_ckpt_test.bin";
    save_checkpoint(path, a);
    load_checkpoint(path, b);
    for (const auto& name : a.names())
        for (std::size_t i = 0; i < a.get(name).size(); ++i)
            CHECK(b.get(name).at(i) == static_cast<Real>(static_cast<float>(a.get(name).at(i))));
    CHECK(std::filesystem::exists(path.string() + ".json"));
    ParamStore c;
    c.add("y", Shape(4), Init::Zeros, rng);
    CHECK_THROWS(load_checkpoint(path, c));
}
