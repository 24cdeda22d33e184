#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "epar/config.hpp"
#include "epar/corpus.hpp"
#include "epar/params.hpp"
#include "epar/tensor.hpp"

namespace testing {

using epar::Real;
using epar::Tensor;

struct GradReport {
    double max_rel = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

// Central differences against the tape gradient for up to `per_tensor`
// randomly chosen entries of each input. Entries whose analytic and numeric
// values are both below `floor` count as agreeing. Inputs named in
// `pad_rows` keep row 0 fixed (a padding vector that never trains).
inline GradReport gradcheck(const std::function<Tensor()>& f, std::vector<std::pair<std::string, Tensor>> inputs,
                            std::size_t per_tensor = 12, std::uint64_t seed = 3, double h = 1e-5, double floor = 1e-7,
                            const std::set<std::string>& pad_rows = {"char"}) {
    for (auto& [_, t] : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    epar::backward(f());
    GradReport rep;
    std::mt19937_64 rng(seed);
    for (auto& [name, t] : inputs) {
        std::vector<Real> analytic(t.size(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        const std::size_t first = pad_rows.count(name) && t.rank() == 2 ? t.cols() : 0;
        std::vector<std::size_t> idx;
        for (std::size_t i = first; i < t.size(); ++i) idx.push_back(i);
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
        idx.resize(std::min(per_tensor, idx.size()));
        for (std::size_t i : idx) {
            auto data = t.mutable_data();
            const Real keep = data[i];
            Real plus, minus;
            {
                epar::NoGradGuard g;
                data[i] = keep + h;
                plus = f().item();
                data[i] = keep - h;
                minus = f().item();
                data[i] = keep;
            }
            const double numeric = (plus - minus) / (2 * h);
            const double a = analytic[i];
            const double scale = std::max(std::abs(a), std::abs(numeric));
            const double rel = scale < floor ? 0.0 : std::abs(a - numeric) / scale;
            ++rep.checked;
            if (rel > rep.max_rel) {
                rep.max_rel = rel;
                rep.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                            " numeric=" + std::to_string(numeric);
            }
        }
    }
    for (auto& [_, t] : inputs) t.zero_grad();
    return rep;
}

inline Tensor random_tensor(epar::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    std::vector<Real> v(shape.size());
    for (auto& x : v) x = d(rng);
    return Tensor::from(shape, std::move(v));
}

inline std::size_t rand_dim(std::mt19937_64& rng, std::size_t lo = 1, std::size_t hi = 8) {
    return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

// Small dims so that whole-model checks stay fast.
inline epar::Config tiny_config() {
    epar::Config c = epar::preset("small");
    c.word_dim = 6;
    c.lstm_units = 3;
    c.char_dim = 3;
    c.char_width = 2;
    c.char_filters = 2;
    c.attention_dim = 3;
    c.proposer_hidden = 4;
    c.assembler_hidden = 4;
    c.similarity_hidden = 4;
    c.dropout = 0.0;
    c.summary = epar::SummaryMode::SelfAttention;
    c.embedding_std = 1.0;
    c.char_embedding_std = 0.5;
    return c;
}

inline epar::RawRecord toy_record() {
    epar::RawRecord r;
    r.id = "toy";
    r.query = "located_in rinado";
    r.candidates = {"doga", "gasi", "vulon kes"};
    r.answer = "doga";
    r.supports = {"rinado is located in dirom . rinado has parks .", "dirom is part of doga . dirom has old farms .",
                  "kukiba borders gasi .", "zanu has hills . zanu is named after lobo ."};
    return r;
}

inline epar::QueryInstance toy_instance() { return epar::instance_from_record(toy_record(), false); }

}  // namespace testing
