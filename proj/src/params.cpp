#include "epar/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace epar {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

Tensor& ParamStore::add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng, Real arg) {
    if (params_.count(name)) throw ContractError("parameter '" + name + "' registered twice");
    std::vector<Real> values(shape.size(), 0.0);
    switch (init) {
        case Init::Zeros:
            break;
        case Init::Constant:
            std::fill(values.begin(), values.end(), arg);
            break;
        case Init::Normal: {
            std::normal_distribution<Real> dist(0.0, arg);
            for (auto& v : values) v = dist(rng);
            break;
        }
        case Init::Xavier: {
            Real fan_in = static_cast<Real>(shape.rank() == 2 ? shape.dim(0) : shape.size());
            Real fan_out = static_cast<Real>(shape.rank() == 2 ? shape.dim(1) : 1);
            Real bound = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<Real> dist(-bound, bound);
            for (auto& v : values) v = dist(rng);
            break;
        }
    }
    auto [it, _] = params_.emplace(name, Tensor::from(shape, std::move(values), true));
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : params_) out.push_back(k);
    return out;
}

void ParamStore::zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
}

Real ParamStore::grad_norm() const {
    Real s = 0;
    for (const auto& [_, t] : params_)
        for (Real g : t.grad()) s += g * g;
    return std::sqrt(s);
}

void ParamStore::clip_grad_norm(Real max_norm) {
    Real norm = grad_norm();
    if (norm <= max_norm || norm == 0.0) return;
    Real f = max_norm / norm;
    for (auto& [_, t] : params_) {
        if (!t.has_grad()) continue;
        for (Real& g : t.mutable_grad()) g *= f;
    }
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.size();
    return n;
}

void adam_step(ParamStore& params, AdamState& s) {
    for (const auto& [name, t] : params.all())
        if (!t.has_grad()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");
    s.step += 1;
    const Real bc1 = 1.0 - std::pow(s.beta1, static_cast<Real>(s.step));
    const Real bc2 = 1.0 - std::pow(s.beta2, static_cast<Real>(s.step));
    for (auto& [name, t] : params.all()) {
        auto& m = s.m[name];
        auto& v = s.v[name];
        if (m.size() != t.size()) m.assign(t.size(), 0.0);
        if (v.size() != t.size()) v.assign(t.size(), 0.0);
        auto w = t.mutable_data();
        auto g = t.grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
            v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
            Real mhat = m[i] / bc1, vhat = v[i] / bc2;
            w[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
}

void write_records(const std::filesystem::path& path,
                   const std::map<std::string, std::pair<Shape, std::vector<Real>>>& records) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    for (const auto& [name, rec] : records) {
        const auto& [shape, values] = rec;
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(shape.rank()));
        for (auto d : shape.dims()) put_u32(os, static_cast<std::uint32_t>(d));
        for (Real v : values) {
            float f = static_cast<float>(v);
            os.write(reinterpret_cast<const char*>(&f), 4);
        }
    }
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::map<std::string, std::pair<Shape, std::vector<Real>>> read_records(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::map<std::string, std::pair<Shape, std::vector<Real>>> out;
    while (is.peek() != std::char_traits<char>::eof()) {
        std::uint32_t len = get_u32(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        std::uint32_t rank = get_u32(is);
        if (!is || rank > 2) throw std::runtime_error("corrupt checkpoint record in " + path.string());
        Shape shape;
        if (rank == 1) shape = Shape(get_u32(is));
        if (rank == 2) {
            auto r = get_u32(is);
            shape = Shape(r, get_u32(is));
        }
        std::vector<Real> values(shape.size());
        for (auto& v : values) {
            float f = 0;
            is.read(reinterpret_cast<char*>(&f), 4);
            v = f;
        }
        if (!is) throw std::runtime_error("truncated checkpoint " + path.string());
        out.emplace(std::move(name), std::make_pair(shape, std::move(values)));
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
    std::map<std::string, std::pair<Shape, std::vector<Real>>> recs;
    nlohmann::json manifest;
    manifest["params"] = nlohmann::json::array();
    for (const auto& [name, t] : params.all()) {
        recs.emplace(name, std::make_pair(t.shape(), std::vector<Real>(t.data().begin(), t.data().end())));
        manifest["params"].push_back({{"name", name}, {"shape", t.shape().dims()}});
    }
    write_records(path, recs);
    std::ofstream js(path.string() + ".json", std::ios::trunc);
    js << manifest.dump(2) << '\n';
}

void load_checkpoint(const std::filesystem::path& path, ParamStore& params) {
    auto recs = read_records(path);
    for (auto& [name, t] : params.all()) {
        auto it = recs.find(name);
        if (it == recs.end()) throw std::runtime_error("checkpoint " + path.string() + " lacks parameter '" + name + "'");
        if (!(it->second.first == t.shape()))
            throw DimensionError("checkpoint shape " + it->second.first.str() + " for '" + name + "' but model expects " +
                                 t.shape().str());
        std::copy(it->second.second.begin(), it->second.second.end(), t.mutable_data().begin());
    }
}

void save_adam(const std::filesystem::path& path, const AdamState& state, const ParamStore& params) {
    std::map<std::string, std::pair<Shape, std::vector<Real>>> recs;
    for (const auto& [name, t] : params.all()) {
        auto m = state.m.count(name) ? state.m.at(name) : std::vector<Real>(t.size(), 0.0);
        auto v = state.v.count(name) ? state.v.at(name) : std::vector<Real>(t.size(), 0.0);
        recs.emplace("m/" + name, std::make_pair(t.shape(), std::move(m)));
        recs.emplace("v/" + name, std::make_pair(t.shape(), std::move(v)));
    }
    recs.emplace("step", std::make_pair(Shape{}, std::vector<Real>{static_cast<Real>(state.step)}));
    write_records(path, recs);
}

void load_adam(const std::filesystem::path& path, AdamState& state, const ParamStore& params) {
    auto recs = read_records(path);
    for (const auto& [name, t] : params.all()) {
        auto m = recs.find("m/" + name), v = recs.find("v/" + name);
        if (m == recs.end() || v == recs.end()) throw std::runtime_error("optimizer state lacks '" + name + "'");
        state.m[name] = m->second.second;
        state.v[name] = v->second.second;
    }
    state.step = static_cast<std::int64_t>(recs.at("step").second.at(0));
}

}  // namespace epar
