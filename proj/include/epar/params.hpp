#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "epar/tensor.hpp"

namespace epar {

enum class Init { Zeros, Xavier, Normal, Constant };

// Named trainable tensors. Iteration order is lexicographic by name, which
// fixes the order of optimizer updates and checkpoint records.
class ParamStore {
public:
    Tensor& add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng, Real arg = 0.0);
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    std::vector<std::string> names() const;
    const std::map<std::string, Tensor>& all() const { return params_; }
    std::map<std::string, Tensor>& all() { return params_; }

    void zero_grad();
    // Global L2 norm of all present gradients.
    Real grad_norm() const;
    void clip_grad_norm(Real max_norm);
    std::size_t parameter_count() const;

private:
    std::map<std::string, Tensor> params_;
};

struct AdamState {
    Real lr = 0.001;
    Real beta1 = 0.9;
    Real beta2 = 0.999;
    Real eps = 1e-8;
    std::int64_t step = 0;
    std::map<std::string, std::vector<Real>> m;
    std::map<std::string, std::vector<Real>> v;
};

// One bias-corrected Adam update over every parameter in `params`; each must
// carry a gradient.
void adam_step(ParamStore& params, AdamState& state);

// Binary record per parameter: u32 name length, name bytes, u32 rank,
// u32 dims, then float32 values, all little-endian. A JSON manifest of
// names and shapes is written next to it as <path>.json.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
void load_checkpoint(const std::filesystem::path& path, ParamStore& params);

// Named flat tensors in the checkpoint record format (no manifest).
void write_records(const std::filesystem::path& path, const std::map<std::string, std::pair<Shape, std::vector<Real>>>& records);
std::map<std::string, std::pair<Shape, std::vector<Real>>> read_records(const std::filesystem::path& path);

void save_adam(const std::filesystem::path& path, const AdamState& state, const ParamStore& params);
void load_adam(const std::filesystem::path& path, AdamState& state, const ParamStore& params);

}  // namespace epar
