#pragma once

// Dense tensors (rank 0..2) with a thread-local reverse-mode tape.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace epar {

using Real = double;

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

class Shape {
public:
    Shape() = default;  // scalar
    explicit Shape(std::size_t n) : rank_(1), dims_{n, 1} {}
    Shape(std::size_t rows, std::size_t cols) : rank_(2), dims_{rows, cols} {}

    int rank() const { return rank_; }
    std::size_t dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
    std::size_t size() const {
        if (rank_ == 0) return 1;
        if (rank_ == 1) return dims_[0];
        return dims_[0] * dims_[1];
    }
    // Row/column view: scalars are 1x1, vectors are one row.
    std::size_t rows() const { return rank_ == 2 ? dims_[0] : 1; }
    std::size_t cols() const { return rank_ == 0 ? 1 : (rank_ == 1 ? dims_[0] : dims_[1]); }
    std::vector<std::size_t> dims() const;
    std::string str() const;

    friend bool operator==(const Shape& a, const Shape& b) {
        if (a.rank_ != b.rank_) return false;
        for (int i = 0; i < a.rank_; ++i)
            if (a.dims_[static_cast<std::size_t>(i)] != b.dims_[static_cast<std::size_t>(i)]) return false;
        return true;
    }

private:
    int rank_ = 0;
    std::array<std::size_t, 2> dims_{1, 1};
};

struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // empty until something flows into it
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<Real>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), Real{0});
        return grad;
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
    static Tensor scalar(Real v, bool requires_grad = false);
    static Tensor vector(std::vector<Real> values, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rows() const { return node_->shape.rows(); }
    std::size_t cols() const { return node_->shape.cols(); }
    int rank() const { return node_->shape.rank(); }

    std::span<const Real> data() const { return node_->value; }
    std::span<Real> mutable_data() { return node_->value; }
    Real item() const;
    Real at(std::size_t i) const { return node_->value[i]; }
    Real at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const Real> grad() const { return node_->grad; }
    std::span<Real> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad() { node_->grad.clear(); }

    // Copy of the values with no history.
    Tensor detach() const;

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Recorded operations of the current thread, in creation order.
class Tape {
public:
    static Tape& current();

    void record(std::shared_ptr<Node> n) { nodes_.push_back(std::move(n)); }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    void clear() { nodes_.clear(); }

    // Propagates d(loss)/d(.) to every recorded node and every leaf with
    // requires_grad; leaf gradients accumulate across calls. Clears the tape.
    void backward(const Tensor& loss);

private:
    std::vector<std::shared_ptr<Node>> nodes_;
};

void backward(const Tensor& loss);

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise with 2-D broadcasting: equal shapes, a row vector ([n] or [1xn])
// across rows, a column ([m x 1]) across columns, or a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real factor);
Tensor add_scalar(const Tensor& a, Real c);
Tensor one_minus(const Tensor& a);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_rows(const Tensor& a);      // [m x n] -> [n]
Tensor sum_lastdim(const Tensor& a);   // [m x n] -> [m], [n] -> scalar
Tensor max_lastdim(const Tensor& a);   // [m x n] -> [m]
Tensor max_pool_groups(const Tensor& a, std::size_t group);  // [(g*k) x n] -> [g x n]

// Softmax along the last axis. Entries with mask == 0 receive exactly 0.
Tensor softmax_lastdim(const Tensor& a);
Tensor masked_softmax(const Tensor& logits, std::span<const std::uint8_t> mask);
// -log softmax(logits)[target] over the unmasked entries; scalar.
Tensor cross_entropy(const Tensor& logits, std::size_t target,
                     std::span<const std::uint8_t> mask = {});

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor stack_rows(std::span<const Tensor> rows);  // list of [n] -> [m x n]
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end, int axis);
Tensor row(const Tensor& a, std::size_t r);        // [m x n] -> [n]
Tensor element(const Tensor& a, std::size_t i);    // -> scalar
Tensor reverse_rows(const Tensor& a);
Tensor repeat_rows(const Tensor& v, std::size_t m);  // [n] -> [m x n]
Tensor reshape(const Tensor& a, Shape shape);

// Rows of `table` at `ids`; `frozen_row` (if in range) never receives gradient.
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids,
                        std::size_t frozen_row = static_cast<std::size_t>(-1));

// [(g*len) x c] -> [(g*(len-width+1)) x (width*c)], windows never cross groups.
Tensor unfold_windows(const Tensor& a, std::size_t group_len, std::size_t width);

// Inverted dropout; identity when !training or rate == 0.
Tensor dropout(const Tensor& a, Real rate, bool training, std::mt19937_64& rng);

// Name-based dispatch over the core op set. Parameterised ops take their
// extra arguments from `args`: slice {begin, end, axis}, concat {axis},
// dropout {rate} (train mode, seeded from args[1]), embedding_lookup uses
// inputs[1] as ids.
Tensor apply(std::string_view op, std::span<const Tensor> inputs, std::span<const Real> args = {});

}  // namespace epar
