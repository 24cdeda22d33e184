#include "epar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace epar {

std::vector<std::size_t> Shape::dims() const {
    std::vector<std::size_t> out;
    for (int i = 0; i < rank_; ++i) out.push_back(dims_[static_cast<std::size_t>(i)]);
    return out;
}

std::string Shape::str() const {
    std::ostringstream os;
    os << '[';
    for (int i = 0; i < rank_; ++i) {
        if (i) os << 'x';
        os << dims_[static_cast<std::size_t>(i)];
    }
    os << ']';
    return os.str();
}

namespace {

thread_local bool t_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

[[noreturn]] void dim_error(const char* op, const std::string& detail) {
    throw DimensionError(std::string(op) + ": " + detail);
}

Tensor finish(const char* op, Shape shape, std::vector<Real> values, std::vector<NodePtr> parents,
              std::function<void(Node&)> bw) {
    for (Real v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(values);
    n->op = op;
    bool needs = false;
    if (t_grad_enabled) {
        for (const auto& p : parents) needs = needs || p->requires_grad;
    }
    if (needs) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(bw);
        Tape::current().record(n);
    }
    return Tensor(std::move(n));
}

// Gradient buffer of parent i, or nullptr when it takes no gradient.
Real* pgrad(Node& self, std::size_t i) {
    Node& p = *self.parents[i];
    return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

template <class F, class D>
Tensor unary(const char* op, const Tensor& a, F f, D dfdx) {
    const auto& x = a.node()->value;
    std::vector<Real> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return finish(op, a.shape(), std::move(y), {a.node_ptr()}, [dfdx](Node& self) {
        Real* ga = pgrad(self, 0);
        if (!ga) return;
        const auto& x = self.parents[0]->value;
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += self.grad[i] * dfdx(x[i], self.value[i]);
    });
}

struct Broadcast {
    std::size_t m, n, am, an, bm, bn;
    Shape out;
    std::size_t ai(std::size_t i, std::size_t j) const { return (am == 1 ? 0 : i) * an + (an == 1 ? 0 : j); }
    std::size_t bi(std::size_t i, std::size_t j) const { return (bm == 1 ? 0 : i) * bn + (bn == 1 ? 0 : j); }
};

Broadcast broadcast(const char* op, const Tensor& a, const Tensor& b) {
    Broadcast bc{};
    if (a.shape() == b.shape()) {
        bc.m = bc.am = bc.bm = a.rows();
        bc.n = bc.an = bc.bn = a.cols();
        bc.out = a.shape();
        return bc;
    }
    bc.am = a.rows();
    bc.an = a.cols();
    bc.bm = b.rows();
    bc.bn = b.cols();
    bc.m = std::max(bc.am, bc.bm);
    bc.n = std::max(bc.an, bc.bn);
    if ((bc.am != 1 && bc.am != bc.m) || (bc.bm != 1 && bc.bm != bc.m) || (bc.an != 1 && bc.an != bc.n) ||
        (bc.bn != 1 && bc.bn != bc.n)) {
        dim_error(op, "cannot broadcast " + a.shape().str() + " with " + b.shape().str());
    }
    if (a.size() == bc.m * bc.n && a.rank() >= b.rank())
        bc.out = a.shape();
    else if (b.size() == bc.m * bc.n)
        bc.out = b.shape();
    else
        bc.out = Shape(bc.m, bc.n);
    return bc;
}

enum class BinOp { Add, Sub, Mul };

Tensor binary(const char* op, BinOp kind, const Tensor& a, const Tensor& b) {
    Broadcast bc = broadcast(op, a, b);
    const auto& x = a.node()->value;
    const auto& y = b.node()->value;
    std::vector<Real> out(bc.m * bc.n);
    for (std::size_t i = 0; i < bc.m; ++i) {
        for (std::size_t j = 0; j < bc.n; ++j) {
            Real u = x[bc.ai(i, j)], v = y[bc.bi(i, j)];
            out[i * bc.n + j] = kind == BinOp::Add ? u + v : kind == BinOp::Sub ? u - v : u * v;
        }
    }
    return finish(op, bc.out, std::move(out), {a.node_ptr(), b.node_ptr()}, [bc, kind](Node& self) {
        Real* ga = pgrad(self, 0);
        Real* gb = pgrad(self, 1);
        const auto& x = self.parents[0]->value;
        const auto& y = self.parents[1]->value;
        for (std::size_t i = 0; i < bc.m; ++i) {
            for (std::size_t j = 0; j < bc.n; ++j) {
                Real g = self.grad[i * bc.n + j];
                std::size_t ia = bc.ai(i, j), ib = bc.bi(i, j);
                switch (kind) {
                    case BinOp::Add:
                        if (ga) ga[ia] += g;
                        if (gb) gb[ib] += g;
                        break;
                    case BinOp::Sub:
                        if (ga) ga[ia] += g;
                        if (gb) gb[ib] -= g;
                        break;
                    case BinOp::Mul:
                        if (ga) ga[ia] += g * y[ib];
                        if (gb) gb[ib] += g * x[ia];
                        break;
                }
            }
        }
    });
}

Real stable_sigmoid(Real x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    Real e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value.assign(shape.size(), Real{0});
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<Real> values, bool requires_grad) {
    if (values.size() != shape.size())
        throw DimensionError("Tensor::from: " + std::to_string(values.size()) + " values for shape " + shape.str());
    for (Real v : values)
        if (!std::isfinite(v)) throw NumericError("Tensor::from: non-finite input");
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(Real v, bool requires_grad) { return from(Shape{}, {v}, requires_grad); }

Tensor Tensor::vector(std::vector<Real> values, bool requires_grad) {
    Shape s(values.size());
    return from(s, std::move(values), requires_grad);
}

Real Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape().str());
    return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

// ---- Tape -----------------------------------------------------------------

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward: loss must be a scalar, got " + (loss.defined() ? loss.shape().str() : "undefined"));
    if (!loss.requires_grad()) throw ContractError("backward: loss does not depend on any trainable tensor");
    loss.node()->ensure_grad()[0] += 1.0;
    if (nodes_.empty()) return;  // loss is itself a leaf
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (!n.grad.empty() && n.backward) n.backward(n);
    }
    for (auto& n : nodes_) {
        n->backward = nullptr;
        n->parents.clear();
    }
    nodes_.clear();
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() == 0 || b.rank() == 0) dim_error("matmul", "scalar operand");
    const std::size_t m = a.rank() == 2 ? a.shape().dim(0) : 1;
    const std::size_t k = a.rank() == 2 ? a.shape().dim(1) : a.shape().dim(0);
    const std::size_t kb = b.shape().dim(0);
    const std::size_t n = b.rank() == 2 ? b.shape().dim(1) : 1;
    if (k != kb) dim_error("matmul", "inner dimensions differ: " + a.shape().str() + " x " + b.shape().str());
    Shape out;
    if (a.rank() == 2 && b.rank() == 2)
        out = Shape(m, n);
    else if (a.rank() == 1 && b.rank() == 2)
        out = Shape(n);
    else if (a.rank() == 2 && b.rank() == 1)
        out = Shape(m);
    const auto& A = a.node()->value;
    const auto& B = b.node()->value;
    std::vector<Real> C(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        Real* c = C.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            Real av = A[i * k + p];
            if (av == 0.0) continue;
            const Real* brow = B.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
        }
    }
    return finish("matmul", out, std::move(C), {a.node_ptr(), b.node_ptr()}, [m, k, n](Node& self) {
        Real* ga = pgrad(self, 0);
        Real* gb = pgrad(self, 1);
        const auto& A = self.parents[0]->value;
        const auto& B = self.parents[1]->value;
        const Real* G = self.grad.data();
        for (std::size_t i = 0; i < m; ++i) {
            const Real* g = G + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const Real* brow = B.data() + p * n;
                if (ga) {
                    Real acc = 0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[j] * brow[j];
                    ga[i * k + p] += acc;
                }
                if (gb) {
                    Real av = A[i * k + p];
                    if (av == 0.0) continue;
                    Real* gbrow = gb + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * g[j];
                }
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) dim_error("transpose", "needs a matrix, got " + a.shape().str());
    const std::size_t m = a.rows(), n = a.cols();
    const auto& x = a.node()->value;
    std::vector<Real> y(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
    return finish("transpose", Shape(n, m), std::move(y), {a.node_ptr()}, [m, n](Node& self) {
        Real* ga = pgrad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
    });
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::Mul, a, b); }

Tensor scale(const Tensor& a, Real factor) {
    return unary("scale", a, [factor](Real x) { return x * factor; }, [factor](Real, Real) { return factor; });
}

Tensor add_scalar(const Tensor& a, Real c) {
    return unary("add_scalar", a, [c](Real x) { return x + c; }, [](Real, Real) { return 1.0; });
}

Tensor one_minus(const Tensor& a) {
    return unary("one_minus", a, [](Real x) { return 1.0 - x; }, [](Real, Real) { return -1.0; });
}

Tensor tanh(const Tensor& a) {
    return unary("tanh", a, [](Real x) { return std::tanh(x); }, [](Real, Real y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary("sigmoid", a, stable_sigmoid, [](Real, Real y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
    return unary("relu", a, [](Real x) { return x > 0 ? x : 0.0; }, [](Real x, Real) { return x > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary("exp", a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary("log", a, [](Real x) { return std::log(x); }, [](Real x, Real) { return 1.0 / x; });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
    Real s = 0;
    for (Real v : a.data()) s += v;
    return finish("sum", Shape{}, {s}, {a.node_ptr()}, [](Node& self) {
        Real* ga = pgrad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) ga[i] += self.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<Real>(a.size())); }

Tensor sum_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<Real> y(n, 0.0);
    const auto& x = a.node()->value;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[j] += x[i * n + j];
    return finish("sum_rows", Shape(n), std::move(y), {a.node_ptr()}, [m, n](Node& self) {
        Real* ga = pgrad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j];
    });
}

Tensor sum_lastdim(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<Real> y(m, 0.0);
    const auto& x = a.node()->value;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[i] += x[i * n + j];
    Shape out = a.rank() == 2 ? Shape(m) : Shape{};
    return finish("sum_lastdim", out, std::move(y), {a.node_ptr()}, [m, n](Node& self) {
        Real* ga = pgrad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[i];
    });
}

Tensor max_lastdim(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (n == 0) dim_error("max_lastdim", "empty last dimension");
    const auto& x = a.node()->value;
    std::vector<Real> y(m);
    std::vector<std::size_t> arg(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j)
            if (x[i * n + j] > x[i * n + best]) best = j;
        arg[i] = best;
        y[i] = x[i * n + best];
    }
    Shape out = a.rank() == 2 ? Shape(m) : Shape{};
    return finish("max_lastdim", out, std::move(y), {a.node_ptr()}, [arg, n](Node& self) {
        Real* ga = pgrad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < arg.size(); ++i) ga[i * n + arg[i]] += self.grad[i];
    });
}

Tensor max_pool_groups(const Tensor& a, std::size_t group) {
    const std::size_t rows = a.rows(), n = a.cols();
    if (group == 0 || rows % group != 0)
        dim_error("max_pool_groups", std::to_string(rows) + " rows not divisible into groups of " + std::to_string(group));
    const std::size_t g = rows / group;
    const auto& x = a.node()->value;
    std::vector<Real> y(g * n);
    std::vector<std::size_t> arg(g * n);
    for (std::size_t b = 0; b < g; ++b) {
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t best = b * group;
            for (std::size_t r = b * group + 1; r < (b + 1) * group; ++r)
                if (x[r * n + j] > x[best * n + j]) best = r;
            arg[b * n + j] = best * n + j;
            y[b * n + j] = x[best * n + j];
        }
    }
    return finish("max_pool_groups", Shape(g, n), std::move(y), {a.node_ptr()}, [arg](Node& self) {
        Real* ga = pgrad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < arg.size(); ++i) ga[arg[i]] += self.grad[i];
    });
}

// ---- softmax family -------------------------------------------------------

namespace {

void softmax_row(const Real* x, Real* y, std::size_t n, const std::uint8_t* mask) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n; ++j)
        if (!mask || mask[j]) mx = std::max(mx, x[j]);
    Real z = 0;
    for (std::size_t j = 0; j < n; ++j) {
        y[j] = (!mask || mask[j]) ? std::exp(x[j] - mx) : 0.0;
        z += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
}

void softmax_backward(Node& self, std::size_t m, std::size_t n) {
    Real* ga = pgrad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i) {
        const Real* y = self.value.data() + i * n;
        const Real* g = self.grad.data() + i * n;
        Real dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y[j] * (g[j] - dot);
    }
}

}  // namespace

Tensor softmax_lastdim(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (n == 0) dim_error("softmax_lastdim", "empty last dimension");
    std::vector<Real> y(m * n);
    for (std::size_t i = 0; i < m; ++i) softmax_row(a.data().data() + i * n, y.data() + i * n, n, nullptr);
    return finish("softmax_lastdim", a.shape(), std::move(y), {a.node_ptr()},
                  [m, n](Node& self) { softmax_backward(self, m, n); });
}

Tensor masked_softmax(const Tensor& logits, std::span<const std::uint8_t> mask) {
    if (logits.rank() > 1) dim_error("masked_softmax", "expects a vector, got " + logits.shape().str());
    const std::size_t n = logits.size();
    if (mask.size() != n)
        dim_error("masked_softmax", "mask of length " + std::to_string(mask.size()) + " for " + std::to_string(n) + " logits");
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }))
        throw ContractError("masked_softmax: every entry is masked");
    std::vector<Real> y(n);
    softmax_row(logits.data().data(), y.data(), n, mask.data());
    return finish("masked_softmax", logits.shape(), std::move(y), {logits.node_ptr()},
                  [n](Node& self) { softmax_backward(self, 1, n); });
}

Tensor cross_entropy(const Tensor& logits, std::size_t target, std::span<const std::uint8_t> mask) {
    if (logits.rank() > 1) dim_error("cross_entropy", "expects a vector, got " + logits.shape().str());
    const std::size_t n = logits.size();
    if (target >= n) dim_error("cross_entropy", "target " + std::to_string(target) + " out of " + std::to_string(n));
    if (!mask.empty() && mask.size() != n) dim_error("cross_entropy", "mask length mismatch");
    const std::uint8_t* mk = mask.empty() ? nullptr : mask.data();
    if (mk && !mk[target]) throw ContractError("cross_entropy: target is masked");
    std::vector<Real> p(n);
    softmax_row(logits.data().data(), p.data(), n, mk);
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n; ++j)
        if (!mk || mk[j]) mx = std::max(mx, logits.at(j));
    Real z = 0;
    for (std::size_t j = 0; j < n; ++j)
        if (!mk || mk[j]) z += std::exp(logits.at(j) - mx);
    Real loss = mx + std::log(z) - logits.at(target);
    return finish("cross_entropy", Shape{}, {loss}, {logits.node_ptr()}, [p, target](Node& self) {
        Real* ga = pgrad(self, 0);
        if (!ga) return;
        Real g = self.grad[0];
        for (std::size_t j = 0; j < p.size(); ++j) ga[j] += g * (p[j] - (j == target ? 1.0 : 0.0));
    });
}

// ---- structural -----------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, int axis) {
    if (parts.empty()) dim_error("concat", "no inputs");
    const int rank = parts[0].rank();
    if (rank == 0) dim_error("concat", "scalar inputs");
    for (const auto& p : parts)
        if (p.rank() != rank) dim_error("concat", "mixed ranks");
    if (axis < 0) axis = rank - 1;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) parents.push_back(p.node_ptr());

    if (rank == 1 || axis == 0) {
        // Contiguous blocks.
        std::size_t total = 0;
        std::size_t cols = parts[0].cols();
        for (const auto& p : parts) {
            if (rank == 2 && p.cols() != cols)
                dim_error("concat", "row concat needs equal columns: " + parts[0].shape().str() + " vs " + p.shape().str());
            total += rank == 1 ? p.size() : p.rows();
        }
        std::vector<Real> y;
        y.reserve(rank == 1 ? total : total * cols);
        std::vector<std::size_t> offsets;
        for (const auto& p : parts) {
            offsets.push_back(y.size());
            y.insert(y.end(), p.data().begin(), p.data().end());
        }
        Shape out = rank == 1 ? Shape(total) : Shape(total, cols);
        return finish("concat", out, std::move(y), std::move(parents), [offsets](Node& self) {
            for (std::size_t i = 0; i < self.parents.size(); ++i) {
                Real* g = pgrad(self, i);
                if (!g) continue;
                std::size_t len = self.parents[i]->value.size();
                for (std::size_t j = 0; j < len; ++j) g[j] += self.grad[offsets[i] + j];
            }
        });
    }
    const std::size_t m = parts[0].rows();
    std::size_t total = 0;
    std::vector<std::size_t> widths, offsets;
    for (const auto& p : parts) {
        if (p.rows() != m)
            dim_error("concat", "column concat needs equal rows: " + parts[0].shape().str() + " vs " + p.shape().str());
        offsets.push_back(total);
        widths.push_back(p.cols());
        total += p.cols();
    }
    std::vector<Real> y(m * total);
    for (std::size_t k = 0; k < parts.size(); ++k)
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(parts[k].data().data() + i * widths[k], widths[k], y.data() + i * total + offsets[k]);
    return finish("concat", Shape(m, total), std::move(y), std::move(parents), [m, total, widths, offsets](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            Real* g = pgrad(self, k);
            if (!g) continue;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * total + offsets[k] + j];
        }
    });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor stack_rows(std::span<const Tensor> rows) {
    if (rows.empty()) dim_error("stack_rows", "no inputs");
    const std::size_t n = rows[0].size();
    std::vector<Real> y;
    y.reserve(rows.size() * n);
    std::vector<NodePtr> parents;
    for (const auto& r : rows) {
        if (r.rank() != 1 || r.size() != n) dim_error("stack_rows", "rows must be vectors of equal length");
        y.insert(y.end(), r.data().begin(), r.data().end());
        parents.push_back(r.node_ptr());
    }
    return finish("stack_rows", Shape(rows.size(), n), std::move(y), std::move(parents), [n](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            Real* g = pgrad(self, i);
            if (!g) continue;
            for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
        }
    });
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end, int axis) {
    if (a.rank() == 0) dim_error("slice", "scalar input");
    if (axis < 0) axis = a.rank() - 1;
    const std::size_t extent = a.rank() == 1 ? a.size() : a.shape().dim(axis);
    if (begin >= end || end > extent)
        dim_error("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for axis " +
                               std::to_string(axis) + " of " + a.shape().str());
    if (a.rank() == 1 || axis == 0) {
        const std::size_t width = a.rank() == 1 ? 1 : a.cols();
        std::vector<Real> y(a.data().begin() + static_cast<std::ptrdiff_t>(begin * width),
                            a.data().begin() + static_cast<std::ptrdiff_t>(end * width));
        Shape out = a.rank() == 1 ? Shape(end - begin) : Shape(end - begin, width);
        const std::size_t off = begin * width;
        return finish("slice", out, std::move(y), {a.node_ptr()}, [off](Node& self) {
            Real* g = pgrad(self, 0);
            if (!g) return;
            for (std::size_t j = 0; j < self.grad.size(); ++j) g[off + j] += self.grad[j];
        });
    }
    const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
    std::vector<Real> y(m * w);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(a.data().data() + i * n + begin, w, y.data() + i * w);
    return finish("slice", Shape(m, w), std::move(y), {a.node_ptr()}, [m, n, w, begin](Node& self) {
        Real* g = pgrad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
    });
}

Tensor row(const Tensor& a, std::size_t r) {
    if (a.rank() != 2) dim_error("row", "needs a matrix, got " + a.shape().str());
    if (r >= a.rows()) dim_error("row", "index " + std::to_string(r) + " out of " + a.shape().str());
    const std::size_t n = a.cols();
    std::vector<Real> y(a.data().begin() + static_cast<std::ptrdiff_t>(r * n),
                        a.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
    return finish("row", Shape(n), std::move(y), {a.node_ptr()}, [r, n](Node& self) {
        Real* g = pgrad(self, 0);
        if (!g) return;
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[j];
    });
}

Tensor element(const Tensor& a, std::size_t i) {
    if (i >= a.size()) dim_error("element", "index " + std::to_string(i) + " out of " + a.shape().str());
    return finish("element", Shape{}, {a.at(i)}, {a.node_ptr()}, [i](Node& self) {
        Real* g = pgrad(self, 0);
        if (g) g[i] += self.grad[0];
    });
}

Tensor reverse_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<Real> y(m * n);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(a.data().data() + (m - 1 - i) * n, n, y.data() + i * n);
    return finish("reverse_rows", a.shape(), std::move(y), {a.node_ptr()}, [m, n](Node& self) {
        Real* g = pgrad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[(m - 1 - i) * n + j] += self.grad[i * n + j];
    });
}

Tensor repeat_rows(const Tensor& v, std::size_t m) {
    if (v.rank() != 1) dim_error("repeat_rows", "needs a vector, got " + v.shape().str());
    if (m == 0) dim_error("repeat_rows", "zero rows");
    const std::size_t n = v.size();
    std::vector<Real> y(m * n);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(v.data().data(), n, y.data() + i * n);
    return finish("repeat_rows", Shape(m, n), std::move(y), {v.node_ptr()}, [m, n](Node& self) {
        Real* g = pgrad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape.size() != a.size()) dim_error("reshape", a.shape().str() + " -> " + shape.str());
    std::vector<Real> y(a.data().begin(), a.data().end());
    return finish("reshape", shape, std::move(y), {a.node_ptr()}, [](Node& self) {
        Real* g = pgrad(self, 0);
        if (!g) return;
        for (std::size_t j = 0; j < self.grad.size(); ++j) g[j] += self.grad[j];
    });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids, std::size_t frozen_row) {
    if (table.rank() != 2) dim_error("embedding_lookup", "table must be a matrix, got " + table.shape().str());
    if (ids.empty()) dim_error("embedding_lookup", "empty id list");
    const std::size_t v = table.rows(), d = table.cols();
    std::vector<Real> y(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= v) dim_error("embedding_lookup", "id " + std::to_string(ids[i]) + " >= vocabulary " + std::to_string(v));
        std::copy_n(table.data().data() + ids[i] * d, d, y.data() + i * d);
    }
    std::vector<std::size_t> idv(ids.begin(), ids.end());
    return finish("embedding_lookup", Shape(ids.size(), d), std::move(y), {table.node_ptr()},
                  [idv = std::move(idv), d, frozen_row](Node& self) {
                      Real* g = pgrad(self, 0);
                      if (!g) return;
                      for (std::size_t i = 0; i < idv.size(); ++i) {
                          if (idv[i] == frozen_row) continue;
                          for (std::size_t j = 0; j < d; ++j) g[idv[i] * d + j] += self.grad[i * d + j];
                      }
                  });
}

Tensor unfold_windows(const Tensor& a, std::size_t group_len, std::size_t width) {
    if (a.rank() != 2) dim_error("unfold_windows", "needs a matrix");
    if (width == 0 || group_len < width || a.rows() % group_len != 0)
        dim_error("unfold_windows", "rows " + std::to_string(a.rows()) + " / group " + std::to_string(group_len) +
                                        " / width " + std::to_string(width) + " incompatible");
    const std::size_t groups = a.rows() / group_len, c = a.cols(), per = group_len - width + 1;
    const std::size_t out_rows = groups * per, out_cols = width * c;
    std::vector<Real> y(out_rows * out_cols);
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t p = 0; p < per; ++p)
            std::copy_n(a.data().data() + (g * group_len + p) * c, width * c, y.data() + (g * per + p) * out_cols);
    return finish("unfold_windows", Shape(out_rows, out_cols), std::move(y), {a.node_ptr()},
                  [groups, per, group_len, c, out_cols](Node& self) {
                      Real* ga = pgrad(self, 0);
                      if (!ga) return;
                      for (std::size_t g = 0; g < groups; ++g)
                          for (std::size_t p = 0; p < per; ++p) {
                              Real* dst = ga + (g * group_len + p) * c;
                              const Real* src = self.grad.data() + (g * per + p) * out_cols;
                              for (std::size_t j = 0; j < out_cols; ++j) dst[j] += src[j];
                          }
                  });
}

Tensor dropout(const Tensor& a, Real rate, bool training, std::mt19937_64& rng) {
    if (!training || rate <= 0.0) return a;
    if (rate >= 1.0) throw ContractError("dropout: rate must be < 1");
    const Real keep = 1.0 - rate;
    std::vector<Real> m(a.size());
    for (auto& v : m) {
        // top 53 bits -> uniform [0,1)
        Real u = static_cast<Real>(rng() >> 11) * (1.0 / 9007199254740992.0);
        v = u < keep ? 1.0 / keep : 0.0;
    }
    std::vector<Real> y(a.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) * m[i];
    return finish("dropout", a.shape(), std::move(y), {a.node_ptr()}, [m = std::move(m)](Node& self) {
        Real* g = pgrad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < m.size(); ++i) g[i] += self.grad[i] * m[i];
    });
}

Tensor apply(std::string_view op, std::span<const Tensor> in, std::span<const Real> args) {
    auto need = [&](std::size_t n) {
        if (in.size() != n)
            throw DimensionError(std::string(op) + ": expected " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
    };
    auto arg = [&](std::size_t i) -> Real {
        if (i >= args.size()) throw ContractError(std::string(op) + ": missing argument " + std::to_string(i));
        return args[i];
    };
    if (op == "matmul") { need(2); return matmul(in[0], in[1]); }
    if (op == "add") { need(2); return add(in[0], in[1]); }
    if (op == "sub") { need(2); return sub(in[0], in[1]); }
    if (op == "mul") { need(2); return mul(in[0], in[1]); }
    if (op == "concat") return concat(in, args.empty() ? -1 : static_cast<int>(args[0]));
    if (op == "slice") {
        need(1);
        return slice(in[0], static_cast<std::size_t>(arg(0)), static_cast<std::size_t>(arg(1)),
                     args.size() > 2 ? static_cast<int>(args[2]) : 0);
    }
    if (op == "sum") { need(1); return sum(in[0]); }
    if (op == "mean") { need(1); return mean(in[0]); }
    if (op == "tanh") { need(1); return tanh(in[0]); }
    if (op == "sigmoid") { need(1); return sigmoid(in[0]); }
    if (op == "relu") { need(1); return relu(in[0]); }
    if (op == "softmax_lastdim") { need(1); return softmax_lastdim(in[0]); }
    if (op == "log") { need(1); return log(in[0]); }
    if (op == "exp") { need(1); return exp(in[0]); }
    if (op == "transpose") { need(1); return transpose(in[0]); }
    if (op == "embedding_lookup") {
        need(2);
        std::vector<std::size_t> ids;
        for (Real v : in[1].data()) ids.push_back(static_cast<std::size_t>(v));
        return embedding_lookup(in[0], ids);
    }
    if (op == "dropout") {
        need(1);
        std::mt19937_64 rng(static_cast<std::uint64_t>(args.size() > 1 ? args[1] : 0));
        return dropout(in[0], arg(0), true, rng);
    }
    throw ContractError("apply: unknown op '" + std::string(op) + "'");
}

}  // namespace epar
