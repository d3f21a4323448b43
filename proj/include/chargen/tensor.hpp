// chargen: character-level data-to-text generation toolkit
//
// tensor.hpp - minimal reverse-mode automatic differentiation over dense
// arrays, plus gradient clipping and the Adam optimizer.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace chargen {

/// Structural problem: incompatible shapes, malformed graph, bad arguments.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A non-finite value appeared in a computation. Fail fast instead of
/// letting NaNs silently poison a training run.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A caller broke an operation's precondition.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense array node in an eagerly-evaluated computation graph.
///
/// Values are computed at construction; backward() walks the parent links
/// in reverse topological order. The op set is closed: only the factory
/// functions below create non-leaf nodes.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;

    std::size_t size() const { return value.size(); }
    bool is_scalar() const { return value.size() == 1; }

    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double scalar() const {
        if (!is_scalar()) throw ContractError("scalar() on non-scalar tensor");
        return value[0];
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

/// Thread-local gradient-recording switch. Decoding with a fixed
/// parameter snapshot turns it off to skip tape construction.
inline bool& grad_recording() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_recording()) { grad_recording() = false; }
    ~NoGradGuard() { grad_recording() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

inline std::size_t shape_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("zero dimension in shape");
        n *= d;
    }
    return n;
}

inline void check_finite(const Tensor& t) {
    for (double v : t.value) {
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value in op '") + t.op + "'");
    }
}

inline TensorPtr make_node(std::vector<std::size_t> shape, const char* op,
                           std::vector<TensorPtr> parents) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->value.assign(shape_count(t->shape), 0.0);
    t->op = op;
    t->parents = std::move(parents);
    if (grad_recording())
        for (const auto& p : t->parents)
            if (p->requires_grad) t->requires_grad = true;
    return t;
}

inline void finalize(const TensorPtr& t) {
    check_finite(*t);
    if (t->requires_grad) t->grad.assign(t->value.size(), 0.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Leaves

inline TensorPtr make_leaf(std::vector<std::size_t> shape,
                           std::vector<double> values, bool trainable) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    if (detail::shape_count(t->shape) != values.size())
        throw ShapeError("leaf value count does not match shape");
    t->value = std::move(values);
    t->requires_grad = trainable;
    if (trainable) t->grad.assign(t->value.size(), 0.0);
    detail::check_finite(*t);
    return t;
}

inline TensorPtr zeros(std::vector<std::size_t> shape, bool trainable = false) {
    std::size_t n = detail::shape_count(shape);
    return make_leaf(std::move(shape), std::vector<double>(n, 0.0), trainable);
}

inline TensorPtr constant(std::vector<double> values) {
    std::size_t n = values.size();  // take the size before moving the vector
    return make_leaf({n}, std::move(values), false);
}

inline TensorPtr constant_scalar(double v) { return make_leaf({1}, {v}, false); }

// ---------------------------------------------------------------------------
// Elementwise ops

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) throw ShapeError("add: shape mismatch");
    auto t = detail::make_node(a->shape, "add", {a, b});
    for (std::size_t i = 0; i < t->size(); ++i) t->value[i] = a->value[i] + b->value[i];
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            for (int k = 0; k < 2; ++k) {
                auto& p = self.parents[k];
                if (!p->requires_grad) continue;
                for (std::size_t i = 0; i < self.size(); ++i) p->grad[i] += self.grad[i];
            }
        };
    detail::finalize(t);
    return t;
}

inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) throw ShapeError("sub: shape mismatch");
    auto t = detail::make_node(a->shape, "sub", {a, b});
    for (std::size_t i = 0; i < t->size(); ++i) t->value[i] = a->value[i] - b->value[i];
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            auto& a = self.parents[0];
            auto& b = self.parents[1];
            for (std::size_t i = 0; i < self.size(); ++i) {
                if (a->requires_grad) a->grad[i] += self.grad[i];
                if (b->requires_grad) b->grad[i] -= self.grad[i];
            }
        };
    detail::finalize(t);
    return t;
}

inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) throw ShapeError("mul: shape mismatch");
    auto t = detail::make_node(a->shape, "mul", {a, b});
    for (std::size_t i = 0; i < t->size(); ++i) t->value[i] = a->value[i] * b->value[i];
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            auto& a = self.parents[0];
            auto& b = self.parents[1];
            for (std::size_t i = 0; i < self.size(); ++i) {
                if (a->requires_grad) a->grad[i] += self.grad[i] * b->value[i];
                if (b->requires_grad) b->grad[i] += self.grad[i] * a->value[i];
            }
        };
    detail::finalize(t);
    return t;
}

/// Multiply by a compile-time-known constant.
inline TensorPtr scale(const TensorPtr& a, double c) {
    auto t = detail::make_node(a->shape, "scale", {a});
    for (std::size_t i = 0; i < t->size(); ++i) t->value[i] = a->value[i] * c;
    if (t->requires_grad)
        t->backward_fn = [c](Tensor& self) {
            auto& a = self.parents[0];
            for (std::size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i] * c;
        };
    detail::finalize(t);
    return t;
}

/// Multiply every element of x by a scalar graph node.
inline TensorPtr smul(const TensorPtr& s, const TensorPtr& x) {
    if (!s->is_scalar()) throw ShapeError("smul: first argument must be scalar");
    auto t = detail::make_node(x->shape, "smul", {s, x});
    double c = s->value[0];
    for (std::size_t i = 0; i < t->size(); ++i) t->value[i] = x->value[i] * c;
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            auto& s = self.parents[0];
            auto& x = self.parents[1];
            if (s->requires_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < self.size(); ++i) acc += self.grad[i] * x->value[i];
                s->grad[0] += acc;
            }
            if (x->requires_grad) {
                double c = s->value[0];
                for (std::size_t i = 0; i < self.size(); ++i) x->grad[i] += self.grad[i] * c;
            }
        };
    detail::finalize(t);
    return t;
}

inline TensorPtr tanh_op(const TensorPtr& a) {
    auto t = detail::make_node(a->shape, "tanh", {a});
    for (std::size_t i = 0; i < t->size(); ++i) t->value[i] = std::tanh(a->value[i]);
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            auto& a = self.parents[0];
            for (std::size_t i = 0; i < self.size(); ++i)
                a->grad[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
        };
    detail::finalize(t);
    return t;
}

inline TensorPtr sigmoid_op(const TensorPtr& a) {
    auto t = detail::make_node(a->shape, "sigmoid", {a});
    for (std::size_t i = 0; i < t->size(); ++i)
        t->value[i] = 1.0 / (1.0 + std::exp(-a->value[i]));
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            auto& a = self.parents[0];
            for (std::size_t i = 0; i < self.size(); ++i)
                a->grad[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
        };
    detail::finalize(t);
    return t;
}

/// Numerically stable softmax over a vector (max-shifted).
inline TensorPtr softmax_op(const TensorPtr& a) {
    if (a->shape.size() != 1) throw ShapeError("softmax: expects a vector");
    auto t = detail::make_node(a->shape, "softmax", {a});
    double mx = *std::max_element(a->value.begin(), a->value.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < t->size(); ++i) {
        t->value[i] = std::exp(a->value[i] - mx);
        sum += t->value[i];
    }
    for (std::size_t i = 0; i < t->size(); ++i) t->value[i] /= sum;
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            auto& a = self.parents[0];
            double dot = 0.0;
            for (std::size_t i = 0; i < self.size(); ++i) dot += self.grad[i] * self.value[i];
            for (std::size_t i = 0; i < self.size(); ++i)
                a->grad[i] += self.value[i] * (self.grad[i] - dot);
        };
    detail::finalize(t);
    return t;
}

// ---------------------------------------------------------------------------
// Shape ops

inline TensorPtr concat(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 1 || b->shape.size() != 1)
        throw ShapeError("concat: expects vectors");
    auto t = detail::make_node({a->size() + b->size()}, "concat", {a, b});
    std::copy(a->value.begin(), a->value.end(), t->value.begin());
    std::copy(b->value.begin(), b->value.end(), t->value.begin() + a->size());
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            auto& a = self.parents[0];
            auto& b = self.parents[1];
            std::size_t na = a->size();
            if (a->requires_grad)
                for (std::size_t i = 0; i < na; ++i) a->grad[i] += self.grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += self.grad[na + i];
        };
    detail::finalize(t);
    return t;
}

/// Stack equal-length vectors into a [T, d] matrix.
inline TensorPtr stack_rows(const std::vector<TensorPtr>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: empty input");
    std::size_t d = rows[0]->size();
    for (const auto& r : rows)
        if (r->shape.size() != 1 || r->size() != d)
            throw ShapeError("stack_rows: rows must be vectors of equal length");
    auto t = detail::make_node({rows.size(), d}, "stack_rows", rows);
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r]->value.begin(), rows[r]->value.end(), t->value.begin() + r * d);
    if (t->requires_grad)
        t->backward_fn = [d](Tensor& self) {
            for (std::size_t r = 0; r < self.parents.size(); ++r) {
                auto& p = self.parents[r];
                if (!p->requires_grad) continue;
                for (std::size_t i = 0; i < d; ++i) p->grad[i] += self.grad[r * d + i];
            }
        };
    detail::finalize(t);
    return t;
}

/// Slice a contiguous range [begin, end) out of a vector.
inline TensorPtr slice(const TensorPtr& a, std::size_t begin, std::size_t end) {
    if (a->shape.size() != 1 || end > a->size() || begin >= end)
        throw ShapeError("slice: bad range");
    auto t = detail::make_node({end - begin}, "slice", {a});
    std::copy(a->value.begin() + begin, a->value.begin() + end, t->value.begin());
    if (t->requires_grad)
        t->backward_fn = [begin](Tensor& self) {
            auto& a = self.parents[0];
            for (std::size_t i = 0; i < self.size(); ++i) a->grad[begin + i] += self.grad[i];
        };
    detail::finalize(t);
    return t;
}

// ---------------------------------------------------------------------------
// Linear algebra

/// [m, k] x [k, n] -> [m, n]
inline TensorPtr matmul(const TensorPtr& A, const TensorPtr& B) {
    if (A->shape.size() != 2 || B->shape.size() != 2 || A->shape[1] != B->shape[0])
        throw ShapeError("matmul: shape mismatch");
    std::size_t m = A->shape[0], k = A->shape[1], n = B->shape[1];
    auto t = detail::make_node({m, n}, "matmul", {A, B});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            double a = A->value[i * k + l];
            if (a == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j)
                t->value[i * n + j] += a * B->value[l * n + j];
        }
    if (t->requires_grad)
        t->backward_fn = [m, k, n](Tensor& self) {
            auto& A = self.parents[0];
            auto& B = self.parents[1];
            if (A->requires_grad)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        double g = self.grad[i * n + j];
                        if (g == 0.0) continue;
                        for (std::size_t l = 0; l < k; ++l)
                            A->grad[i * k + l] += g * B->value[l * n + j];
                    }
            if (B->requires_grad)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t l = 0; l < k; ++l) {
                        double a = A->value[i * k + l];
                        if (a == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j)
                            B->grad[l * n + j] += a * self.grad[i * n + j];
                    }
        };
    detail::finalize(t);
    return t;
}

/// [m, n] x [n] -> [m]
inline TensorPtr matvec(const TensorPtr& W, const TensorPtr& x) {
    if (W->shape.size() != 2 || x->shape.size() != 1 || W->shape[1] != x->size())
        throw ShapeError("matvec: shape mismatch");
    std::size_t m = W->shape[0], n = W->shape[1];
    auto t = detail::make_node({m}, "matvec", {W, x});
    const double* w = W->value.data();
    const double* xv = x->value.data();
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* row = w + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * xv[j];
        t->value[i] = acc;
    }
    if (t->requires_grad)
        t->backward_fn = [m, n](Tensor& self) {
            auto& W = self.parents[0];
            auto& x = self.parents[1];
            if (W->requires_grad)
                for (std::size_t i = 0; i < m; ++i) {
                    double g = self.grad[i];
                    if (g == 0.0) continue;
                    double* row = W->grad.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) row[j] += g * x->value[j];
                }
            if (x->requires_grad)
                for (std::size_t i = 0; i < m; ++i) {
                    double g = self.grad[i];
                    if (g == 0.0) continue;
                    const double* row = W->value.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) x->grad[j] += g * row[j];
                }
        };
    detail::finalize(t);
    return t;
}

/// [m, k] x [n, k]^T -> [m, n]
inline TensorPtr matmul_transposed_b(const TensorPtr& A, const TensorPtr& B) {
    if (A->shape.size() != 2 || B->shape.size() != 2 || A->shape[1] != B->shape[1])
        throw ShapeError("matmul_transposed_b: shape mismatch");
    std::size_t m = A->shape[0], k = A->shape[1], n = B->shape[0];
    auto t = detail::make_node({m, n}, "matmul_transposed_b", {A, B});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = A->value.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = B->value.data() + j * k;
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            t->value[i * n + j] = acc;
        }
    }
    if (t->requires_grad)
        t->backward_fn = [m, k, n](Tensor& self) {
            auto& A = self.parents[0];
            auto& B = self.parents[1];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double g = self.grad[i * n + j];
                    if (g == 0.0) continue;
                    if (A->requires_grad) {
                        double* arow = A->grad.data() + i * k;
                        const double* brow = B->value.data() + j * k;
                        for (std::size_t l = 0; l < k; ++l) arow[l] += g * brow[l];
                    }
                    if (B->requires_grad) {
                        double* brow = B->grad.data() + j * k;
                        const double* arow = A->value.data() + i * k;
                        for (std::size_t l = 0; l < k; ++l) brow[l] += g * arow[l];
                    }
                }
        };
    detail::finalize(t);
    return t;
}

/// [T, d]^T x [T] -> [d]; the attention-weighted sum of rows.
inline TensorPtr matvec_transposed(const TensorPtr& H, const TensorPtr& a) {
    if (H->shape.size() != 2 || a->shape.size() != 1 || H->shape[0] != a->size())
        throw ShapeError("matvec_transposed: shape mismatch");
    std::size_t T = H->shape[0], d = H->shape[1];
    auto t = detail::make_node({d}, "matvec_transposed", {H, a});
    for (std::size_t r = 0; r < T; ++r) {
        double w = a->value[r];
        if (w == 0.0) continue;
        const double* row = H->value.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) t->value[j] += w * row[j];
    }
    if (t->requires_grad)
        t->backward_fn = [T, d](Tensor& self) {
            auto& H = self.parents[0];
            auto& a = self.parents[1];
            for (std::size_t r = 0; r < T; ++r) {
                if (H->requires_grad) {
                    double w = a->value[r];
                    double* row = H->grad.data() + r * d;
                    for (std::size_t j = 0; j < d; ++j) row[j] += w * self.grad[j];
                }
                if (a->requires_grad) {
                    const double* row = H->value.data() + r * d;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < d; ++j) acc += row[j] * self.grad[j];
                    a->grad[r] += acc;
                }
            }
        };
    detail::finalize(t);
    return t;
}

/// Add a row vector to every row of a matrix.
inline TensorPtr add_row_broadcast(const TensorPtr& M, const TensorPtr& r) {
    if (M->shape.size() != 2 || r->shape.size() != 1 || M->shape[1] != r->size())
        throw ShapeError("add_row_broadcast: shape mismatch");
    std::size_t T = M->shape[0], d = M->shape[1];
    auto t = detail::make_node(M->shape, "add_row_broadcast", {M, r});
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < d; ++j)
            t->value[i * d + j] = M->value[i * d + j] + r->value[j];
    if (t->requires_grad)
        t->backward_fn = [T, d](Tensor& self) {
            auto& M = self.parents[0];
            auto& r = self.parents[1];
            if (M->requires_grad)
                for (std::size_t i = 0; i < self.size(); ++i) M->grad[i] += self.grad[i];
            if (r->requires_grad)
                for (std::size_t i = 0; i < T; ++i)
                    for (std::size_t j = 0; j < d; ++j) r->grad[j] += self.grad[i * d + j];
        };
    detail::finalize(t);
    return t;
}

// ---------------------------------------------------------------------------
// Lookup / reduction / probability ops

/// Row lookup in an embedding table; gradient scatters into the row.
inline TensorPtr embedding(const TensorPtr& table, std::size_t index) {
    if (table->shape.size() != 2) throw ShapeError("embedding: table must be 2-d");
    if (index >= table->shape[0]) throw ShapeError("embedding: index out of range");
    std::size_t d = table->shape[1];
    auto t = detail::make_node({d}, "embedding", {table});
    std::copy(table->value.begin() + index * d, table->value.begin() + (index + 1) * d,
              t->value.begin());
    if (t->requires_grad)
        t->backward_fn = [index, d](Tensor& self) {
            auto& table = self.parents[0];
            for (std::size_t j = 0; j < d; ++j)
                table->grad[index * d + j] += self.grad[j];
        };
    detail::finalize(t);
    return t;
}

inline TensorPtr sum(const TensorPtr& a) {
    auto t = detail::make_node({1}, "sum", {a});
    t->value[0] = std::accumulate(a->value.begin(), a->value.end(), 0.0);
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            auto& a = self.parents[0];
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += self.grad[0];
        };
    detail::finalize(t);
    return t;
}

/// -log(dist[index]); the probability is floored at 1e-12.
inline TensorPtr nll(const TensorPtr& dist, std::size_t index) {
    if (dist->shape.size() != 1 || index >= dist->size())
        throw ShapeError("nll: index out of range");
    auto t = detail::make_node({1}, "nll", {dist});
    double p = std::max(dist->value[index], 1e-12);
    t->value[0] = -std::log(p);
    if (t->requires_grad)
        t->backward_fn = [index, p](Tensor& self) {
            self.parents[0]->grad[index] += -self.grad[0] / p;
        };
    detail::finalize(t);
    return t;
}

/// Prefix a vector with a zero and drop its last entry.
inline TensorPtr shift_right(const TensorPtr& a) {
    if (a->shape.size() != 1) throw ShapeError("shift_right: expects a vector");
    auto t = detail::make_node(a->shape, "shift_right", {a});
    for (std::size_t i = 1; i < t->size(); ++i) t->value[i] = a->value[i - 1];
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            auto& a = self.parents[0];
            for (std::size_t i = 1; i < self.size(); ++i) a->grad[i - 1] += self.grad[i];
        };
    detail::finalize(t);
    return t;
}

/// Elementwise divide by a scalar node.
inline TensorPtr div_scalar(const TensorPtr& x, const TensorPtr& s) {
    if (!s->is_scalar()) throw ShapeError("div_scalar: divisor must be scalar");
    if (s->value[0] == 0.0) throw NumericError("div_scalar: division by zero");
    auto t = detail::make_node(x->shape, "div_scalar", {x, s});
    double d = s->value[0];
    for (std::size_t i = 0; i < t->size(); ++i) t->value[i] = x->value[i] / d;
    if (t->requires_grad)
        t->backward_fn = [](Tensor& self) {
            auto& x = self.parents[0];
            auto& s = self.parents[1];
            double d = s->value[0];
            if (x->requires_grad)
                for (std::size_t i = 0; i < self.size(); ++i) x->grad[i] += self.grad[i] / d;
            if (s->requires_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < self.size(); ++i)
                    acc += self.grad[i] * x->value[i];
                s->grad[0] -= acc / (d * d);
            }
        };
    detail::finalize(t);
    return t;
}

/// Aggregate per-position mass into per-symbol mass: out[targets[j]] += a[j].
inline TensorPtr scatter_add(const TensorPtr& a, const std::vector<std::size_t>& targets,
                             std::size_t out_size) {
    if (a->shape.size() != 1 || a->size() != targets.size())
        throw ShapeError("scatter_add: position/target length mismatch");
    for (std::size_t ix : targets)
        if (ix >= out_size) throw ShapeError("scatter_add: target index out of range");
    auto t = detail::make_node({out_size}, "scatter_add", {a});
    for (std::size_t j = 0; j < targets.size(); ++j) t->value[targets[j]] += a->value[j];
    if (t->requires_grad) {
        auto tg = targets;
        t->backward_fn = [tg = std::move(tg)](Tensor& self) {
            auto& a = self.parents[0];
            for (std::size_t j = 0; j < tg.size(); ++j) a->grad[j] += self.grad[tg[j]];
        };
    }
    detail::finalize(t);
    return t;
}

// ---------------------------------------------------------------------------
// Backward pass

/// Reverse-mode sweep from a scalar loss. Accumulates into .grad of every
/// reachable node that requires gradients; call zero_grad on parameters first.
inline void backward(const TensorPtr& loss) {
    if (!loss->is_scalar()) throw ContractError("backward: loss must be scalar");
    if (!loss->requires_grad) return;

    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // order is children-after-parents; walk it from the loss down
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------------------
// Parameter store, clipping, Adam

/// Named collection of trainable leaves, in insertion order.
class ParameterStore {
public:
    TensorPtr add(const std::string& name, TensorPtr t) {
        if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
        index_[name] = items_.size();
        items_.emplace_back(name, t);
        return t;
    }

    TensorPtr get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        return items_[it->second].second;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::pair<std::string, TensorPtr>>& items() const { return items_; }

    void zero_grad() {
        for (auto& [name, t] : items_) t->zero_grad();
    }

private:
    std::vector<std::pair<std::string, TensorPtr>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Joint L2 norm over a set of gradient arrays.
inline double global_norm(const std::vector<std::vector<double>*>& grads) {
    double sq = 0.0;
    for (const auto* g : grads)
        for (double v : *g) sq += v * v;
    return std::sqrt(sq);
}

/// Scale all gradients so their joint L2 norm does not exceed max_norm.
/// Returns the pre-clip norm.
inline double clip_global_norm(const std::vector<std::vector<double>*>& grads,
                               double max_norm) {
    if (max_norm <= 0.0) throw ContractError("clip_global_norm: max_norm must be > 0");
    double norm = global_norm(grads);
    if (!std::isfinite(norm)) throw NumericError("clip_global_norm: non-finite gradient");
    if (norm > max_norm) {
        double s = max_norm / norm;
        for (auto* g : grads)
            for (double& v : *g) v *= s;
    }
    return norm;
}

inline double clip_global_norm(ParameterStore& params, double max_norm) {
    std::vector<std::vector<double>*> grads;
    for (auto& [name, t] : params.items()) grads.push_back(&t->grad);
    return clip_global_norm(grads, max_norm);
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moment accumulators, keyed by parameter name.
class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {
        if (cfg_.beta1 <= 0 || cfg_.beta1 >= 1 || cfg_.beta2 <= 0 || cfg_.beta2 >= 1 ||
            cfg_.learning_rate <= 0)
            throw ContractError("AdamState: hyperparameters out of range");
    }

    const AdamConfig& config() const { return cfg_; }
    long long step_count() const { return t_; }
    void set_step_count(long long t) { t_ = t; }

    /// One bias-corrected Adam update over every parameter's current .grad.
    void step(ParameterStore& params) {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& [name, p] : params.items()) {
            auto& m = moments_[name].first;
            auto& v = moments_[name].second;
            if (m.size() != p->size()) {
                m.assign(p->size(), 0.0);
                v.assign(p->size(), 0.0);
            }
            for (std::size_t i = 0; i < p->size(); ++i) {
                double g = p->grad[i];
                if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                p->value[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
        }
    }

    std::unordered_map<std::string, std::pair<std::vector<double>, std::vector<double>>>&
    moments() { return moments_; }

private:
    AdamConfig cfg_;
    long long t_ = 0;
    std::unordered_map<std::string, std::pair<std::vector<double>, std::vector<double>>>
        moments_;
};

}  // namespace chargen
