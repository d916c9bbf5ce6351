// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense-tensor engine with reverse-mode differentiation. Tensors are
// immutable once they enter a graph; each op records an exact adjoint closure.
// Graphs are taped per forward pass and released when the last handle drops.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "rayrope/errors.hpp"
#include "rayrope/parallel.hpp"

namespace rayrope {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
    os << ']';
    return os.str();
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) +
                                    " vs " + shape_str(b));
}

template <class T>
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad; // sized lazily during backward
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward;
    };

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->value.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
        n->shape = std::move(shape);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor full(Shape shape, T v) {
        auto t = zeros(std::move(shape));
        std::fill(t.n_->value.begin(), t.n_->value.end(), v);
        return t;
    }

    static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
            throw std::invalid_argument("from_values: " + shape_str(shape) + " does not hold " +
                                        std::to_string(values.size()) + " elements");
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(values);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor scalar_value(T v) { return from_values({1}, {v}); }

    /// Builds an op node. `bw` receives the output node (value + grad filled)
    /// and must accumulate into the inputs' grads via accumulate_grad().
    static Tensor from_op(std::vector<Tensor> inputs, Shape shape, std::vector<T> value,
                          std::function<void(const Node&, std::vector<Tensor>&)> bw) {
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(value);
        for (const auto& in : inputs) {
            n->parents.push_back(in.n_);
            n->requires_grad = n->requires_grad || in.requires_grad();
        }
        if (n->requires_grad && bw)
            n->backward = [inputs = std::move(inputs), bw = std::move(bw)](Node& self) mutable {
                bw(self, inputs);
            };
        return Tensor(std::move(n));
    }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    std::int64_t numel() const { return static_cast<std::int64_t>(n_->value.size()); }
    std::int64_t dim(int i) const { return n_->shape.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(n_->shape.size()); }
    bool requires_grad() const { return n_->requires_grad; }

    std::span<const T> values() const { return {n_->value.data(), n_->value.size()}; }
    T value_at(std::int64_t i) const { return n_->value[static_cast<std::size_t>(i)]; }
    T scalar() const {
        if (numel() != 1) throw std::invalid_argument("scalar(): tensor has " + shape_str(shape()));
        return n_->value[0];
    }

    /// Leaf initialization only; mutating a tensor already used in a graph is
    /// undefined (the tape captured its values by reference).
    std::span<T> mutable_values() { return {n_->value.data(), n_->value.size()}; }

    bool has_grad() const { return n_ && n_->grad.size() == n_->value.size(); }
    std::span<const T> grad() const { return {n_->grad.data(), n_->grad.size()}; }
    std::span<T> grad_buffer() {
        if (n_->grad.size() != n_->value.size()) n_->grad.assign(n_->value.size(), T(0));
        return {n_->grad.data(), n_->grad.size()};
    }
    void accumulate_grad(std::span<const T> g) {
        auto dst = grad_buffer();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
    void zero_grad() { n_->grad.clear(); }

    bool same_node(const Tensor& o) const { return n_ == o.n_; }
    const Node* node() const { return n_.get(); }


private:
    explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
    std::shared_ptr<Node> n_;

    template <class U>
    friend void backward(const Tensor<U>&);
};

/// Reverse-mode pass from a scalar loss. Grads accumulate (call zero_grad on
/// leaves between passes).
template <class T>
void backward(const Tensor<T>& loss) {
    using Node = typename Tensor<T>::Node;
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // Iterative post-order over the requires_grad subgraph.
    std::vector<Node*> order;
    std::unordered_set<const Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.n_.get(), 0);
    seen.insert(loss.n_.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    auto* root = loss.n_.get();
    if (root->grad.size() != root->value.size()) root->grad.assign(root->value.size(), T(0));
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (!node->backward) continue;
        if (node->grad.size() != node->value.size()) node->grad.assign(node->value.size(), T(0));
        node->backward(*node);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and scalar ops

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "add");
    std::vector<T> v(a.values().begin(), a.values().end());
    for (std::int64_t i = 0; i < a.numel(); ++i) v[static_cast<std::size_t>(i)] += b.value_at(i);
    return Tensor<T>::from_op({a, b}, a.shape(), std::move(v),
                              [](const auto& self, auto& in) {
                                  if (in[0].requires_grad()) in[0].accumulate_grad({self.grad.data(), self.grad.size()});
                                  if (in[1].requires_grad()) in[1].accumulate_grad({self.grad.data(), self.grad.size()});
                              });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "sub");
    std::vector<T> v(a.values().begin(), a.values().end());
    for (std::int64_t i = 0; i < a.numel(); ++i) v[static_cast<std::size_t>(i)] -= b.value_at(i);
    return Tensor<T>::from_op({a, b}, a.shape(), std::move(v),
                              [](const auto& self, auto& in) {
                                  if (in[0].requires_grad()) in[0].accumulate_grad({self.grad.data(), self.grad.size()});
                                  if (in[1].requires_grad()) {
                                      auto g = in[1].grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                                  }
                              });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "mul");
    std::vector<T> v(static_cast<std::size_t>(a.numel()));
    for (std::int64_t i = 0; i < a.numel(); ++i) v[static_cast<std::size_t>(i)] = a.value_at(i) * b.value_at(i);
    return Tensor<T>::from_op({a, b}, a.shape(), std::move(v),
                              [](const auto& self, auto& in) {
                                  if (in[0].requires_grad()) {
                                      auto g = in[0].grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * in[1].value_at(static_cast<std::int64_t>(i));
                                  }
                                  if (in[1].requires_grad()) {
                                      auto g = in[1].grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * in[0].value_at(static_cast<std::int64_t>(i));
                                  }
                              });
}

template <class T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s) {
    std::vector<T> v(a.values().begin(), a.values().end());
    for (auto& x : v) x *= s;
    return Tensor<T>::from_op({a}, a.shape(), std::move(v),
                              [s](const auto& self, auto& in) {
                                  if (!in[0].requires_grad()) return;
                                  auto g = in[0].grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
                              });
}

template <class T>
Tensor<T> scalar_add(const Tensor<T>& a, T s) {
    std::vector<T> v(a.values().begin(), a.values().end());
    for (auto& x : v) x += s;
    return Tensor<T>::from_op({a}, a.shape(), std::move(v),
                              [](const auto& self, auto& in) {
                                  if (in[0].requires_grad()) in[0].accumulate_grad({self.grad.data(), self.grad.size()});
                              });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) { return scalar_mul(a, T(-1)); }

namespace detail {

template <class T, class F, class DF>
Tensor<T> unary_op(const Tensor<T>& a, const char*, F f, DF df) {
    std::vector<T> v(static_cast<std::size_t>(a.numel()));
    for (std::int64_t i = 0; i < a.numel(); ++i) v[static_cast<std::size_t>(i)] = f(a.value_at(i));
    return Tensor<T>::from_op({a}, a.shape(), std::move(v),
                              [df](const auto& self, auto& in) {
                                  if (!in[0].requires_grad()) return;
                                  auto g = in[0].grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                      g[i] += self.grad[i] * df(in[0].value_at(static_cast<std::int64_t>(i)), self.value[i]);
                              });
}

} // namespace detail

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
    return detail::unary_op(a, "exp", [](T x) { return std::exp(x); },
                            [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
    return detail::unary_op(a, "log", [](T x) { return std::log(x); },
                            [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> sin(const Tensor<T>& a) {
    return detail::unary_op(a, "sin", [](T x) { return std::sin(x); },
                            [](T x, T) { return std::cos(x); });
}

template <class T>
Tensor<T> cos(const Tensor<T>& a) {
    return detail::unary_op(a, "cos", [](T x) { return std::cos(x); },
                            [](T x, T) { return -std::sin(x); });
}

template <class T>
Tensor<T> reciprocal(const Tensor<T>& a) {
    return detail::unary_op(a, "reciprocal", [](T x) { return T(1) / x; },
                            [](T, T y) { return -y * y; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return detail::unary_op(a, "sigmoid", [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                            [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> silu(const Tensor<T>& a) {
    return detail::unary_op(a, "silu",
                            [](T x) { return x / (T(1) + std::exp(-x)); },
                            [](T x, T) {
                                const T s = T(1) / (T(1) + std::exp(-x));
                                return s * (T(1) + x * (T(1) - s));
                            });
}

// ---------------------------------------------------------------------------
// Shape ops

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    std::vector<T> v(a.values().begin(), a.values().end());
    return Tensor<T>::from_op({a}, std::move(shape), std::move(v),
                              [](const auto& self, auto& in) {
                                  if (in[0].requires_grad()) in[0].accumulate_grad({self.grad.data(), self.grad.size()});
                              });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("transpose: expects 2-d, got " + shape_str(a.shape()));
    const std::int64_t m = a.dim(0), n = a.dim(1);
    std::vector<T> v(static_cast<std::size_t>(m * n));
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j)
            v[static_cast<std::size_t>(j * m + i)] = a.value_at(i * n + j);
    return Tensor<T>::from_op({a}, {n, m}, std::move(v),
                              [m, n](const auto& self, auto& in) {
                                  if (!in[0].requires_grad()) return;
                                  auto g = in[0].grad_buffer();
                                  for (std::int64_t i = 0; i < m; ++i)
                                      for (std::int64_t j = 0; j < n; ++j)
                                          g[static_cast<std::size_t>(i * n + j)] += self.grad[static_cast<std::size_t>(j * m + i)];
                              });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    const int nd = static_cast<int>(s0.size());
    if (axis < 0 || axis >= nd) throw std::invalid_argument("concat: bad axis");
    Shape out = s0;
    out[static_cast<std::size_t>(axis)] = 0;
    for (const auto& p : parts) {
        Shape ps = p.shape();
        if (static_cast<int>(ps.size()) != nd) throw std::invalid_argument("concat: rank mismatch");
        for (int d = 0; d < nd; ++d)
            if (d != axis && ps[static_cast<std::size_t>(d)] != s0[static_cast<std::size_t>(d)])
                throw std::invalid_argument("concat: shape mismatch " + shape_str(ps) + " vs " + shape_str(s0));
        out[static_cast<std::size_t>(axis)] += ps[static_cast<std::size_t>(axis)];
    }
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s0[static_cast<std::size_t>(d)];
    for (int d = axis + 1; d < nd; ++d) inner *= s0[static_cast<std::size_t>(d)];
    const std::int64_t out_ax = out[static_cast<std::size_t>(axis)];
    std::vector<T> v(static_cast<std::size_t>(outer * out_ax * inner));
    std::int64_t off = 0;
    for (const auto& p : parts) {
        const std::int64_t ax = p.dim(axis);
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(p.values().data() + o * ax * inner, ax * inner,
                        v.data() + (o * out_ax + off) * inner);
        off += ax;
    }
    return Tensor<T>::from_op(parts, std::move(out), std::move(v),
                              [outer, inner, out_ax](const auto& self, auto& in) {
                                  std::int64_t off = 0;
                                  for (auto& p : in) {
                                      const std::int64_t ax = p.numel() / (outer * inner);
                                      if (p.requires_grad()) {
                                          auto g = p.grad_buffer();
                                          for (std::int64_t o = 0; o < outer; ++o)
                                              for (std::int64_t k = 0; k < ax * inner; ++k)
                                                  g[static_cast<std::size_t>(o * ax * inner + k)] +=
                                                      self.grad[static_cast<std::size_t>((o * out_ax + off) * inner + k)];
                                      }
                                      off += ax;
                                  }
                              });
}

template <class T>
Tensor<T> slice(const Tensor<T>& a, int axis, std::int64_t start, std::int64_t len) {
    const int nd = a.ndim();
    if (axis < 0 || axis >= nd) throw std::invalid_argument("slice: bad axis");
    const std::int64_t ax = a.dim(axis);
    if (start < 0 || len < 0 || start + len > ax)
        throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + len) + ") outside extent " + std::to_string(ax));
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < nd; ++d) inner *= a.dim(d);
    Shape out = a.shape();
    out[static_cast<std::size_t>(axis)] = len;
    std::vector<T> v(static_cast<std::size_t>(outer * len * inner));
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(a.values().data() + (o * ax + start) * inner, len * inner,
                    v.data() + o * len * inner);
    return Tensor<T>::from_op({a}, std::move(out), std::move(v),
                              [axis, start, len, outer, inner, ax](const auto& self, auto& in) {
                                  if (!in[0].requires_grad()) return;
                                  auto g = in[0].grad_buffer();
                                  for (std::int64_t o = 0; o < outer; ++o)
                                      for (std::int64_t k = 0; k < len * inner; ++k)
                                          g[static_cast<std::size_t>((o * ax + start) * inner + k)] +=
                                              self.grad[static_cast<std::size_t>(o * len * inner + k)];
                              });
}

/// Gather rows (axis 0) by index. Duplicate indices accumulate in the adjoint.
template <class T>
Tensor<T> take_rows(const Tensor<T>& a, std::vector<std::int64_t> rows) {
    if (a.ndim() < 1) throw std::invalid_argument("take_rows: rank-0 input");
    const std::int64_t m = a.dim(0);
    std::int64_t inner = a.numel() / std::max<std::int64_t>(m, 1);
    for (auto r : rows)
        if (r < 0 || r >= m) throw std::invalid_argument("take_rows: index " + std::to_string(r) + " outside " + std::to_string(m));
    Shape out = a.shape();
    out[0] = static_cast<std::int64_t>(rows.size());
    std::vector<T> v(static_cast<std::size_t>(out[0] * inner));
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(a.values().data() + rows[i] * inner, inner, v.data() + static_cast<std::int64_t>(i) * inner);
    return Tensor<T>::from_op({a}, std::move(out), std::move(v),
                              [rows = std::move(rows), inner](const auto& self, auto& in) {
                                  if (!in[0].requires_grad()) return;
                                  auto g = in[0].grad_buffer();
                                  for (std::size_t i = 0; i < rows.size(); ++i)
                                      for (std::int64_t k = 0; k < inner; ++k)
                                          g[static_cast<std::size_t>(rows[i] * inner + k)] +=
                                              self.grad[static_cast<std::size_t>(static_cast<std::int64_t>(i) * inner + k)];
                              });
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace detail {

// Row-major [r, c] viewed as a column-major [c, r] map: Eigen's GEMM kernels
// are column-major native, so C_row = A_row * B_row is computed as
// C_col^T = B_col^T * A_col^T on the same buffers.
template <class T>
using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <class T>
using MapCol = Eigen::Map<ColMat<T>>;
template <class T>
using CMapCol = Eigen::Map<const ColMat<T>>;

// C[r0:r1] = A[r0:r1] * op(B), row-partitioned so the worker count never
// changes any per-element accumulation order.
template <class T>
void gemm_rows(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
               bool transpose_b) {
    parallel_for(m, 16, [&](std::int64_t r0, std::int64_t r1) {
        CMapCol<T> At(a + r0 * k, k, r1 - r0);
        MapCol<T> Ct(c + r0 * n, n, r1 - r0);
        if (transpose_b) {
            // B is [n, k] row-major; op(B) = B^T, so Ct = B_col * At.
            CMapCol<T> Bt(b, k, n);
            Ct.noalias() = Bt.transpose() * At;
        } else {
            CMapCol<T> Bt(b, n, k);
            Ct.noalias() = Bt * At;
        }
    });
}

} // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw std::invalid_argument("matmul: expects 2-d inputs, got " + shape_str(a.shape()) +
                                    " and " + shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: inner dims disagree, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> v(static_cast<std::size_t>(m * n));
    detail::gemm_rows(a.values().data(), b.values().data(), v.data(), m, k, n, false);
    return Tensor<T>::from_op({a, b}, {m, n}, std::move(v),
                              [m, k, n](const auto& self, auto& in) {
                                  if (in[0].requires_grad()) {
                                      // dA = G * B^T
                                      std::vector<T> da(static_cast<std::size_t>(m * k));
                                      detail::gemm_rows(self.grad.data(), in[1].values().data(), da.data(), m, n, k, true);
                                      in[0].accumulate_grad({da.data(), da.size()});
                                  }
                                  if (in[1].requires_grad()) {
                                      // dB = A^T G, computed as dB^T = G^T A
                                      std::vector<T> db(static_cast<std::size_t>(k * n));
                                      detail::CMapCol<T> At(in[0].values().data(), k, m);
                                      detail::CMapCol<T> Gt(self.grad.data(), n, m);
                                      detail::MapCol<T> DBt(db.data(), n, k);
                                      DBt.noalias() = Gt * At.transpose();
                                      in[1].accumulate_grad({db.data(), db.size()});
                                  }
                              });
}

/// C = A B^T without materializing the transpose (the attention-score
/// pattern). Adjoints: dA = G B, dB = G^T A.
template <class T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
        throw std::invalid_argument("matmul_bt: incompatible shapes " + shape_str(a.shape()) +
                                    " and " + shape_str(b.shape()));
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    std::vector<T> v(static_cast<std::size_t>(m * n));
    detail::gemm_rows(a.values().data(), b.values().data(), v.data(), m, k, n, true);
    return Tensor<T>::from_op({a, b}, {m, n}, std::move(v),
                              [m, k, n](const auto& self, auto& in) {
                                  if (in[0].requires_grad()) {
                                      std::vector<T> da(static_cast<std::size_t>(m * k));
                                      detail::gemm_rows(self.grad.data(), in[1].values().data(),
                                                        da.data(), m, n, k, false);
                                      in[0].accumulate_grad({da.data(), da.size()});
                                  }
                                  if (in[1].requires_grad()) {
                                      // dB = G^T A
                                      std::vector<T> db(static_cast<std::size_t>(n * k));
                                      detail::CMapCol<T> Gt(self.grad.data(), n, m);
                                      detail::CMapCol<T> At(in[0].values().data(), k, m);
                                      detail::MapCol<T> DBt(db.data(), k, n);
                                      DBt.noalias() = At * Gt.transpose();
                                      in[1].accumulate_grad({db.data(), db.size()});
                                  }
                              });
}

// ---------------------------------------------------------------------------
// Reductions, softmax, normalization, loss

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc = T(0);
    for (std::int64_t i = 0; i < a.numel(); ++i) acc += a.value_at(i);
    return Tensor<T>::from_op({a}, {1}, {acc},
                              [](const auto& self, auto& in) {
                                  if (!in[0].requires_grad()) return;
                                  auto g = in[0].grad_buffer();
                                  for (auto& x : g) x += self.grad[0];
                              });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
    if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    T acc = T(0);
    for (std::int64_t i = 0; i < a.numel(); ++i) acc += a.value_at(i);
    const T inv = T(1) / static_cast<T>(a.numel());
    return Tensor<T>::from_op({a}, {1}, {acc * inv},
                              [inv](const auto& self, auto& in) {
                                  if (!in[0].requires_grad()) return;
                                  auto g = in[0].grad_buffer();
                                  for (auto& x : g) x += self.grad[0] * inv;
                              });
}

/// Softmax over the last axis. The max subtraction changes nothing
/// analytically; it keeps exp() in range.
template <class T>
Tensor<T> softmax_last(const Tensor<T>& a) {
    if (a.ndim() < 1 || a.dim(a.ndim() - 1) == 0)
        throw std::invalid_argument("softmax_last: empty axis in " + shape_str(a.shape()));
    const std::int64_t cols = a.dim(a.ndim() - 1);
    const std::int64_t rows = a.numel() / cols;
    std::vector<T> v(static_cast<std::size_t>(a.numel()));
    const T* x = a.values().data();
    parallel_for(rows, 64, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t r = r0; r < r1; ++r) {
            const T* xi = x + r * cols;
            T* yi = v.data() + r * cols;
            T mx = xi[0];
            for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
            T s = T(0);
            for (std::int64_t j = 0; j < cols; ++j) {
                yi[j] = std::exp(xi[j] - mx);
                s += yi[j];
            }
            const T inv = T(1) / s;
            for (std::int64_t j = 0; j < cols; ++j) yi[j] *= inv;
        }
    });
    return Tensor<T>::from_op({a}, a.shape(), std::move(v),
                              [rows, cols](const auto& self, auto& in) {
                                  if (!in[0].requires_grad()) return;
                                  auto g = in[0].grad_buffer();
                                  for (std::int64_t r = 0; r < rows; ++r) {
                                      const T* y = self.value.data() + r * cols;
                                      const T* go = self.grad.data() + r * cols;
                                      T dot = T(0);
                                      for (std::int64_t j = 0; j < cols; ++j) dot += go[j] * y[j];
                                      for (std::int64_t j = 0; j < cols; ++j)
                                          g[static_cast<std::size_t>(r * cols + j)] += y[j] * (go[j] - dot);
                                  }
                              });
}

/// Layer normalization over the last axis with learned scale and shift.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
    const std::int64_t cols = x.dim(x.ndim() - 1);
    if (gamma.numel() != cols || beta.numel() != cols)
        throw std::invalid_argument("layer_norm: scale/shift " + shape_str(gamma.shape()) +
                                    " does not match last axis of " + shape_str(x.shape()));
    const std::int64_t rows = x.numel() / cols;
    std::vector<T> v(static_cast<std::size_t>(x.numel()));
    auto stats = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows * 2)); // mean, inv_std
    const T* xv = x.values().data();
    const T* gv = gamma.values().data();
    const T* bv = beta.values().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xi = xv + r * cols;
        T mu = T(0);
        for (std::int64_t j = 0; j < cols; ++j) mu += xi[j];
        mu /= static_cast<T>(cols);
        T var = T(0);
        for (std::int64_t j = 0; j < cols; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= static_cast<T>(cols);
        const T inv = T(1) / std::sqrt(var + eps);
        (*stats)[static_cast<std::size_t>(2 * r)] = mu;
        (*stats)[static_cast<std::size_t>(2 * r + 1)] = inv;
        for (std::int64_t j = 0; j < cols; ++j)
            v[static_cast<std::size_t>(r * cols + j)] = (xi[j] - mu) * inv * gv[j] + bv[j];
    }
    return Tensor<T>::from_op({x, gamma, beta}, x.shape(), std::move(v),
                              [rows, cols, stats](const auto& self, auto& in) {
                                  const T* xv = in[0].values().data();
                                  const T* gv = in[1].values().data();
                                  for (std::int64_t r = 0; r < rows; ++r) {
                                      const T mu = (*stats)[static_cast<std::size_t>(2 * r)];
                                      const T inv = (*stats)[static_cast<std::size_t>(2 * r + 1)];
                                      const T* xi = xv + r * cols;
                                      const T* go = self.grad.data() + r * cols;
                                      if (in[1].requires_grad()) {
                                          auto gg = in[1].grad_buffer();
                                          for (std::int64_t j = 0; j < cols; ++j)
                                              gg[static_cast<std::size_t>(j)] += go[j] * (xi[j] - mu) * inv;
                                      }
                                      if (in[2].requires_grad()) {
                                          auto gb = in[2].grad_buffer();
                                          for (std::int64_t j = 0; j < cols; ++j) gb[static_cast<std::size_t>(j)] += go[j];
                                      }
                                      if (in[0].requires_grad()) {
                                          auto gx = in[0].grad_buffer();
                                          T m1 = T(0), m2 = T(0);
                                          for (std::int64_t j = 0; j < cols; ++j) {
                                              const T dxhat = go[j] * gv[j];
                                              m1 += dxhat;
                                              m2 += dxhat * (xi[j] - mu) * inv;
                                          }
                                          m1 /= static_cast<T>(cols);
                                          m2 /= static_cast<T>(cols);
                                          for (std::int64_t j = 0; j < cols; ++j) {
                                              const T dxhat = go[j] * gv[j];
                                              gx[static_cast<std::size_t>(r * cols + j)] +=
                                                  inv * (dxhat - m1 - (xi[j] - mu) * inv * m2);
                                          }
                                      }
                                  }
                              });
}

/// y[r, :] = a[r, :] + b — the linear-layer bias pattern, written as its own
/// op so the adjoint (column sums into b) stays explicit.
template <class T>
Tensor<T> add_rows(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() < 1 || b.ndim() != 1 || a.dim(a.ndim() - 1) != b.dim(0))
        throw std::invalid_argument("add_rows: cannot add row vector " + shape_str(b.shape()) +
                                    " to " + shape_str(a.shape()));
    const std::int64_t cols = b.dim(0);
    const std::int64_t rows = a.numel() / cols;
    std::vector<T> v(a.values().begin(), a.values().end());
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < cols; ++j) v[static_cast<std::size_t>(r * cols + j)] += b.value_at(j);
    return Tensor<T>::from_op({a, b}, a.shape(), std::move(v),
                              [rows, cols](const auto& self, auto& in) {
                                  if (in[0].requires_grad()) in[0].accumulate_grad({self.grad.data(), self.grad.size()});
                                  if (in[1].requires_grad()) {
                                      auto g = in[1].grad_buffer();
                                      for (std::int64_t r = 0; r < rows; ++r)
                                          for (std::int64_t j = 0; j < cols; ++j)
                                              g[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(r * cols + j)];
                                  }
                              });
}

template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    check_same_shape(pred.shape(), target.shape(), "mse_loss");
    if (pred.numel() == 0) throw std::invalid_argument("mse_loss: empty tensors");
    T acc = T(0);
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const T d = pred.value_at(i) - target.value_at(i);
        acc += d * d;
    }
    const T inv = T(1) / static_cast<T>(pred.numel());
    return Tensor<T>::from_op({pred, target}, {1}, {acc * inv},
                              [inv](const auto& self, auto& in) {
                                  const T c = T(2) * inv * self.grad[0];
                                  for (int s = 0; s < 2; ++s) {
                                      if (!in[static_cast<std::size_t>(s)].requires_grad()) continue;
                                      auto g = in[static_cast<std::size_t>(s)].grad_buffer();
                                      const T sign = s == 0 ? T(1) : T(-1);
                                      for (std::size_t i = 0; i < g.size(); ++i)
                                          g[i] += sign * c *
                                                  (in[0].value_at(static_cast<std::int64_t>(i)) -
                                                   in[1].value_at(static_cast<std::int64_t>(i)));
                                  }
                              });
}

// Convenience operators for graph code.
template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, T s) { return scalar_mul(a, s); }
template <class T> Tensor<T> operator*(T s, const Tensor<T>& a) { return scalar_mul(a, s); }

} // namespace rayrope
