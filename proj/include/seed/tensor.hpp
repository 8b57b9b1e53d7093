#pragma once

// Dense row-major tensors of doubles with a dynamic reverse-mode tape.
//
// Every op allocates a fresh output node. When any input requires a gradient (and
// gradient recording is enabled on this thread) the output keeps shared handles to its
// inputs plus a closure that pushes the output gradient back into them. Gradients
// accumulate additively, so a tensor used twice receives the sum of both contributions.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "seed/errors.hpp"

namespace seed {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  double* grad_buffer() {
    if (!requires_grad) return nullptr;
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad.data();
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor shape " + to_string(shape) + " holds " +
                       std::to_string(numel(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value) { return Tensor({}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }

  /// Dimension by index; negative indices count from the back.
  std::size_t dim(std::ptrdiff_t i) const {
    const auto n = static_cast<std::ptrdiff_t>(ndim());
    if (i < 0) i += n;
    if (i < 0 || i >= n) throw ShapeError("dimension index out of range for " + to_string(shape()));
    return node_->shape[static_cast<std::size_t>(i)];
  }

  std::span<const double> data() const { return node_->data; }
  /// Mutable access for parameter updates and finite-difference probes.
  std::span<double> data_mut() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
  }
  double operator[](std::size_t flat) const { return node_->data[flat]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, cut from the tape.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  /// Reverse sweep from a scalar.
  void backward() const;

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  /// Builds an op result. `fn` is recorded only when some parent needs a gradient.
  static Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> parents,
                            std::function<void(detail::Node&)> fn) {
    Tensor out(std::move(shape), std::move(data));
    if (!detail::grad_mode()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward_fn = std::move(fn);
    return out;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

inline void Tensor::backward() const {
  if (size() != 1) throw ShapeError("backward() needs a scalar, got " + to_string(shape()));
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

namespace detail {

inline double* parent_grad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
inline const std::vector<double>& parent_data(Node& self, std::size_t i) { return self.parents[i]->data; }

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// C (+)= op(A) * op(B) on row-major buffers; op(A) is m x k, op(B) is k x n.
inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate) {
  using Eigen::Index;
  Eigen::Map<const RowMat> A(a, static_cast<Index>(trans_a ? k : m), static_cast<Index>(trans_a ? m : k));
  Eigen::Map<const RowMat> B(b, static_cast<Index>(trans_b ? n : k), static_cast<Index>(trans_b ? k : n));
  Eigen::Map<RowMat> C(c, static_cast<Index>(m), static_cast<Index>(n));
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) {
    C.noalias() += A * B;
  } else if (!trans_a && trans_b) {
    C.noalias() += A * B.transpose();
  } else if (trans_a && !trans_b) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() += A.transpose() * B.transpose();
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                     " differ");
  }
}

inline void require_finite(std::span<const double> values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

/// Elementwise unary op; `df(x, y)` is the local derivative.
template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
  std::vector<double> out(x.size());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xs[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, [df](Node& self) {
    double* gx = parent_grad(self, 0);
    const auto& xv = parent_data(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * df(xv[i], self.data[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = detail::parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (double* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = detail::parent_data(self, 0);
    const auto& bv = detail::parent_data(self, 1);
    if (double* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

/// Elementwise max; ties send the gradient to `a`.
inline Tensor maximum(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "maximum");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a[i], b[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = detail::parent_data(self, 0);
    const auto& bv = detail::parent_data(self, 1);
    double* ga = detail::parent_grad(self, 0);
    double* gb = detail::parent_grad(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (av[i] >= bv[i]) {
        if (ga) ga[i] += self.grad[i];
      } else if (gb) {
        gb[i] += self.grad[i];
      }
    }
  });
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

/// c - x
inline Tensor rsub_scalar(double c, const Tensor& x) {
  return detail::unary(x, [c](double v) { return c - v; }, [](double, double) { return -1.0; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor silu(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

/// |x| with derivative sign(x), sign(0) := +1.
inline Tensor abs(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::abs(v); }, [](double v, double) { return v < 0.0 ? -1.0 : 1.0; });
}

// ---------------------------------------------------------------------------------------
// Broadcasting over leading or trailing dimensions only

namespace detail {

inline bool is_suffix(const Shape& small, const Shape& big) {
  return small.size() <= big.size() && std::equal(small.rbegin(), small.rend(), big.rbegin());
}

inline bool is_prefix(const Shape& small, const Shape& big) {
  return small.size() <= big.size() && std::equal(small.begin(), small.end(), big.begin());
}

}  // namespace detail

/// x + y where y's shape equals the trailing dimensions of x (bias add).
inline Tensor add_trailing(const Tensor& x, const Tensor& y) {
  if (!detail::is_suffix(y.shape(), x.shape())) {
    throw ShapeError("add_trailing: " + to_string(y.shape()) + " is not a suffix of " + to_string(x.shape()));
  }
  const std::size_t ny = y.size();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i % ny];
  return Tensor::make_result(x.shape(), std::move(out), {x, y}, [ny](detail::Node& self) {
    if (double* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % ny] += self.grad[i];
    }
  });
}

/// x * y where y's shape equals the trailing dimensions of x.
inline Tensor mul_trailing(const Tensor& x, const Tensor& y) {
  if (!detail::is_suffix(y.shape(), x.shape())) {
    throw ShapeError("mul_trailing: " + to_string(y.shape()) + " is not a suffix of " + to_string(x.shape()));
  }
  const std::size_t ny = y.size();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i % ny];
  return Tensor::make_result(x.shape(), std::move(out), {x, y}, [ny](detail::Node& self) {
    const auto& xv = detail::parent_data(self, 0);
    const auto& yv = detail::parent_data(self, 1);
    if (double* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * yv[i % ny];
    }
    if (double* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % ny] += self.grad[i] * xv[i];
    }
  });
}

/// x + s where s's shape equals the leading dimensions of x; each s entry covers one block.
inline Tensor add_leading(const Tensor& x, const Tensor& s) {
  if (!detail::is_prefix(s.shape(), x.shape())) {
    throw ShapeError("add_leading: " + to_string(s.shape()) + " is not a prefix of " + to_string(x.shape()));
  }
  const std::size_t block = x.size() / s.size();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + s[i / block];
  return Tensor::make_result(x.shape(), std::move(out), {x, s}, [block](detail::Node& self) {
    if (double* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i / block] += self.grad[i];
    }
  });
}

/// x * s where s's shape equals the leading dimensions of x.
inline Tensor mul_leading(const Tensor& x, const Tensor& s) {
  if (!detail::is_prefix(s.shape(), x.shape())) {
    throw ShapeError("mul_leading: " + to_string(s.shape()) + " is not a prefix of " + to_string(x.shape()));
  }
  const std::size_t block = x.size() / s.size();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s[i / block];
  return Tensor::make_result(x.shape(), std::move(out), {x, s}, [block](detail::Node& self) {
    const auto& xv = detail::parent_data(self, 0);
    const auto& sv = detail::parent_data(self, 1);
    if (double* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * sv[i / block];
    }
    if (double* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i / block] += self.grad[i] * xv[i];
    }
  });
}

// ---------------------------------------------------------------------------------------
// Matrix products

/// Batched matrix product over the last two dimensions.
///
/// `a` is [..., m, k]. `b` is [..., k, n] (or [..., n, k] with `transpose_b`) where b's
/// batch dimensions must equal the trailing batch dimensions of `a`; a plain 2-D `b` is
/// shared by every batch entry.
inline Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false) {
  if (a.ndim() < 2 || b.ndim() < 2) {
    throw ShapeError("matmul: operands need rank >= 2, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(-2);
  const std::size_t k = a.dim(-1);
  const std::size_t kb = transpose_b ? b.dim(-1) : b.dim(-2);
  const std::size_t n = transpose_b ? b.dim(-2) : b.dim(-1);
  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  if (kb != k || !detail::is_suffix(b_batch, a_batch)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                     (transpose_b ? " (b transposed)" : ""));
  }
  const std::size_t batch_a = numel(a_batch);
  const std::size_t batch_b = numel(b_batch);
  Shape out_shape = a_batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batch_a * m * n);
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  if (batch_b == 1) {
    detail::gemm(false, transpose_b, batch_a * m, n, k, ap, bp, out.data(), false);
  } else {
    for (std::size_t i = 0; i < batch_a; ++i) {
      detail::gemm(false, transpose_b, m, n, k, ap + i * m * k, bp + (i % batch_b) * k * n, out.data() + i * m * n,
                   false);
    }
  }
  return Tensor::make_result(
      std::move(out_shape), std::move(out), {a, b}, [=](detail::Node& self) {
        const double* av = detail::parent_data(self, 0).data();
        const double* bv = detail::parent_data(self, 1).data();
        const double* gc = self.grad.data();
        double* ga = detail::parent_grad(self, 0);
        double* gb = detail::parent_grad(self, 1);
        if (batch_b == 1) {
          const std::size_t rows = batch_a * m;
          if (ga) detail::gemm(false, !transpose_b, rows, k, n, gc, bv, ga, true);
          if (gb) {
            if (transpose_b) {
              detail::gemm(true, false, n, k, rows, gc, av, gb, true);
            } else {
              detail::gemm(true, false, k, n, rows, av, gc, gb, true);
            }
          }
          return;
        }
        for (std::size_t i = 0; i < batch_a; ++i) {
          const double* gci = gc + i * m * n;
          const double* bi = bv + (i % batch_b) * k * n;
          if (ga) detail::gemm(false, !transpose_b, m, k, n, gci, bi, ga + i * m * k, true);
          if (gb) {
            double* gbi = gb + (i % batch_b) * k * n;
            if (transpose_b) {
              detail::gemm(true, false, n, k, m, gci, av + i * m * k, gbi, true);
            } else {
              detail::gemm(true, false, k, n, m, av + i * m * k, gci, gbi, true);
            }
          }
        }
      });
}

/// x W + bias over the last dimension.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_trailing(matmul(x, weight), bias);
}

// ---------------------------------------------------------------------------------------
// Layout

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](detail::Node& self) {
    double* g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

/// Output element i takes x[index[i]]; a negative index yields 0. Gradients scatter-add,
/// so repeated indices (broadcasts) accumulate.
inline Tensor gather(const Tensor& x, std::vector<std::ptrdiff_t> index, Shape shape) {
  if (numel(shape) != index.size()) throw ShapeError("gather: index count does not match " + to_string(shape));
  const auto limit = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= limit) throw ShapeError("gather: index out of range for " + to_string(x.shape()));
    out[i] = index[i] < 0 ? 0.0 : x[static_cast<std::size_t>(index[i])];
  }
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [index = std::move(index)](detail::Node& self) {
    double* g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= 0) g[index[i]] += self.grad[i];
    }
  });
}

inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.ndim();
  if (perm.size() != r) throw ShapeError("permute: rank mismatch for " + to_string(x.shape()));
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t d = r; d-- > 1;) in_stride[d - 1] = in_stride[d] * x.dim(static_cast<std::ptrdiff_t>(d));
  Shape out_shape(r);
  for (std::size_t d = 0; d < r; ++d) out_shape[d] = x.dim(static_cast<std::ptrdiff_t>(perm[d]));
  std::vector<std::ptrdiff_t> index(x.size());
  std::vector<std::size_t> pos(r, 0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < r; ++d) src += pos[d] * in_stride[perm[d]];
    index[i] = static_cast<std::ptrdiff_t>(src);
    for (std::size_t d = r; d-- > 0;) {
      if (++pos[d] < out_shape[d]) break;
      pos[d] = 0;
    }
  }
  return gather(x, std::move(index), std::move(out_shape));
}

/// Concatenates along the last dimension; leading dimensions must agree.
inline Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.ndim() != b.ndim() || !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw ShapeError("concat_last: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t na = a.dim(-1);
  const std::size_t nb = b.dim(-1);
  const std::size_t rows = a.size() / na;
  Shape shape = a.shape();
  shape.back() = na + nb;
  std::vector<double> out(rows * (na + nb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().begin() + r * na, na, out.begin() + r * (na + nb));
    std::copy_n(b.data().begin() + r * nb, nb, out.begin() + r * (na + nb) + na);
  }
  return Tensor::make_result(std::move(shape), std::move(out), {a, b}, [=](detail::Node& self) {
    double* ga = detail::parent_grad(self, 0);
    double* gb = detail::parent_grad(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + r * (na + nb);
      if (ga) {
        for (std::size_t j = 0; j < na; ++j) ga[r * na + j] += g[j];
      }
      if (gb) {
        for (std::size_t j = 0; j < nb; ++j) gb[r * nb + j] += g[na + j];
      }
    }
  });
}

// ---------------------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make_result({}, {s}, {x}, [](detail::Node& self) {
    double* g = detail::parent_grad(self, 0);
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Sum over the last dimension.
inline Tensor sum_last(const Tensor& x) {
  const std::size_t n = x.dim(-1);
  const std::size_t rows = x.size() / n;
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r] += x[r * n + j];
  }
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [n, rows](detail::Node& self) {
    double* g = detail::parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[r];
    }
  });
}

// ---------------------------------------------------------------------------------------
// Row-wise (last dimension) normalizations

/// Softmax over the last dimension with max-subtraction.
inline Tensor softmax_last(const Tensor& x) {
  detail::require_finite(x.data(), "softmax");
  const std::size_t n = x.dim(-1);
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += out[r * n + j] = std::exp(row[j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= total;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [n, rows](detail::Node& self) {
    double* g = detail::parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * n;
      const double* gy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

/// x / sum|x| over the last dimension; an all-zero row stays zero.
inline Tensor l1_normalize_last(const Tensor& x) {
  const std::size_t n = x.dim(-1);
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size(), 0.0);
  std::vector<double> norms(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) norms[r] += std::abs(x[r * n + j]);
    if (norms[r] > 0.0) {
      for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[r * n + j] / norms[r];
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [n, rows, norms](detail::Node& self) {
    double* g = detail::parent_grad(self, 0);
    const auto& xv = detail::parent_data(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      if (norms[r] == 0.0) continue;
      const double* y = self.data.data() + r * n;
      const double* gy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) {
        const double sgn = xv[r * n + j] < 0.0 ? -1.0 : 1.0;
        g[r * n + j] += (gy[j] - sgn * dot) / norms[r];
      }
    }
  });
}

/// LayerNorm over the last dimension with affine gamma/beta.
inline Tensor layer_norm_last(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  const std::size_t n = x.dim(-1);
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw ShapeError("layer_norm: affine parameters must have shape [" + std::to_string(n) + "]");
  }
  const std::size_t rows = x.size() / n;
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (row[j] - mu) * inv_std[r];
      out[r * n + j] = xhat[r * n + j] * gamma[j] + beta[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        double* gx = detail::parent_grad(self, 0);
        double* gg = detail::parent_grad(self, 1);
        double* gb = detail::parent_grad(self, 2);
        const auto& gamma_v = detail::parent_data(self, 1);
        const double nn = static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gy = self.grad.data() + r * n;
          const double* xh = xhat.data() + r * n;
          double mean_d = 0.0;
          double mean_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = gy[j] * gamma_v[j];
            mean_d += d;
            mean_dx += d * xh[j];
            if (gg) gg[j] += gy[j] * xh[j];
            if (gb) gb[j] += gy[j];
          }
          mean_d /= nn;
          mean_dx /= nn;
          if (gx) {
            for (std::size_t j = 0; j < n; ++j) {
              gx[r * n + j] += inv_std[r] * (gy[j] * gamma_v[j] - mean_d - xh[j] * mean_dx);
            }
          }
        }
      });
}

/// Cosine similarity between matching last-dimension rows of a and b. Rows where either
/// side is the zero vector give 0 and pass no gradient.
inline Tensor cosine_last(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "cosine");
  const std::size_t n = a.dim(-1);
  const std::size_t rows = a.size() / n;
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  std::vector<double> out(rows, 0.0);
  std::vector<double> na(rows), nb(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = a[r * n + j], y = b[r * n + j];
      dot += x * y;
      sa += x * x;
      sb += y * y;
    }
    na[r] = std::sqrt(sa);
    nb[r] = std::sqrt(sb);
    if (na[r] > 0.0 && nb[r] > 0.0) out[r] = dot / (na[r] * nb[r]);
  }
  return Tensor::make_result(std::move(shape), std::move(out), {a, b}, [n, rows, na, nb](detail::Node& self) {
    const auto& av = detail::parent_data(self, 0);
    const auto& bv = detail::parent_data(self, 1);
    double* ga = detail::parent_grad(self, 0);
    double* gb = detail::parent_grad(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      if (na[r] == 0.0 || nb[r] == 0.0) continue;
      const double c = self.data[r];
      const double g = self.grad[r];
      for (std::size_t j = 0; j < n; ++j) {
        const double x = av[r * n + j], y = bv[r * n + j];
        if (ga) ga[r * n + j] += g * (y / (na[r] * nb[r]) - c * x / (na[r] * na[r]));
        if (gb) gb[r * n + j] += g * (x / (na[r] * nb[r]) - c * y / (nb[r] * nb[r]));
      }
    }
  });
}

/// Normalized Shannon entropy of each last-dimension row of a nonnegative power tensor:
/// p = P / sum(P), H = -sum p log p / log n. Zero-power rows map to 0 with no gradient;
/// zero bins contribute nothing and receive no gradient.
inline Tensor normalized_entropy_last(const Tensor& power) {
  const std::size_t n = power.dim(-1);
  if (n < 2) throw InputError("normalized entropy needs at least 2 bins");
  const std::size_t rows = power.size() / n;
  const double log_n = std::log(static_cast<double>(n));
  Shape shape(power.shape().begin(), power.shape().end() - 1);
  std::vector<double> out(rows, 0.0);
  std::vector<double> totals(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) totals[r] += power[r * n + j];
    if (totals[r] <= 0.0) continue;
    double h = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double p = power[r * n + j] / totals[r];
      if (p > 0.0) h -= p * std::log(p);
    }
    out[r] = h / log_n;
  }
  return Tensor::make_result(std::move(shape), std::move(out), {power}, [n, rows, log_n, totals](detail::Node& self) {
    double* g = detail::parent_grad(self, 0);
    const auto& pv = detail::parent_data(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      if (totals[r] <= 0.0) continue;
      const double h = self.data[r] * log_n;
      for (std::size_t j = 0; j < n; ++j) {
        const double p = pv[r * n + j] / totals[r];
        if (p <= 0.0) continue;
        g[r * n + j] -= self.grad[r] * (std::log(p) + h) / (totals[r] * log_n);
      }
    }
  });
}

// ---------------------------------------------------------------------------------------
// Operators

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }

}  // namespace seed
