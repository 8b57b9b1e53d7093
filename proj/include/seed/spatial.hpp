#pragma once

// Context spatial extraction: local spatio-temporal windows over the patch grid, signed
// graphs from a learnable bilinear distance, KNN sparsification, one signed GCN step per
// window, and overlap pooling back onto the patch grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "seed/attention.hpp"
#include "seed/errors.hpp"
#include "seed/rng.hpp"
#include "seed/tensor.hpp"

namespace seed {

enum class GraphVariant {
  tanh_signed,     // tanh then row L1 normalization
  softmax_signed,  // softmax over |s|, re-signed
  plain_softmax,   // ordinary softmax over s; no negative edges
};

enum class PoolMode { mean, max };

/// How patches are grouped into graph windows.
enum class WindowMode {
  local_pair,   // patches k and k+1 of every variable, stride 1: N-1 windows of 2C nodes
  same_step,    // one patch of every variable: N windows of C nodes
  all_patches,  // every patch of every variable: 1 window of C*N nodes
};

enum class Activation { silu, identity };

/// One graph window: n x D node features.
struct LocalWindow {
  Tensor nodes;
  std::size_t index = 0;  // 1-based window index k
};

struct SignedGraph {
  Tensor weights;                   // [..., H, n, n]; masked entries are exactly zero
  std::vector<unsigned char> mask;  // same size as weights, 1 = retained
  GraphVariant variant = GraphVariant::tanh_signed;
};

/// Bilinear form x_i Q x_j^T over head-split features: one d_h x d_h matrix shared by all
/// heads, or H x d_h x d_h when per_head.
struct DistanceParams {
  Tensor q;
  bool per_head = false;

  static DistanceParams init(std::size_t head_dim, std::size_t heads, bool per_head, Rng& rng) {
    const std::size_t count = per_head ? heads : 1;
    std::vector<double> v(count * head_dim * head_dim);
    for (auto& x : v) x = rng.normal() / static_cast<double>(head_dim);
    Shape shape = per_head ? Shape{heads, head_dim, head_dim} : Shape{head_dim, head_dim};
    return {Tensor(std::move(shape), std::move(v), true), per_head};
  }
};

struct GcnParams {
  Tensor weight;  // D x D, applied after concatenating heads
  Tensor bias;    // D
  Activation activation = Activation::silu;

  static GcnParams init(std::size_t d_model, Activation act, Rng& rng) {
    return {init_weight(d_model, d_model, rng), Tensor::zeros({d_model}, true), act};
  }
};

struct SpatialConfig {
  std::size_t heads = 4;
  std::size_t knn_k = 0;  // 0 = max(2, ceil(n/2))
  GraphVariant variant = GraphVariant::tanh_signed;
  PoolMode pool = PoolMode::mean;
  WindowMode windows = WindowMode::local_pair;
  bool keep_self = true;
};

struct SpatialParams {
  DistanceParams distance;
  GcnParams gcn;
};

/// Intermediate values of one extraction, for inspection.
struct SpatialTrace {
  Tensor scores;  // [..., W, H, n, n]
  SignedGraph graph;
};

inline std::size_t node_count(WindowMode mode, std::size_t vars, std::size_t patches) {
  switch (mode) {
    case WindowMode::local_pair: return 2 * vars;
    case WindowMode::same_step: return vars;
    case WindowMode::all_patches: return vars * patches;
  }
  return 0;
}

inline std::size_t window_count(WindowMode mode, std::size_t patches) {
  switch (mode) {
    case WindowMode::local_pair: return patches - 1;
    case WindowMode::same_step: return patches;
    case WindowMode::all_patches: return 1;
  }
  return 0;
}

inline std::size_t default_knn_k(std::size_t n) { return std::min(n, std::max<std::size_t>(2, (n + 1) / 2)); }

/// [..., C, N, D] -> [..., W, n, D]. In local_pair mode window k (0-based) lists
/// [var0@k, var0@k+1, var1@k, var1@k+1, ...]; all_patches lists var-major, patch-minor.
inline Tensor make_windows_tensor(const Tensor& tokens, WindowMode mode = WindowMode::local_pair) {
  if (tokens.ndim() < 3) throw ShapeError("make_windows: expected [..., C, N, D], got " + to_string(tokens.shape()));
  const std::size_t c = tokens.dim(-3), np = tokens.dim(-2), d = tokens.dim(-1);
  if (mode == WindowMode::local_pair && np < 2) {
    throw ConfigError("local windows need at least 2 patches; lookback/patch length too coarse");
  }
  const std::size_t w = window_count(mode, np), n = node_count(mode, c, np);
  const std::size_t batch = tokens.size() / (c * np * d);
  std::vector<std::ptrdiff_t> index;
  index.reserve(batch * w * n * d);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < w; ++k) {
      for (std::size_t node = 0; node < n; ++node) {
        std::size_t var = 0, patch = 0;
        switch (mode) {
          case WindowMode::local_pair: var = node / 2, patch = k + node % 2; break;
          case WindowMode::same_step: var = node, patch = k; break;
          case WindowMode::all_patches: var = node / np, patch = node % np; break;
        }
        const std::size_t base = ((b * c + var) * np + patch) * d;
        for (std::size_t j = 0; j < d; ++j) index.push_back(static_cast<std::ptrdiff_t>(base + j));
      }
    }
  }
  Shape shape(tokens.shape().begin(), tokens.shape().end() - 3);
  shape.insert(shape.end(), {w, n, d});
  return gather(tokens, std::move(index), std::move(shape));
}

/// Unbatched C x N x D tokens -> N-1 local windows of 2C nodes.
inline std::vector<LocalWindow> make_windows(const Tensor& tokens) {
  if (tokens.ndim() != 3) throw ShapeError("make_windows: expected C x N x D");
  const Tensor all = make_windows_tensor(tokens);
  const std::size_t w = all.dim(0), n = all.dim(1), d = all.dim(2);
  std::vector<LocalWindow> out;
  for (std::size_t k = 0; k < w; ++k) {
    const auto slice = all.data().subspan(k * n * d, n * d);
    out.push_back({Tensor({n, d}, std::vector<double>(slice.begin(), slice.end())), k + 1});
  }
  return out;
}

/// Head-split bilinear scores [..., H, n, n] from node features [..., n, D]. Heads take
/// floor(D/H) features each; trailing remainder features are unused.
inline Tensor signed_distance(const Tensor& nodes, const DistanceParams& params, std::size_t heads) {
  const std::size_t d = nodes.dim(-1);
  if (heads == 0 || heads > d) {
    throw ConfigError("graph heads (" + std::to_string(heads) + ") must lie in [1, D=" + std::to_string(d) + "]");
  }
  const std::size_t dh = d / heads;
  if (params.q.dim(-1) != dh || params.q.dim(-2) != dh || (params.per_head && params.q.dim(0) != heads)) {
    throw ShapeError("signed_distance: Q shape " + to_string(params.q.shape()) + " does not match head width " +
                     std::to_string(dh));
  }
  Tensor x = nodes;
  if (dh * heads != d) {
    const std::size_t rows = nodes.size() / d, used = dh * heads;
    std::vector<std::ptrdiff_t> index(rows * used);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < used; ++j) index[r * used + j] = static_cast<std::ptrdiff_t>(r * d + j);
    }
    Shape shape = nodes.shape();
    shape.back() = used;
    x = gather(nodes, std::move(index), std::move(shape));
  }
  const Tensor xh = split_heads(x, heads);
  return matmul(matmul(xh, params.q), xh, /*transpose_b=*/true);
}

inline Tensor sign_tensor(const Tensor& scores) {
  std::vector<double> s(scores.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = scores[i] < 0.0 ? -1.0 : 1.0;
  return Tensor(scores.shape(), std::move(s));
}

/// sign(s) * softmax(|s|) per row, with sign(0) = +1.
inline Tensor sign_softmax_weights(const Tensor& scores) {
  return mul(softmax_last(abs(scores)), sign_tensor(scores));
}

/// tanh(s) / sum_j |tanh(s_j)| per row; all-zero rows stay zero.
inline Tensor tanh_l1_weights(const Tensor& scores) { return l1_normalize_last(tanh(scores)); }

inline Tensor graph_weights(const Tensor& scores, GraphVariant variant) {
  switch (variant) {
    case GraphVariant::tanh_signed: return tanh_l1_weights(scores);
    case GraphVariant::softmax_signed: return sign_softmax_weights(scores);
    case GraphVariant::plain_softmax: return softmax_last(scores);
  }
  throw ConfigError("unknown graph variant");
}

inline SignedGraph dense_graph(Tensor weights, GraphVariant variant) {
  std::vector<unsigned char> mask(weights.size(), 1);
  return {std::move(weights), std::move(mask), variant};
}

inline SignedGraph sign_softmax_graph(const Tensor& scores) {
  return dense_graph(sign_softmax_weights(scores), GraphVariant::softmax_signed);
}

inline SignedGraph tanh_l1_graph(const Tensor& scores) {
  return dense_graph(tanh_l1_weights(scores), GraphVariant::tanh_signed);
}

/// Per row of every trailing n x n matrix, keep the k entries of largest |w|; ties go to
/// the lower column index. With keep_self the diagonal entry is always kept and counts
/// toward k.
inline std::vector<unsigned char> knn_mask(const Tensor& weights, std::size_t k, bool keep_self = true) {
  const std::size_t n = weights.dim(-1);
  if (weights.dim(-2) != n) throw ShapeError("knn: expected square trailing matrices");
  if (k < 1 || k > n) throw ConfigError("knn k=" + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  const std::size_t rows = weights.size() / n;
  std::vector<unsigned char> mask(weights.size(), 0);
  std::vector<std::size_t> order(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = weights.data().data() + r * n;
    const std::size_t self = r % n;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(row[a]) > std::abs(row[b]); });
    std::size_t kept = 0;
    if (keep_self) {
      mask[r * n + self] = 1;
      ++kept;
    }
    for (std::size_t j = 0; j < n && kept < k; ++j) {
      if (mask[r * n + order[j]]) continue;
      mask[r * n + order[j]] = 1;
      ++kept;
    }
  }
  return mask;
}

/// Zeroes everything outside the KNN mask. The mask is a constant of the forward pass;
/// gradients flow through retained entries only.
inline SignedGraph knn_sparsify(const SignedGraph& graph, std::size_t k, bool keep_self = true) {
  auto mask = knn_mask(graph.weights, k, keep_self);
  std::vector<unsigned char> combined(mask.size());
  std::vector<double> m(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    combined[i] = mask[i] && graph.mask[i];
    m[i] = combined[i] ? 1.0 : 0.0;
  }
  return {mul(graph.weights, Tensor(graph.weights.shape(), std::move(m))), std::move(combined), graph.variant};
}

/// One signed graph convolution with residual: X + act(concat_h(A_h X_h) W + b).
inline Tensor gcn(const Tensor& nodes, const Tensor& adjacency, const GcnParams& params, std::size_t heads) {
  const std::size_t d = nodes.dim(-1);
  if (heads == 0 || d % heads != 0) throw ConfigError("gcn heads must divide d_model");
  if (adjacency.dim(-3) != heads || adjacency.dim(-1) != nodes.dim(-2)) {
    throw ShapeError("gcn: adjacency " + to_string(adjacency.shape()) + " does not match nodes " +
                     to_string(nodes.shape()));
  }
  Tensor mixed = linear(merge_heads(matmul(adjacency, split_heads(nodes, heads))), params.weight, params.bias);
  if (params.activation == Activation::silu) mixed = silu(mixed);
  return add(nodes, mixed);
}

/// Representation of patch k from two adjacent local windows: mean of the previous
/// window's second slot and the current window's first slot, per variable. Inputs are
/// 2C x D; output C x D.
inline Tensor overlap_pool(const Tensor& prev, const Tensor& curr, PoolMode mode = PoolMode::mean) {
  if (prev.shape() != curr.shape() || prev.ndim() != 2 || prev.dim(0) % 2 != 0) {
    throw Error("overlap_pool: windows must both be 2C x D");
  }
  const std::size_t c = prev.dim(0) / 2, d = prev.dim(1);
  std::vector<std::ptrdiff_t> second(c * d), first(c * d);
  for (std::size_t v = 0; v < c; ++v) {
    for (std::size_t j = 0; j < d; ++j) {
      second[v * d + j] = static_cast<std::ptrdiff_t>((2 * v + 1) * d + j);
      first[v * d + j] = static_cast<std::ptrdiff_t>((2 * v) * d + j);
    }
  }
  const Tensor a = gather(prev, std::move(second), {c, d});
  const Tensor b = gather(curr, std::move(first), {c, d});
  return mode == PoolMode::mean ? scale(add(a, b), 0.5) : maximum(a, b);
}

/// [..., N-1, 2C, D] window outputs -> [..., C, N, D] patch grid. Interior patches pool
/// their two representations; the first and last patch take their single one.
inline Tensor overlap_pool_windows(const Tensor& windows, std::size_t vars, PoolMode mode = PoolMode::mean) {
  const std::size_t w = windows.dim(-3), n = windows.dim(-2), d = windows.dim(-1);
  if (n != 2 * vars) throw Error("overlap_pool: window node count is not 2C");
  const std::size_t np = w + 1;
  const std::size_t batch = windows.size() / (w * n * d);
  std::vector<std::ptrdiff_t> from_prev, from_next;
  from_prev.reserve(batch * vars * np * d);
  from_next.reserve(batch * vars * np * d);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t v = 0; v < vars; ++v) {
      for (std::size_t p = 0; p < np; ++p) {
        // Patch p is slot 1 of window p-1 and slot 0 of window p.
        const std::size_t prev_node = p > 0 ? ((b * w + p - 1) * n + 2 * v + 1) : 0;
        const std::size_t next_node = p < w ? ((b * w + p) * n + 2 * v) : 0;
        const std::size_t a = p > 0 ? prev_node : next_node;
        const std::size_t c = p < w ? next_node : prev_node;
        for (std::size_t j = 0; j < d; ++j) {
          from_prev.push_back(static_cast<std::ptrdiff_t>(a * d + j));
          from_next.push_back(static_cast<std::ptrdiff_t>(c * d + j));
        }
      }
    }
  }
  Shape shape(windows.shape().begin(), windows.shape().end() - 3);
  shape.insert(shape.end(), {vars, np, d});
  const Tensor lhs = gather(windows, std::move(from_prev), shape);
  const Tensor rhs = gather(windows, std::move(from_next), shape);
  return mode == PoolMode::mean ? scale(add(lhs, rhs), 0.5) : maximum(lhs, rhs);
}

/// Full extractor: windows -> distances -> signed graph -> KNN -> GCN -> back to the
/// [..., C, N, D] patch grid.
inline Tensor context_spatial_extract(const Tensor& tokens, const SpatialParams& params, const SpatialConfig& cfg,
                                      SpatialTrace* trace = nullptr) {
  if (tokens.ndim() < 3) throw ShapeError("context_spatial_extract: expected [..., C, N, D]");
  const std::size_t c = tokens.dim(-3), np = tokens.dim(-2), d = tokens.dim(-1);
  const Tensor windows = make_windows_tensor(tokens, cfg.windows);
  const std::size_t n = windows.dim(-2);
  const Tensor scores = signed_distance(windows, params.distance, cfg.heads);
  std::size_t k = cfg.knn_k == 0 ? default_knn_k(n) : std::min(cfg.knn_k, n);
  if (cfg.windows == WindowMode::all_patches) k = n;
  const SignedGraph graph = knn_sparsify(dense_graph(graph_weights(scores, cfg.variant), cfg.variant), k, cfg.keep_self);
  if (trace != nullptr) *trace = {scores, graph};
  const Tensor out = gcn(windows, graph.weights, params.gcn, cfg.heads);

  Shape grid(tokens.shape().begin(), tokens.shape().end() - 3);
  switch (cfg.windows) {
    case WindowMode::local_pair: return overlap_pool_windows(out, c, cfg.pool);
    case WindowMode::same_step: {
      // [..., N, C, D] -> [..., C, N, D]
      const std::size_t r = grid.size();
      std::vector<std::size_t> perm(r);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      perm.insert(perm.end(), {r + 1, r, r + 2});
      return permute(out, perm);
    }
    case WindowMode::all_patches:
      grid.insert(grid.end(), {c, np, d});
      return reshape(out, grid);
  }
  throw ConfigError("unknown window mode");
}

}  // namespace seed
