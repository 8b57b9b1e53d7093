#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "seed/errors.hpp"
#include "seed/rng.hpp"
#include "seed/tensor.hpp"

namespace seed {

inline constexpr double kStdFloor = 1e-5;

/// Per-row statistics of an instance-normalized window; one entry per (batch, variable).
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Z-scores every last-dimension row of a [..., C, L] window. Population std, floored.
inline std::pair<Tensor, NormStats> instance_normalize(const Tensor& window) {
  if (window.ndim() < 1 || window.size() == 0) throw ShapeError("instance_normalize: empty window");
  const std::size_t l = window.dim(-1);
  const std::size_t rows = window.size() / l;
  NormStats stats{std::vector<double>(rows), std::vector<double>(rows)};
  std::vector<double> out(window.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = window.data().subspan(r * l, l);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(l);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(l);
    const double sd = std::max(std::sqrt(var), kStdFloor);
    stats.mean[r] = mu;
    stats.std[r] = sd;
    for (std::size_t t = 0; t < l; ++t) out[r * l + t] = (row[t] - mu) / sd;
  }
  return {Tensor(window.shape(), std::move(out)), std::move(stats)};
}

/// out * std + mean per row.
inline Tensor denormalize(const Tensor& out, const NormStats& stats) {
  const Shape lead(out.shape().begin(), out.shape().end() - 1);
  if (numel(lead) != stats.mean.size()) throw ShapeError("denormalize: stats do not match " + to_string(out.shape()));
  return add_leading(mul_leading(out, Tensor(lead, stats.std)), Tensor(lead, stats.mean));
}

inline std::size_t patch_count(std::size_t lookback, std::size_t patch_len) {
  return (lookback + patch_len - 1) / patch_len;
}

/// Fixed sinusoidal encoding over patch index, N x D.
inline Tensor positional_encoding(std::size_t n_patches, std::size_t d_model) {
  std::vector<double> pe(n_patches * d_model);
  for (std::size_t n = 0; n < n_patches; ++n) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d_model));
      const double angle = static_cast<double>(n) * freq;
      pe[n * d_model + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor({n_patches, d_model}, std::move(pe));
}

/// Patch-to-token linear map.
struct EmbeddingParams {
  Tensor weight;  // P x D
  Tensor bias;    // D

  static EmbeddingParams init(std::size_t patch_len, std::size_t d_model, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(patch_len));
    std::vector<double> w(patch_len * d_model);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    return {Tensor({patch_len, d_model}, std::move(w), true), Tensor::zeros({d_model}, true)};
  }
};

struct PatchTokens {
  Tensor values;  // [..., C, N, D]
  std::size_t patch_len = 0;
  std::size_t n_patches = 0;
};

/// Splits [..., C, L] into [..., C, N, P] non-overlapping patches; the last one is
/// zero-padded when P does not divide L.
inline Tensor make_patches(const Tensor& window, std::size_t patch_len) {
  const std::size_t l = window.dim(-1);
  if (patch_len < 1 || patch_len > l) {
    throw ConfigError("patch length " + std::to_string(patch_len) + " must lie in [1, " + std::to_string(l) + "]");
  }
  const std::size_t n = patch_count(l, patch_len);
  const std::size_t rows = window.size() / l;
  std::vector<std::ptrdiff_t> index(rows * n * patch_len);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n * patch_len; ++j) {
      index[r * n * patch_len + j] = j < l ? static_cast<std::ptrdiff_t>(r * l + j) : -1;
    }
  }
  Shape shape(window.shape().begin(), window.shape().end() - 1);
  shape.push_back(n);
  shape.push_back(patch_len);
  return gather(window, std::move(index), std::move(shape));
}

inline PatchTokens patch_and_embed(const Tensor& window, const EmbeddingParams& params, std::size_t patch_len) {
  if (params.weight.dim(0) != patch_len) throw ConfigError("embedding weight does not match patch length");
  Tensor patches = make_patches(window, patch_len);
  const std::size_t n = patches.dim(-2);
  const std::size_t d = params.weight.dim(1);
  Tensor tokens = add_trailing(linear(patches, params.weight, params.bias), positional_encoding(n, d));
  return {std::move(tokens), patch_len, n};
}

/// Flatten-and-project head, N*D -> T.
struct HeadParams {
  Tensor weight;  // (N*D) x T
  Tensor bias;    // T

  static HeadParams init(std::size_t in_features, std::size_t horizon, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    std::vector<double> w(in_features * horizon);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    return {Tensor({in_features, horizon}, std::move(w), true), Tensor::zeros({horizon}, true)};
  }
};

/// [..., C, N, D] tokens -> [..., C, T] forecast, de-normalized with `stats` when given.
inline Tensor project_output(const Tensor& tokens, const HeadParams& head, const NormStats* stats) {
  if (tokens.ndim() < 3) throw ShapeError("project_output: expected [..., C, N, D], got " + to_string(tokens.shape()));
  Shape flat(tokens.shape().begin(), tokens.shape().end() - 2);
  flat.push_back(tokens.dim(-2) * tokens.dim(-1));
  if (head.weight.dim(0) != flat.back()) throw ShapeError("project_output: head expects a different N*D");
  Tensor out = linear(reshape(tokens, flat), head.weight, head.bias);
  return stats != nullptr ? denormalize(out, *stats) : out;
}

}  // namespace seed
