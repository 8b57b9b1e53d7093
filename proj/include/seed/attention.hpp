#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "seed/errors.hpp"
#include "seed/rng.hpp"
#include "seed/tensor.hpp"

namespace seed {

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight, the usual linear-layer default.
inline Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return Tensor({fan_in, fan_out}, std::move(w), true);
}

/// Multi-head projections; head h uses columns [h*d_k, (h+1)*d_k) of wq/wk/wv.
struct AttentionParams {
  std::size_t heads = 1;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  static AttentionParams init(std::size_t d_model, std::size_t heads, Rng& rng) {
    if (heads == 0 || d_model % heads != 0) {
      throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide d_model (" +
                        std::to_string(d_model) + ")");
    }
    AttentionParams p;
    p.heads = heads;
    p.wq = init_weight(d_model, d_model, rng);
    p.bq = Tensor::zeros({d_model}, true);
    p.wk = init_weight(d_model, d_model, rng);
    p.bk = Tensor::zeros({d_model}, true);
    p.wv = init_weight(d_model, d_model, rng);
    p.bv = Tensor::zeros({d_model}, true);
    p.wo = init_weight(d_model, d_model, rng);
    p.bo = Tensor::zeros({d_model}, true);
    return p;
  }
};

/// [..., N, D] -> [..., H, N, D/H]
inline Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t n = x.dim(-2), d = x.dim(-1);
  Shape lead(x.shape().begin(), x.shape().end() - 2);
  Shape split = lead;
  split.insert(split.end(), {n, heads, d / heads});
  std::vector<std::size_t> perm(lead.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  const std::size_t r = lead.size();
  perm.insert(perm.end(), {r + 1, r, r + 2});
  return permute(reshape(x, split), perm);
}

/// [..., H, N, d_k] -> [..., N, H*d_k]
inline Tensor merge_heads(const Tensor& x) {
  const std::size_t h = x.dim(-3), n = x.dim(-2), dk = x.dim(-1);
  const std::size_t r = x.ndim() - 3;
  std::vector<std::size_t> perm(r);
  for (std::size_t i = 0; i < r; ++i) perm[i] = i;
  perm.insert(perm.end(), {r + 1, r, r + 2});
  Shape merged(x.shape().begin(), x.shape().end() - 3);
  merged.insert(merged.end(), {n, h * dk});
  return reshape(permute(x, perm), merged);
}

/// Bidirectional multi-head self-attention over the patch axis of [..., C, N, D] tokens.
/// Every leading index (batch, variable) is attended independently; nothing mixes across
/// variables. `weights_out`, when set, receives the [..., H, N, N] attention maps.
inline Tensor temporal_attention(const Tensor& tokens, const AttentionParams& p, Tensor* weights_out = nullptr) {
  if (tokens.ndim() < 2) throw ShapeError("temporal_attention: expected [..., N, D]");
  const std::size_t d = tokens.dim(-1);
  if (p.heads == 0 || d % p.heads != 0) throw ConfigError("attention heads must divide d_model");
  const std::size_t dk = d / p.heads;
  const Tensor q = split_heads(linear(tokens, p.wq, p.bq), p.heads);
  const Tensor k = split_heads(linear(tokens, p.wk, p.bk), p.heads);
  const Tensor v = split_heads(linear(tokens, p.wv, p.bv), p.heads);
  const Tensor attn = softmax_last(scale(matmul(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(dk))));
  if (weights_out != nullptr) *weights_out = attn;
  return linear(merge_heads(matmul(attn, v)), p.wo, p.bo);
}

}  // namespace seed
