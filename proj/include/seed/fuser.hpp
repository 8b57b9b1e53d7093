#pragma once

#include <string>
#include <vector>

#include "seed/errors.hpp"
#include "seed/spectral.hpp"
#include "seed/tensor.hpp"

namespace seed {

/// (cos(T_cn, E_cn) + 1) / 2 over the feature axis, [..., C, N, D] -> [..., C, N].
/// A zero vector on either side gives 0.5.
inline Tensor patch_similarity(const Tensor& temporal, const Tensor& spatial) {
  if (temporal.shape() != spatial.shape()) {
    throw ShapeError("patch_similarity: " + to_string(temporal.shape()) + " vs " + to_string(spatial.shape()));
  }
  return scale(add_scalar(cosine_last(temporal, spatial), 1.0), 0.5);
}

/// w = (1 - SpEn_c) * (1 - Sim_cn); entropy is [..., C], similarity [..., C, N].
inline Tensor fusion_weights(const Tensor& similarity, const Tensor& entropy) {
  return mul_leading(rsub_scalar(1.0, similarity), rsub_scalar(1.0, entropy));
}

/// w * T + (1 - w) * E with w broadcast over the feature axis.
inline Tensor blend(const Tensor& temporal, const Tensor& spatial, const Tensor& weights) {
  if (temporal.shape() != spatial.shape()) {
    throw ShapeError("blend: " + to_string(temporal.shape()) + " vs " + to_string(spatial.shape()));
  }
  return add(mul_leading(temporal, weights), mul_leading(spatial, rsub_scalar(1.0, weights)));
}

/// Entropy-guided fusion of temporal and spatial features. `weights_out`, when set,
/// receives the [..., C, N] fusion weights.
inline Tensor fuse(const Tensor& temporal, const Tensor& spatial, const Tensor& entropy, Tensor* weights_out = nullptr) {
  if (temporal.shape() != spatial.shape() || temporal.ndim() < 3) {
    throw ShapeError("fuse: feature shapes " + to_string(temporal.shape()) + " and " + to_string(spatial.shape()));
  }
  const Shape expected(temporal.shape().begin(), temporal.shape().end() - 2);
  if (entropy.shape() != expected) {
    throw ShapeError("fuse: entropy shape " + to_string(entropy.shape()) + ", expected " + to_string(expected));
  }
  Tensor w = fusion_weights(patch_similarity(temporal, spatial), entropy);
  if (weights_out != nullptr) *weights_out = w;
  return blend(temporal, spatial, w);
}

/// Unbatched convenience: C x N x D features with a per-variable entropy vector.
inline Tensor fuse(const Tensor& temporal, const Tensor& spatial, const EntropyVector& entropy) {
  return fuse(temporal, spatial, Tensor({entropy.size()}, entropy.values));
}

}  // namespace seed
