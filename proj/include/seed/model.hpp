#pragma once

// Full forecaster: instance normalization, spectral-entropy dependency evaluation, patch
// embedding, a stack of dual-pathway layers (temporal attention alongside context
// spatial extraction, entropy-guided fusion, residual + LayerNorm, feed-forward), and a
// flatten head with de-normalization. Ablations are wiring choices over the same parts.

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "seed/attention.hpp"
#include "seed/config.hpp"
#include "seed/embedding.hpp"
#include "seed/errors.hpp"
#include "seed/fuser.hpp"
#include "seed/rng.hpp"
#include "seed/spatial.hpp"
#include "seed/spectral.hpp"
#include "seed/tensor.hpp"

namespace seed {

enum class FusionRule {
  entropy_guided,  // w = (1 - SpEn)(1 - Sim), F = wT + (1-w)E
  temporal_only,   // F = T
  spatial_only,    // F = E
  swapped,         // entropy-guided with T and E exchanged
  learned_scalar,  // w = sigmoid(theta_c), one learnable scalar per variable
  learned_linear,  // w = sigmoid([T, E] a + b)
};

/// What a variant turns on and how the pieces connect.
struct Wiring {
  bool temporal = true;
  bool spatial = true;
  GraphVariant graph = GraphVariant::tanh_signed;
  WindowMode windows = WindowMode::local_pair;
  FusionRule fusion = FusionRule::entropy_guided;

  std::string describe() const {
    static const char* fusion_names[] = {"entropy_guided", "temporal_only",  "spatial_only",
                                         "swapped",        "learned_scalar", "learned_linear"};
    static const char* window_names[] = {"local_pair", "same_step", "all_patches"};
    std::ostringstream os;
    os << "temporal=" << (temporal ? "on" : "off") << " spatial=" << (spatial ? "on" : "off")
       << " graph=" << to_string(graph) << " windows=" << window_names[static_cast<int>(windows)]
       << " fusion=" << fusion_names[static_cast<int>(fusion)];
    return os.str();
  }
};

inline Wiring apply_variant(const ModelConfig& cfg) {
  Wiring w;
  w.graph = cfg.graph_variant;
  switch (cfg.variant) {
    case Variant::full: break;
    case Variant::wo_tattn:
      w.temporal = false;
      w.fusion = FusionRule::spatial_only;
      break;
    case Variant::wo_cse:
      w.spatial = false;
      w.fusion = FusionRule::temporal_only;
      break;
    case Variant::re_s1: w.graph = GraphVariant::plain_softmax; break;
    case Variant::re_s2: w.graph = GraphVariant::softmax_signed; break;
    case Variant::re_f1: w.fusion = FusionRule::learned_scalar; break;
    case Variant::re_f2: w.fusion = FusionRule::swapped; break;
    case Variant::re_f3: w.fusion = FusionRule::learned_linear; break;
    case Variant::re_c1: w.windows = WindowMode::same_step; break;
    case Variant::re_c2: w.windows = WindowMode::all_patches; break;
  }
  return w;
}

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct LayerParams {
  std::optional<AttentionParams> attention;
  std::optional<SpatialParams> spatial;
  Tensor fuse_theta;  // [C], learned_scalar
  Tensor fuse_w;      // [2D, 1], learned_linear
  Tensor fuse_b;      // [1]
  Tensor ln1_gamma, ln1_beta;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor ln2_gamma, ln2_beta;
};

/// Per-forward intermediates, for tests and analysis.
struct ForwardTrace {
  Tensor entropy;                          // [B, C]
  std::vector<Tensor> fusion_weights;      // per layer, [B, C, N] (undefined when unused)
  std::vector<SpatialTrace> spatial;       // per layer
  Tensor temporal_attention;               // first layer, [B, C, H, N, N]
};

class SeedModel {
 public:
  explicit SeedModel(ModelConfig cfg) : cfg_(std::move(cfg)), dropout_rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL) {
    cfg_.validate();
    wiring_ = apply_variant(cfg_);
    Rng rng(cfg_.seed);
    const std::size_t d = cfg_.d_model;
    const std::size_t n = cfg_.n_patches();

    filter_re_ = Tensor::full({cfg_.lookback}, 1.0, true);
    filter_im_ = Tensor::zeros({cfg_.lookback}, true);
    register_param("filter.re", filter_re_);
    register_param("filter.im", filter_im_);

    embedding_ = EmbeddingParams::init(cfg_.patch_len, d, rng);
    register_param("embed.weight", embedding_.weight);
    register_param("embed.bias", embedding_.bias);

    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      LayerParams p;
      const std::string prefix = "layer" + std::to_string(l) + ".";
      if (wiring_.temporal) {
        p.attention = AttentionParams::init(d, cfg_.attn_heads, rng);
        register_param(prefix + "attn.wq", p.attention->wq);
        register_param(prefix + "attn.bq", p.attention->bq);
        register_param(prefix + "attn.wk", p.attention->wk);
        register_param(prefix + "attn.bk", p.attention->bk);
        register_param(prefix + "attn.wv", p.attention->wv);
        register_param(prefix + "attn.bv", p.attention->bv);
        register_param(prefix + "attn.wo", p.attention->wo);
        register_param(prefix + "attn.bo", p.attention->bo);
      }
      if (wiring_.spatial) {
        const std::size_t dh = d / cfg_.gcn_heads;
        p.spatial = SpatialParams{DistanceParams::init(dh, cfg_.gcn_heads, cfg_.per_head_q, rng),
                                  GcnParams::init(d, cfg_.gcn_activation, rng)};
        register_param(prefix + "cse.q", p.spatial->distance.q);
        register_param(prefix + "cse.gcn_w", p.spatial->gcn.weight);
        register_param(prefix + "cse.gcn_b", p.spatial->gcn.bias);
      }
      if (wiring_.fusion == FusionRule::learned_scalar) {
        p.fuse_theta = Tensor::zeros({cfg_.n_vars}, true);
        register_param(prefix + "fuse.theta", p.fuse_theta);
      }
      if (wiring_.fusion == FusionRule::learned_linear) {
        p.fuse_w = init_weight(2 * d, 1, rng);
        p.fuse_b = Tensor::zeros({1}, true);
        register_param(prefix + "fuse.w", p.fuse_w);
        register_param(prefix + "fuse.b", p.fuse_b);
      }
      p.ln1_gamma = Tensor::full({d}, 1.0, true);
      p.ln1_beta = Tensor::zeros({d}, true);
      p.ff_w1 = init_weight(d, 2 * d, rng);
      p.ff_b1 = Tensor::zeros({2 * d}, true);
      p.ff_w2 = init_weight(2 * d, d, rng);
      p.ff_b2 = Tensor::zeros({d}, true);
      p.ln2_gamma = Tensor::full({d}, 1.0, true);
      p.ln2_beta = Tensor::zeros({d}, true);
      register_param(prefix + "ln1.gamma", p.ln1_gamma);
      register_param(prefix + "ln1.beta", p.ln1_beta);
      register_param(prefix + "ff.w1", p.ff_w1);
      register_param(prefix + "ff.b1", p.ff_b1);
      register_param(prefix + "ff.w2", p.ff_w2);
      register_param(prefix + "ff.b2", p.ff_b2);
      register_param(prefix + "ln2.gamma", p.ln2_gamma);
      register_param(prefix + "ln2.beta", p.ln2_beta);
      layers_.push_back(std::move(p));
    }

    head_ = HeadParams::init(n * d, cfg_.horizon, rng);
    register_param("head.weight", head_.weight);
    register_param("head.bias", head_.bias);
  }

  SeedModel(const SeedModel&) = delete;
  SeedModel& operator=(const SeedModel&) = delete;
  SeedModel(SeedModel&&) = default;
  SeedModel& operator=(SeedModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  const Wiring& wiring() const { return wiring_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  const LayerParams& layer(std::size_t i) const { return layers_.at(i); }
  const HeadParams& head() const { return head_; }
  const EmbeddingParams& embedding() const { return embedding_; }
  std::pair<Tensor, Tensor> filter() const { return {filter_re_, filter_im_}; }

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  /// Forces every fusion weight to a constant (1 = temporal only, 0 = spatial only).
  void set_fusion_override(std::optional<double> w) { fusion_override_ = w; }

  /// Current shaping filter as complex weights.
  ShapingFilter shaping_filter() const {
    ShapingFilter f;
    for (std::size_t k = 0; k < cfg_.lookback; ++k) f.weights.emplace_back(filter_re_[k], filter_im_[k]);
    return f;
  }

  /// [C, L] or [B, C, L] lookback -> [C, T] or [B, C, T] forecast.
  Tensor forward(const Tensor& window, ForwardTrace* trace = nullptr) const {
    const bool unbatched = window.ndim() == 2;
    if ((window.ndim() != 2 && window.ndim() != 3) || window.dim(-2) != cfg_.n_vars ||
        window.dim(-1) != cfg_.lookback) {
      throw ConfigError("forward: window shape " + to_string(window.shape()) + " does not match config (C=" +
                        std::to_string(cfg_.n_vars) + ", L=" + std::to_string(cfg_.lookback) + ")");
    }
    const Tensor x = unbatched ? reshape(window, {1, cfg_.n_vars, cfg_.lookback}) : window;
    const std::size_t batch = x.dim(0);

    Tensor normalized = x;
    NormStats stats;
    if (cfg_.revin) std::tie(normalized, stats) = instance_normalize(x);

    Tensor entropy;
    if (cfg_.detach_entropy) {
      NoGradGuard no_grad;
      entropy = spectral_entropy_rows(normalized, &filter_re_, &filter_im_);
    } else {
      entropy = spectral_entropy_rows(normalized, &filter_re_, &filter_im_);
    }
    if (trace != nullptr) trace->entropy = entropy;

    Tensor h = patch_and_embed(normalized, embedding_, cfg_.patch_len).values;
    const std::size_t n = h.dim(-2);

    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerParams& p = layers_[l];
      Tensor temporal, spatial, weights;
      if (p.attention) {
        Tensor* attn_out = (trace != nullptr && l == 0) ? &trace->temporal_attention : nullptr;
        temporal = temporal_attention(h, *p.attention, attn_out);
      }
      if (p.spatial) {
        SpatialTrace st;
        spatial = context_spatial_extract(h, *p.spatial, spatial_config(), trace != nullptr ? &st : nullptr);
        if (trace != nullptr) trace->spatial.push_back(std::move(st));
      }

      Tensor fused;
      if (fusion_override_) {
        const Tensor& t = temporal.defined() ? temporal : spatial;
        const Tensor& e = spatial.defined() ? spatial : temporal;
        weights = Tensor::full({batch, cfg_.n_vars, n}, *fusion_override_);
        fused = blend(t, e, weights);
      } else {
        switch (wiring_.fusion) {
          case FusionRule::entropy_guided: fused = fuse(temporal, spatial, entropy, &weights); break;
          case FusionRule::swapped: fused = fuse(spatial, temporal, entropy, &weights); break;
          case FusionRule::temporal_only: fused = temporal; break;
          case FusionRule::spatial_only: fused = spatial; break;
          case FusionRule::learned_scalar: {
            std::vector<std::ptrdiff_t> index(batch * cfg_.n_vars * n);
            for (std::size_t i = 0; i < index.size(); ++i) {
              index[i] = static_cast<std::ptrdiff_t>((i / n) % cfg_.n_vars);
            }
            weights = gather(sigmoid(p.fuse_theta), std::move(index), {batch, cfg_.n_vars, n});
            fused = blend(temporal, spatial, weights);
            break;
          }
          case FusionRule::learned_linear:
            weights = reshape(sigmoid(linear(concat_last(temporal, spatial), p.fuse_w, p.fuse_b)),
                              {batch, cfg_.n_vars, n});
            fused = blend(temporal, spatial, weights);
            break;
        }
      }
      if (trace != nullptr) trace->fusion_weights.push_back(weights);
      if (training_ && cfg_.dropout > 0.0) fused = dropout(fused);

      const Tensor mid = layer_norm_last(add(h, fused), p.ln1_gamma, p.ln1_beta);
      const Tensor ff = linear(silu(linear(mid, p.ff_w1, p.ff_b1)), p.ff_w2, p.ff_b2);
      h = layer_norm_last(add(mid, ff), p.ln2_gamma, p.ln2_beta);
    }

    Tensor out = project_output(h, head_, cfg_.revin ? &stats : nullptr);
    return unbatched ? reshape(out, {cfg_.n_vars, cfg_.horizon}) : out;
  }

  SpatialConfig spatial_config() const {
    SpatialConfig sc;
    sc.heads = cfg_.gcn_heads;
    sc.knn_k = cfg_.knn_k;
    sc.variant = wiring_.graph;
    sc.pool = cfg_.pool;
    sc.windows = wiring_.windows;
    return sc;
  }

 private:
  void register_param(std::string name, const Tensor& t) { params_.push_back({std::move(name), t}); }

  Tensor dropout(const Tensor& x) const {
    const double keep = 1.0 - cfg_.dropout;
    std::vector<double> mask(x.size());
    for (auto& m : mask) m = dropout_rng_.uniform() < keep ? 1.0 / keep : 0.0;
    return mul(x, Tensor(x.shape(), std::move(mask)));
  }

  ModelConfig cfg_;
  Wiring wiring_;
  std::vector<NamedTensor> params_;
  Tensor filter_re_, filter_im_;
  EmbeddingParams embedding_;
  std::vector<LayerParams> layers_;
  HeadParams head_;
  bool training_ = false;
  std::optional<double> fusion_override_;
  mutable Rng dropout_rng_;
};

/// Total learnable scalar count.
inline std::size_t count_params(const SeedModel& model) {
  std::size_t total = 0;
  for (const auto& p : model.parameters()) total += p.value.size();
  return total;
}

}  // namespace seed
