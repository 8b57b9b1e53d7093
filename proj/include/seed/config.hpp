#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "seed/errors.hpp"
#include "seed/spatial.hpp"

namespace seed {

/// Architecture variants: the full model plus every ablation.
enum class Variant { full, wo_tattn, wo_cse, re_s1, re_s2, re_f1, re_f2, re_f3, re_c1, re_c2 };

inline constexpr std::array<Variant, 10> kAllVariants = {Variant::full,  Variant::wo_tattn, Variant::wo_cse,
                                                          Variant::re_s1, Variant::re_s2,    Variant::re_f1,
                                                          Variant::re_f2, Variant::re_f3,    Variant::re_c1,
                                                          Variant::re_c2};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::wo_tattn: return "wo_tattn";
    case Variant::wo_cse: return "wo_cse";
    case Variant::re_s1: return "re_s1";
    case Variant::re_s2: return "re_s2";
    case Variant::re_f1: return "re_f1";
    case Variant::re_f2: return "re_f2";
    case Variant::re_f3: return "re_f3";
    case Variant::re_c1: return "re_c1";
    case Variant::re_c2: return "re_c2";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + std::string(s) + "'");
}

inline std::string to_string(GraphVariant g) {
  switch (g) {
    case GraphVariant::tanh_signed: return "tanh";
    case GraphVariant::softmax_signed: return "softmax";
    case GraphVariant::plain_softmax: return "plain_softmax";
  }
  return "?";
}

inline GraphVariant parse_graph_variant(std::string_view s) {
  if (s == "tanh") return GraphVariant::tanh_signed;
  if (s == "softmax") return GraphVariant::softmax_signed;
  if (s == "plain_softmax") return GraphVariant::plain_softmax;
  throw ConfigError("unknown graph variant '" + std::string(s) + "' (expected tanh|softmax)");
}

inline std::string to_string(PoolMode p) { return p == PoolMode::mean ? "mean" : "max"; }

inline PoolMode parse_pool(std::string_view s) {
  if (s == "mean") return PoolMode::mean;
  if (s == "max") return PoolMode::max;
  throw ConfigError("unknown pool mode '" + std::string(s) + "' (expected mean|max)");
}

struct ModelConfig {
  std::size_t n_vars = 1;
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t patch_len = 16;
  std::size_t d_model = 64;
  std::size_t attn_heads = 4;
  std::size_t gcn_heads = 4;
  std::size_t knn_k = 0;  // 0 = max(2, ceil(n/2))
  GraphVariant graph_variant = GraphVariant::tanh_signed;
  PoolMode pool = PoolMode::mean;
  double lambda = 0.1;
  std::size_t n_layers = 2;
  bool revin = true;
  bool detach_entropy = true;
  bool per_head_q = false;
  Activation gcn_activation = Activation::silu;
  double dropout = 0.0;
  Variant variant = Variant::full;
  std::uint64_t seed = 0;

  std::size_t n_patches() const { return (lookback + patch_len - 1) / patch_len; }

  void validate() const {
    auto require = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError(what);
    };
    require(n_vars >= 1, "n_vars must be >= 1");
    require(lookback >= 2, "lookback must be >= 2");
    require(horizon >= 2, "horizon must be >= 2");
    require(patch_len >= 1 && patch_len <= lookback, "patch_len must lie in [1, lookback]");
    require(d_model >= 1, "d_model must be >= 1");
    require(attn_heads >= 1 && d_model % attn_heads == 0, "attn_heads must divide d_model");
    require(gcn_heads >= 1 && d_model % gcn_heads == 0, "gcn_heads must divide d_model");
    require(lambda >= 0.0, "lambda must be >= 0");
    require(n_layers >= 1, "n_layers must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    const bool uses_local_windows = variant != Variant::wo_cse && variant != Variant::re_c1 && variant != Variant::re_c2;
    require(!uses_local_windows || n_patches() >= 2,
            "local windows need at least 2 patches; lookback/patch_len too coarse");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_vars", c.n_vars},
                     {"lookback", c.lookback},
                     {"horizon", c.horizon},
                     {"patch_len", c.patch_len},
                     {"d_model", c.d_model},
                     {"attn_heads", c.attn_heads},
                     {"gcn_heads", c.gcn_heads},
                     {"knn_k", c.knn_k},
                     {"graph_variant", to_string(c.graph_variant)},
                     {"pool", to_string(c.pool)},
                     {"lambda", c.lambda},
                     {"n_layers", c.n_layers},
                     {"revin", c.revin},
                     {"detach_entropy", c.detach_entropy},
                     {"per_head_q", c.per_head_q},
                     {"gcn_activation", c.gcn_activation == Activation::silu ? "silu" : "identity"},
                     {"dropout", c.dropout},
                     {"variant", to_string(c.variant)},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.n_vars = j.value("n_vars", d.n_vars);
  c.lookback = j.value("lookback", d.lookback);
  c.horizon = j.value("horizon", d.horizon);
  c.patch_len = j.value("patch_len", d.patch_len);
  c.d_model = j.value("d_model", d.d_model);
  c.attn_heads = j.value("attn_heads", d.attn_heads);
  c.gcn_heads = j.value("gcn_heads", d.gcn_heads);
  c.knn_k = j.value("knn_k", d.knn_k);
  c.graph_variant = parse_graph_variant(j.value("graph_variant", std::string("tanh")));
  c.pool = parse_pool(j.value("pool", std::string("mean")));
  c.lambda = j.value("lambda", d.lambda);
  c.n_layers = j.value("n_layers", d.n_layers);
  c.revin = j.value("revin", d.revin);
  c.detach_entropy = j.value("detach_entropy", d.detach_entropy);
  c.per_head_q = j.value("per_head_q", d.per_head_q);
  const auto act = j.value("gcn_activation", std::string("silu"));
  if (act != "silu" && act != "identity") throw ConfigError("unknown gcn_activation '" + act + "'");
  c.gcn_activation = act == "silu" ? Activation::silu : Activation::identity;
  c.dropout = j.value("dropout", d.dropout);
  c.variant = parse_variant(j.value("variant", std::string("full")));
  c.seed = j.value("seed", d.seed);
}

}  // namespace seed
