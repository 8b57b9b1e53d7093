#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seed/data.hpp"
#include "seed/errors.hpp"
#include "seed/model.hpp"
#include "seed/rng.hpp"
#include "seed/spectral.hpp"
#include "seed/tensor.hpp"

namespace seed {

/// Mean squared error over every entry.
inline Tensor loss_pred(const Tensor& y, const Tensor& yhat) {
  if (y.shape() != yhat.shape()) {
    throw ShapeError("loss_pred: target " + to_string(y.shape()) + " vs prediction " + to_string(yhat.shape()));
  }
  return mean(square(sub(yhat, y)));
}

/// Mean over variables of the squared difference between target and predicted spectral
/// entropies (unfiltered, constant rows counted as 0).
inline Tensor loss_spen(const Tensor& y, const Tensor& yhat) {
  if (y.shape() != yhat.shape()) {
    throw ShapeError("loss_spen: target " + to_string(y.shape()) + " vs prediction " + to_string(yhat.shape()));
  }
  Tensor target;
  {
    NoGradGuard no_grad;
    target = spectral_entropy_rows(y);
  }
  return mean(square(sub(spectral_entropy_rows(yhat), target)));
}

inline Tensor total_loss(const Tensor& y, const Tensor& yhat, double lambda) {
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  Tensor pred = loss_pred(y, yhat);
  if (lambda == 0.0) return pred;
  return add(pred, scale(loss_spen(y, yhat), lambda));
}

/// Adam with bias correction.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<Tensor> params, Options options) : params_(std::move(params)), opt_(options) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].has_grad()) continue;
      auto values = params_[i].data_mut();
      const auto grad = params_[i].grad();
      for (std::size_t j = 0; j < values.size(); ++j) {
        m_[i][j] = opt_.beta1 * m_[i][j] + (1.0 - opt_.beta1) * grad[j];
        v_[i][j] = opt_.beta2 * v_[i][j] + (1.0 - opt_.beta2) * grad[j] * grad[j];
        values[j] -= opt_.lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + opt_.eps);
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  Options opt_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double lambda = 0.1;
  std::size_t patience = 3;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (patience < 1) throw ConfigError("patience must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},     {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                     {"lambda", c.lambda},     {"patience", c.patience},     {"seed", c.seed}};
}

struct MetricsReport {
  double mse = 0.0;
  double mae = 0.0;
  std::vector<double> per_horizon_mse;
  std::size_t horizon = 0;
  std::size_t epochs = 0;
  std::size_t windows = 0;
  double seconds = 0.0;
};

/// Key order is fixed; `seconds` is the only non-deterministic field.
inline nlohmann::ordered_json metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["mse"] = r.mse;
  j["mae"] = r.mae;
  j["horizon"] = r.horizon;
  j["epochs"] = r.epochs;
  j["seconds"] = r.seconds;
  j["windows"] = r.windows;
  j["per_horizon_mse"] = r.per_horizon_mse;
  return j;
}

namespace detail {

struct ErrorAccumulator {
  double sq = 0.0, abs = 0.0;
  std::size_t count = 0;
  std::vector<double> per_step_sq;
  std::size_t per_step_count = 0;

  void add(const Tensor& y, const Tensor& yhat) {
    const std::size_t horizon = y.dim(-1);
    if (per_step_sq.empty()) per_step_sq.assign(horizon, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double e = yhat[i] - y[i];
      sq += e * e;
      abs += std::abs(e);
      per_step_sq[i % horizon] += e * e;
    }
    count += y.size();
    per_step_count += y.size() / horizon;
  }

  MetricsReport report() const {
    MetricsReport r;
    if (count == 0) return r;
    r.mse = sq / static_cast<double>(count);
    r.mae = abs / static_cast<double>(count);
    r.horizon = per_step_sq.size();
    for (double v : per_step_sq) r.per_horizon_mse.push_back(v / static_cast<double>(per_step_count));
    return r;
  }
};

}  // namespace detail

/// MSE/MAE of the model's forecasts over all windows of a segment (stride 1).
inline MetricsReport evaluate(const SeedModel& model, const Dataset& ds, const Segment& seg,
                              std::size_t batch_size = 64) {
  const auto& cfg = model.config();
  const auto starts = window_starts(seg, cfg.lookback, cfg.horizon);
  NoGradGuard no_grad;
  detail::ErrorAccumulator acc;
  for (std::size_t i = 0; i < starts.size(); i += batch_size) {
    const std::size_t n = std::min(batch_size, starts.size() - i);
    auto [x, y] = make_batch(ds, std::span(starts).subspan(i, n), cfg.lookback, cfg.horizon);
    acc.add(y, model.forward(x));
  }
  MetricsReport r = acc.report();
  r.windows = starts.size();
  return r;
}

/// Metrics of the forecast that repeats the last observed value across the horizon.
inline MetricsReport persistence_metrics(const Dataset& ds, const Segment& seg, std::size_t lookback,
                                         std::size_t horizon) {
  detail::ErrorAccumulator acc;
  const auto starts = window_starts(seg, lookback, horizon);
  for (std::size_t s : starts) {
    auto [x, y] = extract_window(ds, s, lookback, horizon);
    std::vector<double> pred(y.size());
    for (std::size_t c = 0; c < ds.cols; ++c) {
      for (std::size_t t = 0; t < horizon; ++t) pred[c * horizon + t] = x[c * lookback + lookback - 1];
    }
    acc.add(Tensor({ds.cols, horizon}, std::move(y)), Tensor({ds.cols, horizon}, std::move(pred)));
  }
  MetricsReport r = acc.report();
  r.windows = starts.size();
  return r;
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  MetricsReport test;
  std::vector<EpochLog> history;
  double best_val_mse = 0.0;
  std::size_t best_epoch = 0;  // 0 = initialization
};

/// Shuffled mini-batch Adam on stride-1 training windows, early stopping on validation
/// MSE; the best-validation parameters are restored before the test evaluation. The
/// model is trained in place.
inline TrainResult train(SeedModel& model, const Dataset& ds, const Splits& splits, const TrainConfig& tc,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  tc.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cfg = model.config();
  if (ds.cols != cfg.n_vars) {
    throw ConfigError("dataset has " + std::to_string(ds.cols) + " variables, model expects " +
                      std::to_string(cfg.n_vars));
  }
  auto starts = window_starts(splits.train, cfg.lookback, cfg.horizon);
  if (starts.empty()) throw DataError("training split has no windows");

  std::vector<Tensor> params;
  for (const auto& p : model.parameters()) params.push_back(p.value);
  Adam optimizer(params, {.lr = tc.learning_rate});
  Rng rng(tc.seed);

  auto snapshot = [&] {
    std::vector<std::vector<double>> s;
    for (const auto& p : params) s.emplace_back(p.data().begin(), p.data().end());
    return s;
  };

  TrainResult result;
  result.best_val_mse = evaluate(model, ds, splits.val).mse;
  auto best = snapshot();
  std::size_t stale = 0;
  std::size_t epochs_run = 0;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    model.set_training(true);
    rng.shuffle(std::span(starts));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < starts.size(); i += tc.batch_size) {
      const std::size_t n = std::min(tc.batch_size, starts.size() - i);
      auto [x, y] = make_batch(ds, std::span(starts).subspan(i, n), cfg.lookback, cfg.horizon);
      const std::string where = "epoch " + std::to_string(epoch) + ", step " + std::to_string(batches + 1);
      optimizer.zero_grad();
      Tensor loss;
      try {
        loss = total_loss(y, model.forward(x), tc.lambda);
        if (!std::isfinite(loss.item())) throw DivergenceError("non-finite loss at " + where);
        loss.backward();
      } catch (const NumericError& e) {
        throw DivergenceError(std::string("numeric failure at ") + where + ": " + e.what());
      }
      optimizer.step();
      loss_sum += loss.item();
      ++batches;
    }
    model.set_training(false);
    epochs_run = epoch;

    EpochLog log{epoch, loss_sum / static_cast<double>(batches), evaluate(model, ds, splits.val).mse};
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.val_mse < result.best_val_mse) {
      result.best_val_mse = log.val_mse;
      result.best_epoch = epoch;
      best = snapshot();
      stale = 0;
    } else if (++stale >= tc.patience) {
      break;
    }
  }
  optimizer.zero_grad();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].data_mut();
    std::copy(best[i].begin(), best[i].end(), values.begin());
  }

  result.test = evaluate(model, ds, splits.test);
  result.test.epochs = epochs_run;
  result.test.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace seed
