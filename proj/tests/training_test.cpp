#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "seed/errors.hpp"
#include "seed/grad_check.hpp"
#include "seed/spectral.hpp"
#include "seed/training.hpp"
#include "test_util.hpp"

using namespace seed;
using seed::testing::random_tensor;

namespace {

ModelConfig tiny_model(std::size_t vars) {
  ModelConfig c;
  c.n_vars = vars;
  c.lookback = 24;
  c.horizon = 12;
  c.patch_len = 6;
  c.d_model = 8;
  c.attn_heads = 2;
  c.gcn_heads = 2;
  c.n_layers = 1;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(LossPred, Examples) {
  const Tensor y({1, 2}, {1, 2});
  EXPECT_EQ(loss_pred(y, y).item(), 0.0);
  EXPECT_DOUBLE_EQ(loss_pred(y, Tensor::zeros({1, 2})).item(), 2.5);
  Rng rng(1);
  const Tensor a = random_tensor({3, 7}, rng, 1.0, false);
  const Tensor b = random_tensor({3, 7}, rng, 1.0, false);
  double acc = 0.0;
  for (std::size_t i = 0; i < 21; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(loss_pred(a, b).item(), acc / 21.0, 1e-12);
  EXPECT_THROW(loss_pred(a, Tensor::zeros({3, 6})), ShapeError);
}

TEST(LossSpen, Examples) {
  Rng rng(2);
  std::vector<double> tone(32);
  for (std::size_t t = 0; t < 32; ++t) tone[t] = std::sin(2.0 * std::numbers::pi * 4.0 * t / 32.0);
  const Tensor y({1, 32}, tone);
  const Tensor noise({1, 32}, rng.normal_vector(32, 1.0));
  EXPECT_EQ(loss_spen(y, y).item(), 0.0);
  const double l = loss_spen(y, noise).item();
  EXPECT_GT(l, 0.0);
  EXPECT_LE(l, 1.0);
  const double d = spectral_entropy(tone) - spectral_entropy(noise.data());
  EXPECT_NEAR(l, d * d, 1e-12);
  // A constant target counts as entropy 0.
  const Tensor flat({1, 32}, std::vector<double>(32, 1.0));
  EXPECT_NEAR(loss_spen(flat, noise).item(), std::pow(spectral_entropy(noise.data()), 2), 1e-12);
}

TEST(TotalLoss, LambdaZeroAndHandCase) {
  Rng rng(3);
  const Tensor y = random_tensor({2, 8}, rng, 1.0, false);
  const Tensor yhat = random_tensor({2, 8}, rng, 1.0, false);
  EXPECT_EQ(total_loss(y, yhat, 0.0).item(), loss_pred(y, yhat).item());

  const Tensor a({1, 2}, {1.0, -1.0});
  const Tensor b({1, 2}, {0.5, 0.25});
  // Mean-removed length-2 series put all power into bin 1: both entropies are 0.
  EXPECT_NEAR(total_loss(a, b, 1.0).item(), (0.25 + 1.5625) / 2.0, 1e-15);
  EXPECT_THROW(total_loss(a, b, -1.0), ConfigError);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  const Tensor y = random_tensor({2, 3, 10}, rng, 1.0, false);
  const Tensor yhat = random_tensor({2, 3, 10}, rng);
  EXPECT_LT(grad_check([&](const Tensor& p) { return total_loss(y, p, 0.7); }, yhat), 1e-5);
}

TEST(LossSpen, DrivesEntropyTowardTarget) {
  Rng rng(5);
  std::vector<double> tone(32);
  for (std::size_t t = 0; t < 32; ++t) tone[t] = std::sin(2.0 * std::numbers::pi * 3.0 * t / 32.0);
  const Tensor y({1, 32}, tone);
  Tensor yhat({1, 32}, rng.normal_vector(32, 1.0), true);
  Adam opt({yhat}, {.lr = 0.02});
  double prev = loss_spen(y, yhat).item();
  int decreases = 0;
  for (int step = 0; step < 30; ++step) {
    opt.zero_grad();
    const Tensor l = scale(loss_spen(y, yhat), 10.0);
    l.backward();
    opt.step();
    const double now = loss_spen(y, yhat).item();
    decreases += now < prev;
    prev = now;
  }
  EXPECT_GE(decreases, 28);
  EXPECT_LT(prev, 0.5 * std::pow(spectral_entropy(tone) - 1.0, 2));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w({2}, {1.0, -2.0}, true);
  Adam opt({w}, {.lr = 0.1});
  sum(square(w)).backward();
  opt.step();
  EXPECT_NEAR(w[0], 0.9, 1e-9);
  EXPECT_NEAR(w[1], -1.9, 1e-9);
}

TEST(Evaluate, PerfectAndConstantErrorAndOracle) {
  Dataset ds;
  ds.cols = 1;
  ds.rows = 7;
  ds.values = {0, 1, 2, 3, 4, 5, 6};
  const Segment seg{0, 0, 7};
  // Persistence on a ramp: constant error of 1, 2 per horizon step.
  const auto r = persistence_metrics(ds, seg, 3, 2);
  EXPECT_EQ(r.windows, 3u);
  EXPECT_DOUBLE_EQ(r.mse, (1.0 + 4.0) / 2.0);
  EXPECT_DOUBLE_EQ(r.mae, 1.5);
  EXPECT_EQ(r.per_horizon_mse, (std::vector<double>{1.0, 4.0}));

  ds.values = {2, 2, 2, 2, 2, 2, 2};
  const auto perfect = persistence_metrics(ds, seg, 3, 2);
  EXPECT_EQ(perfect.mse, 0.0);
  EXPECT_EQ(perfect.mae, 0.0);
}

TEST(Evaluate, MatchesDoubleLoopOracle) {
  const auto ds = make_synthetic_dataset({.kind = SynthKind::mixed, .length = 37, .channels = 2, .seed = 1});
  const auto cfg = tiny_model(2);
  const SeedModel model(cfg);
  const Segment seg{0, 0, 37};  // 37 - 24 - 12 + 1 = 2 windows
  const auto r = evaluate(model, ds, seg);
  EXPECT_EQ(r.windows, 2u);
  double sq = 0.0, ab = 0.0;
  for (std::size_t s = 0; s < 2; ++s) {
    auto [x, y] = extract_window(ds, s, 24, 12);
    const Tensor pred = model.forward(Tensor({2, 24}, x));
    for (std::size_t i = 0; i < y.size(); ++i) {
      sq += (pred[i] - y[i]) * (pred[i] - y[i]);
      ab += std::abs(pred[i] - y[i]);
    }
  }
  EXPECT_NEAR(r.mse, sq / 48.0, 1e-10);
  EXPECT_NEAR(r.mae, ab / 48.0, 1e-10);
  const auto j = metrics_json(r);
  for (const char* key : {"mse", "mae", "horizon", "epochs", "seconds"}) EXPECT_TRUE(j.contains(key)) << key;
}

class TrainingLoop : public ::testing::Test {
 protected:
  ModelConfig cfg = tiny_model(2);
  Dataset ds = make_synthetic_dataset({.kind = SynthKind::sine, .length = 400, .channels = 2, .seed = 9});
  Splits splits = split(ds, SplitRatio::parse("6:2:2"), cfg.lookback, cfg.horizon);
};

TEST_F(TrainingLoop, ZeroEpochsEvaluatesInitialModel) {
  SeedModel model(cfg);
  const auto before = evaluate(model, ds, splits.test);
  const auto result = train(model, ds, splits, {.epochs = 0});
  EXPECT_EQ(result.test.epochs, 0u);
  EXPECT_EQ(result.test.mse, before.mse);
  EXPECT_TRUE(result.history.empty());
}

TEST_F(TrainingLoop, LearnsSinesDeterministicallyAndKeepsBestValidation) {
  SeedModel a(cfg), b(cfg);
  const TrainConfig tc{.epochs = 8, .batch_size = 16, .learning_rate = 3e-3, .patience = 8, .seed = 4};
  const auto ra = train(a, ds, splits, tc);
  const auto rb = train(b, ds, splits, tc);
  EXPECT_EQ(ra.test.mse, rb.test.mse);
  EXPECT_EQ(ra.test.mae, rb.test.mae);
  const auto persistence = persistence_metrics(ds, splits.test, cfg.lookback, cfg.horizon);
  EXPECT_LT(ra.test.mse, persistence.mse);
  ASSERT_GE(ra.history.size(), 5u);
  double first = ra.history[0].train_loss;
  EXPECT_LT(ra.history[4].train_loss, first);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& log : ra.history) best = std::min(best, log.val_mse);
  EXPECT_LE(ra.best_val_mse, best);
  EXPECT_EQ(evaluate(a, ds, splits.val).mse, ra.best_val_mse);
}

TEST_F(TrainingLoop, ErrorsAreTyped) {
  SeedModel wrong(tiny_model(3));
  EXPECT_THROW(train(wrong, ds, splits, {.epochs = 1}), ConfigError);
  SeedModel model(cfg);
  EXPECT_THROW(train(model, ds, splits, {.epochs = 1, .batch_size = 0}), ConfigError);
  Dataset huge = ds;
  for (auto& v : huge.values) v *= 1e200;
  EXPECT_THROW(train(model, huge, splits, {.epochs = 1}), DivergenceError);
}
