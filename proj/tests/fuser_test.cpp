#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "seed/errors.hpp"
#include "seed/fuser.hpp"
#include "seed/grad_check.hpp"
#include "test_util.hpp"

using namespace seed;
using seed::testing::random_tensor;

TEST(PatchSimilarity, ParallelOppositeOrthogonalZero) {
  const Tensor t({1, 4, 2}, {1, 2, 1, 2, 1, 0, 0, 0});
  const Tensor e({1, 4, 2}, {2, 4, -1, -2, 0, 3, 1, 1});
  const Tensor s = patch_similarity(t, e);
  ASSERT_EQ(s.shape(), (Shape{1, 4}));
  EXPECT_NEAR(s[0], 1.0, 1e-15);
  EXPECT_NEAR(s[1], 0.0, 1e-15);
  EXPECT_NEAR(s[2], 0.5, 1e-15);
  EXPECT_EQ(s[3], 0.5);
  EXPECT_THROW(patch_similarity(t, Tensor::zeros({1, 4, 3})), ShapeError);
}

TEST(Fuse, EntropyExtremes) {
  Rng rng(1);
  const Tensor t = random_tensor({2, 3, 4}, rng, 1.0, false);
  const Tensor e = random_tensor({2, 3, 4}, rng, 1.0, false);
  Tensor w;
  const Tensor f = fuse(t, e, EntropyVector{{1.0, 0.3}});
  const Tensor f2 = fuse(t, e, Tensor({2}, {1.0, 0.3}), &w);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(f[i], e[i]);
  for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(w[n], 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(f[i], f2[i]);

  const Tensor neg = scale(t, -1.0);
  const Tensor g = fuse(t, neg, EntropyVector{{0.0, 0.0}});
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], t[i], 1e-15);
}

TEST(Fuse, QuarterWeightHandCase) {
  // Orthogonal T and E give Sim = 0.5; with SpEn = 0.5, w = 0.25.
  const Tensor t({1, 1, 2}, {2.0, 0.0});
  const Tensor e({1, 1, 2}, {0.0, -4.0});
  Tensor w;
  const Tensor f = fuse(t, e, Tensor({1}, {0.5}), &w);
  EXPECT_NEAR(w[0], 0.25, 1e-15);
  EXPECT_NEAR(f[0], 0.25 * 2.0 + 0.75 * 0.0, 1e-15);
  EXPECT_NEAR(f[1], 0.25 * 0.0 + 0.75 * -4.0, 1e-15);
}

TEST(Fuse, WeightsBoundedBlendBetweenAndMonotone) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor t = random_tensor({3, 4, 5}, rng, 1.0, false);
    const Tensor e = random_tensor({3, 4, 5}, rng, 1.0, false);
    const Tensor entropy({3}, {rng.uniform(), rng.uniform(), rng.uniform()});
    Tensor w;
    const Tensor f = fuse(t, e, entropy, &w);
    for (double v : w.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
      EXPECT_GE(f[i], std::min(t[i], e[i]) - 1e-12);
      EXPECT_LE(f[i], std::max(t[i], e[i]) + 1e-12);
    }
    const Tensor sim = patch_similarity(t, e);
    const Tensor lower = fusion_weights(sim, Tensor({3}, {0.1, 0.2, 0.3}));
    const Tensor higher = fusion_weights(sim, Tensor({3}, {0.2, 0.5, 0.9}));
    for (std::size_t i = 0; i < lower.size(); ++i) EXPECT_LE(higher[i], lower[i]);
  }
}

TEST(Fuse, ShapeErrors) {
  EXPECT_THROW(fuse(Tensor::zeros({2, 3, 4}), Tensor::zeros({2, 3, 4}), Tensor::zeros({3})), ShapeError);
  EXPECT_THROW(fuse(Tensor::zeros({2, 3, 4}), Tensor::zeros({2, 3, 5}), Tensor::zeros({2})), ShapeError);
}

TEST(Fuse, GradientCheck) {
  Rng rng(3);
  const Tensor t = random_tensor({2, 3, 4}, rng);
  const Tensor e = random_tensor({2, 3, 4}, rng);
  const Tensor entropy({2}, {0.3, 0.8}, true);
  const Tensor w = random_tensor({2, 3, 4}, rng, 1.0, false);
  const auto loss = [&] { return sum(mul(fuse(t, e, entropy), w)); };
  for (double err : gradient_errors(loss, {t, e, entropy})) EXPECT_LT(err, 1e-5);
}
