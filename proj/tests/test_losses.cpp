#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dpa/gradcheck.hpp"
#include "dpa/losses.hpp"
#include "dpa/oracles.hpp"
#include "support.hpp"

namespace dpa {
namespace {

constexpr double kEps = kDefaultQLossEpsilon;

PointModel single_point() {
  PointModel m;
  m.points = {{1, 0, 0}};
  return m;
}

TEST(QLoss, Examples) {
  const Quaternion q = normalized({0.1, 0.2, 0.3, 0.4});
  EXPECT_EQ(qloss({1, 0, 0, 0}, {1, 0, 0, 0}, kEps), std::log(kEps));
  EXPECT_EQ(qloss({0, 0, 1, 0}, {0, 0, -1, 0}, kEps), std::log(kEps));
  // Rounding in <q, q> for a general unit q.
  EXPECT_NEAR(qloss(q, q, kEps), std::log(kEps), 1e-11);
  EXPECT_NEAR(qloss(q, -q, kEps), std::log(kEps), 1e-11);
  EXPECT_DOUBLE_EQ(qloss({1, 0, 0, 0}, {0, 1, 0, 0}, kEps), std::log(kEps + 1));
}

TEST(QLoss, GradientExamples) {
  const Quaternion b{0, 0.6, 0.8, 0};
  const auto g = grad_qloss({1, 0, 0, 0}, b, kEps);
  EXPECT_FALSE(g.at_minimum);
  EXPECT_DOUBLE_EQ(g.grad[1], -0.6 / (kEps + 1));
  EXPECT_DOUBLE_EQ(g.grad[2], -0.8 / (kEps + 1));
  const auto m = grad_qloss(b, b, kEps);
  EXPECT_TRUE(m.at_minimum);
  for (double v : m.grad) EXPECT_EQ(v, 0.0);
}

TEST(QLoss, GradientMatchesFiniteDifferences) {
  CounterRng rng(41);
  for (int i = 0; i < 1000; ++i) {
    const Quaternion a = random_rotation(rng), b = random_rotation(rng);
    EXPECT_LT(qloss_gradient_error(a, b), kGradientTolerance);
  }
}

TEST(PLoss, Examples) {
  const Quaternion q = normalized({0.5, -0.1, 0.2, 0.7});
  CounterRng rng(42);
  const auto model = random_point_model(rng, 30);
  EXPECT_EQ(ploss(q, q, model), 0.0);
  EXPECT_NEAR(ploss({0, 0, 0, 1}, {1, 0, 0, 0}, single_point()), 2.0, 1e-15);
  EXPECT_THROW(ploss(q, q, PointModel{}), Error);
}

TEST(PLoss, MatchesExplicitDoubleLoop) {
  CounterRng rng(43);
  for (int i = 0; i < 50; ++i) {
    const Quaternion a = random_rotation(rng), b = random_rotation(rng);
    const auto model = random_point_model(rng, 25);
    const Mat3 ra = oracle::rotation_by_conjugation(a), rb = oracle::rotation_by_conjugation(b);
    double s = 0;
    for (const auto& x : model.points) {
      const double p[3] = {x.x, x.y, x.z};
      for (int r = 0; r < 3; ++r) {
        double d = 0;
        for (int c = 0; c < 3; ++c) d += (ra(r, c) - rb(r, c)) * p[c];
        s += d * d;
      }
    }
    EXPECT_NEAR(ploss(a, b, model), s / (2.0 * model.size()), 1e-14);
  }
}

TEST(PLoss, GradientMatchesFiniteDifferences) {
  CounterRng rng(44);
  for (int i = 0; i < 1000; ++i) {
    const Quaternion a = random_rotation(rng), b = random_rotation(rng);
    const auto model = random_point_model(rng, 10);
    EXPECT_LT(ploss_gradient_error(a, b, model), kGradientTolerance);
  }
}

TEST(PLoss, GradientVanishesAtMinimum) {
  CounterRng rng(45);
  for (int i = 0; i < 100; ++i) {
    const Quaternion q = random_rotation(rng);
    const auto g = tangent_project(grad_ploss(q, q, random_point_model(rng, 20)), q);
    EXPECT_LT(std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]), 1e-8);
  }
}

TEST(PLoss, InvariantUnderCommonRotation) {
  CounterRng rng(46);
  for (int i = 0; i < 100; ++i) {
    const Quaternion a = random_rotation(rng), b = random_rotation(rng), g = random_rotation(rng);
    const auto model = random_point_model(rng, 20);
    EXPECT_NEAR(ploss(g * a, g * b, model), ploss(a, b, model), 1e-9);
  }
}

TEST(SLoss, BoundedByPLoss) {
  CounterRng rng(47);
  for (int i = 0; i < 100; ++i) {
    const Quaternion a = random_rotation(rng), b = random_rotation(rng);
    const auto model = random_point_model(rng, 60);
    const double s = sloss(a, b, model);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, ploss(a, b, model));
  }
}

TEST(SLoss, ZeroAtTarget) {
  CounterRng rng(48);
  const Quaternion q = random_rotation(rng);
  EXPECT_EQ(sloss(q, q, random_point_model(rng, 50)), 0.0);
}

TEST(SLoss, RingSymmetryRotationsAreFree) {
  const auto ring = ring_model(0.05, 360);
  ASSERT_TRUE(ring.symmetric);
  const double bound = ring_chord_gap_bound(0.05, 360);
  CounterRng rng(49);
  for (int i = 0; i < 20; ++i) {
    const Quaternion turn = from_axis_angle({0, 0, 1}, rng.uniform(0.1, 2 * std::numbers::pi - 0.1));
    EXPECT_LE(sloss(turn, Quaternion::identity(), ring), bound);
    EXPECT_GE(ploss(turn, Quaternion::identity(), ring), 10 * bound);
  }
}

TEST(SLoss, GradientMatchesFiniteDifferencesAwayFromSwitches) {
  CounterRng rng(50);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const Quaternion a = random_rotation(rng), b = random_rotation(rng);
    const auto model = random_point_model(rng, 20, true);
    if (const auto e = sloss_gradient_error(a, b, model)) {
      EXPECT_LT(*e, kGradientTolerance);
      ++checked;
    }
  }
  EXPECT_GT(checked, 150);
}

TEST(SMLoss, Dispatch) {
  CounterRng rng(51);
  const Quaternion a = random_rotation(rng), b = random_rotation(rng);
  auto model = random_point_model(rng, 30);
  EXPECT_EQ(smloss(a, b, model), ploss(a, b, model));
  model.symmetric = true;
  EXPECT_EQ(smloss(a, b, model), sloss(a, b, model));
  EXPECT_EQ(smloss(a, a, model), 0.0);
}

TEST(Losses, AntipodalInvarianceIsExact) {
  CounterRng rng(52);
  for (int i = 0; i < 100; ++i) {
    const Quaternion a = random_rotation(rng), b = random_rotation(rng);
    auto model = random_point_model(rng, 15);
    EXPECT_EQ(qloss(-a, b), qloss(a, b));
    EXPECT_EQ(qloss(a, -b), qloss(a, b));
    EXPECT_EQ(ploss(-a, b, model), ploss(a, b, model));
    EXPECT_EQ(ploss(a, -b, model), ploss(a, b, model));
    EXPECT_EQ(sloss(-a, -b, model), sloss(a, b, model));
    model.symmetric = true;
    EXPECT_EQ(smloss(-a, b, model), smloss(a, b, model));
  }
}

TEST(CombinedLoss, Examples) {
  EXPECT_EQ(combined_loss(1, 1, 1, {1, 1, 1, 100}), 3.0);
  EXPECT_EQ(combined_loss(0, 0, 0.25, LossWeights::for_smloss()), 25.0);
  EXPECT_EQ(combined_loss(3, 4, 5, {0, 0, 0, 100}), 0.0);
  EXPECT_EQ(LossWeights::for_l2().rot, 1.0);
  EXPECT_EQ(LossWeights{}.depth_scale, 100.0);
}

TEST(AuxiliaryLosses, SegmentationAndTranslation) {
  const std::vector<double> probs{1.0, std::exp(-2.0)};
  EXPECT_NEAR(segmentation_nll(probs), 1.0, 1e-15);
  const std::vector<TranslationTarget> pred{{1, 0, 1.1}}, target{{0, 0, 1.0}};
  EXPECT_NEAR(translation_l2(pred, target), 1.0 + 100 * 0.01, 1e-12);
  EXPECT_THROW(translation_l2(pred, std::vector<TranslationTarget>{}), Error);
}

TEST(DenseLosses, PerPixelMeans) {
  DensePredictionMap dpm(2, 1, 2, kYcbIntrinsics);
  dpm.set_quaternion(0, 0, {2, 0, 0, 0});
  dpm.set_quaternion(0, 1, {0, 1, 0, 0});
  const Mask all(2, 1, true);
  EXPECT_NEAR(dense_qloss(dpm, all, Quaternion::identity()), 0.5 * (std::log(kEps) + std::log(kEps + 1)), 1e-12);
  EXPECT_NEAR(dense_l2(dpm, all, Quaternion::identity()), 0.5 * (1.0 + 2.0), 1e-12);
  EXPECT_THROW(dense_l2(dpm, Mask(2, 1), Quaternion::identity()), Error);
}

TEST(LossCheck, AllLossesPass) {
  for (const char* loss : {"qloss", "ploss", "sloss", "smloss"}) {
    const auto rep = run_loss_check(loss, 50, true, 7);
    EXPECT_TRUE(rep.passed) << loss << " grad " << rep.max_gradient_error << " prop " << rep.max_property_violation;
  }
  EXPECT_EQ(run_loss_check("smloss", 2, false, 1).branch, "sloss");
  EXPECT_THROW(run_loss_check("bogus", 1, false, 1), Error);
}

}  // namespace
}  // namespace dpa
