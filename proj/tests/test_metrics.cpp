#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "dpa/metrics.hpp"
#include "dpa/oracles.hpp"
#include "dpa/synth.hpp"

namespace dpa {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

PointModel single_point() {
  PointModel m;
  m.points = {{1, 0, 0}};
  return m;
}

PoseEstimate pose(const Quaternion& q, const Vec3& t, int cls = 1, double conf = 1) { return {cls, q, t, conf}; }

/// Exact integral of the empirical CDF step function, walking sorted distances.
double oracle_auc(std::vector<double> d, double T = 0.1) {
  std::sort(d.begin(), d.end());
  const double n = static_cast<double>(d.size());
  double area = 0, prev = 0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double x = std::min(d[k], T);
    area += (static_cast<double>(k) / n) * (x - prev);
    prev = x;
  }
  area += (T - prev);  // the curve is 1 past the last distance
  return 100.0 * area / T;
}

double trapezoid_auc(const std::vector<double>& d, int steps = 10000) {
  std::vector<double> thresholds(steps + 1);
  for (int i = 0; i <= steps; ++i) thresholds[i] = kAucMaxThreshold * i / steps;
  const auto curve = accuracy_curve(d, thresholds);
  double s = 0;
  for (int i = 0; i < steps; ++i) s += 0.5 * (curve[i] + curve[i + 1]);
  return 100.0 * s / steps;
}

TEST(Add, Examples) {
  const auto p = pose(normalized({0.3, 0.1, -0.5, 0.8}), {0.1, 0.2, 0.9});
  CounterRng rng(61);
  const auto model = make_model(ModelShape::Box, {0.1, 0.05, 0.08}, 100, 3);
  EXPECT_EQ(add_metric(p, p, model), 0.0);
  auto shifted = p;
  shifted.t += Vec3{0.03, 0, 0.04};
  EXPECT_NEAR(add_metric(shifted, p, model), 0.05, 1e-15);
  EXPECT_NEAR(add_metric(pose({0, 0, 0, 1}, {}), pose({1, 0, 0, 0}, {}), single_point()), 2.0, 1e-15);
  EXPECT_THROW(add_metric(pose({1, 0, 0, 0}, {}, 1), pose({1, 0, 0, 0}, {}, 2), model), Error);
  EXPECT_THROW(add_metric(p, p, PointModel{}), Error);
}

TEST(AddS, ExamplesAndBound) {
  const auto ring = make_model(ModelShape::Ring, {0.05, 0, 0}, 360, 0);
  const auto gt = pose(Quaternion::identity(), {0, 0, 1});
  const auto turned = pose(from_axis_angle({0, 0, 1}, 0.7), {0, 0, 1});
  EXPECT_EQ(adds_metric(gt, gt, ring), 0.0);
  EXPECT_LE(adds_metric(turned, gt, ring), std::numbers::pi * 0.05 / 360);
  EXPECT_GT(add_metric(turned, gt, ring), 0.01);

  CounterRng rng(62);
  const auto box = make_model(ModelShape::Box, {0.1, 0.06, 0.04}, 200, 1);
  for (int i = 0; i < 100; ++i) {
    const auto a = pose(random_rotation(rng), {rng.uniform(-0.1, 0.1), 0, 1});
    const auto b = pose(random_rotation(rng), {0, rng.uniform(-0.1, 0.1), 1});
    EXPECT_LE(adds_metric(a, b, box), add_metric(a, b, box));
  }
}

TEST(AccuracyCurve, Examples) {
  const std::vector<double> one{0.05};
  EXPECT_EQ(accuracy_curve(one, std::vector<double>{0.04, 0.06}), (std::vector<double>{0, 1}));
  EXPECT_EQ(accuracy_curve(one, std::vector<double>{0.05}), (std::vector<double>{0}));  // strict
  const std::vector<double> zeros(5, 0.0);
  EXPECT_EQ(accuracy_curve(zeros, std::vector<double>{0.01, 0.1}), (std::vector<double>{1, 1}));
  EXPECT_THROW(accuracy_curve(std::vector<double>{}, one), Error);
  EXPECT_THROW(accuracy_curve(one, std::vector<double>{0.1, 0.05}), Error);
}

TEST(AccuracyCurve, UniformGridFollowsTheDiagonal) {
  const int n = 200;
  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) d[i] = 0.1 * i / (n - 1);
  std::vector<double> th(1001);
  for (int i = 0; i <= 1000; ++i) th[i] = 0.1 * i / 1000;
  const auto curve = accuracy_curve(d, th);
  for (int i = 0; i <= 1000; ++i) EXPECT_LE(std::abs(curve[i] - th[i] / 0.1), 1.0 / n + 1e-12);
}

TEST(Auc, ClosedForms) {
  EXPECT_EQ(auc(std::vector<double>(7, 0.0)), 100.0);
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, kInf}), 0.0);
  EXPECT_EQ(auc(std::vector<double>(4, 0.025)), 75.0);
  EXPECT_EQ(auc(std::vector<double>{0.025}), 75.0);
  EXPECT_EQ(auc(std::vector<double>{0.0, kInf}), 50.0);
  EXPECT_THROW(auc(std::vector<double>{}), Error);
}

TEST(Auc, AgreesWithTrapezoidAndExactOracle) {
  CounterRng rng(63);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d(1 + rng.below(300));
    for (double& v : d) v = rng.uniform() < 0.1 ? kInf : std::abs(rng.normal(0.0, rng.uniform(0.005, 0.15)));
    EXPECT_NEAR(auc(d), trapezoid_auc(d), 0.05);
    EXPECT_NEAR(auc(d), oracle_auc(d), 1e-9);
  }
}

TEST(Auc, PermutationInvariantAndMonotone) {
  CounterRng rng(64);
  std::vector<double> d(50);
  for (double& v : d) v = rng.uniform(0, 0.15);
  const double base = auc(d);
  auto p = d;
  std::reverse(p.begin(), p.end());
  EXPECT_NEAR(auc(p), base, 1e-12);
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto bigger = d;
    bigger[i] += 0.01;
    EXPECT_LE(auc(bigger), base + 1e-12);
  }
}

std::map<int, PointModel> model_map(const std::vector<PointModel>& models) {
  std::map<int, PointModel> out;
  for (const auto& m : models) out[m.class_id] = m;
  return out;
}

TEST(Evaluate, PerfectPredictions) {
  const auto models = default_models(1);
  std::vector<PoseRecord> gts;
  for (int s = 0; s < 5; ++s) {
    const auto scene = sample_scene(SceneConfig{.models = models}, s);
    const auto g = scene_ground_truth(scene, s);
    gts.insert(gts.end(), g.begin(), g.end());
  }
  const auto rep = evaluate_scene_set(gts, gts, model_map(models), {3, 5});
  EXPECT_EQ(rep.total.auc_p, 100.0);
  EXPECT_EQ(rep.total.auc_s, 100.0);
  EXPECT_EQ(rep.total.translation_error, 0.0);
  EXPECT_EQ(rep.total.matched, gts.size());
  for (const auto& c : rep.classes) {
    EXPECT_EQ(c.auc_p, 100.0);
    EXPECT_EQ(c.symmetric, c.class_id == 3 || c.class_id == 5);
  }
}

TEST(Evaluate, MissingPredictionScoresInfinity) {
  const auto models = default_models(1);
  std::vector<PoseRecord> gts{{0, pose(Quaternion::identity(), {0, 0, 1}, 1)}, {1, pose(Quaternion::identity(), {0, 0, 1}, 1)}};
  const std::vector<PoseRecord> preds{gts[0]};
  const auto rep = evaluate_scene_set(preds, gts, model_map(models), {});
  EXPECT_EQ(rep.total.auc_p, 50.0);
  EXPECT_EQ(rep.total.matched, 1u);
  const auto d = instance_distances(preds, gts, model_map(models));
  EXPECT_EQ(d[1].add, kInf);
}

TEST(Evaluate, TranslationOffsetGivesClosedFormAuc) {
  const auto models = default_models(1);
  std::vector<PoseRecord> gts, preds;
  CounterRng rng(65);
  for (int s = 0; s < 10; ++s) {
    auto p = pose(random_rotation(rng), {0, 0, 1}, 1);
    gts.push_back({s, p});
    p.t += Vec3{0.0, 0.05, 0.0};
    preds.push_back({s, p});
  }
  const auto rep = evaluate_scene_set(preds, gts, model_map(models), {});
  EXPECT_NEAR(rep.total.auc_p, 50.0, 1e-9);
  EXPECT_EQ(rep.total.rot_auc_p, 100.0);
  EXPECT_NEAR(rep.total.translation_error, 0.05, 1e-15);
}

TEST(Evaluate, MissingModelAndMatching) {
  const std::vector<PoseRecord> gts{{0, pose(Quaternion::identity(), {0, 0, 1}, 9)}};
  try {
    evaluate_scene_set(gts, gts, model_map(default_models(1)), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingModel);
  }
  // Two instances of one class: the confident prediction takes the nearer GT.
  const std::vector<PoseRecord> two{{0, pose(Quaternion::identity(), {0, 0, 1}, 1)},
                                    {0, pose(Quaternion::identity(), {0.5, 0, 1}, 1)}};
  const std::vector<PoseRecord> p{{0, pose(Quaternion::identity(), {0.45, 0, 1}, 1, 0.2)},
                                  {0, pose(Quaternion::identity(), {0.48, 0, 1}, 1, 0.9)}};
  const auto assigned = match_predictions(p, two);
  EXPECT_EQ(assigned[1], 1);
  EXPECT_EQ(assigned[0], 0);
}

TEST(Evaluate, MatchesFlatReimplementation) {
  const auto models = default_models(2);
  const auto mm = model_map(models);
  std::vector<PoseRecord> gts, preds;
  for (int s = 0; s < 50; ++s) {
    const auto scene = sample_scene(SceneConfig{.models = models}, 100 + s);
    CounterRng rng(66, s);
    for (auto g : scene_ground_truth(scene, s)) {
      gts.push_back(g);
      if (rng.uniform() < 0.1) continue;
      g.pose.q = random_rotation_of_angle(rng, std::abs(rng.normal(0, 0.3))) * g.pose.q;
      g.pose.t += Vec3{rng.normal(0, 0.01), rng.normal(0, 0.01), rng.normal(0, 0.03)};
      preds.push_back(g);
    }
  }
  const auto rep = evaluate_scene_set(preds, gts, mm, {3, 5});

  // One instance per (scene, class) here, so matching is a lookup.
  std::map<std::pair<std::int64_t, int>, PoseEstimate> by_key;
  for (const auto& p : preds) by_key[{p.scene_id, p.pose.class_id}] = p.pose;
  std::vector<double> add, adds, sym_s, nonsym_p;
  double terr = 0;
  int matched = 0;
  for (const auto& g : gts) {
    const auto it = by_key.find({g.scene_id, g.pose.class_id});
    double a = kInf, s = kInf;
    if (it != by_key.end()) {
      const Mat3 rp = oracle::rotation_by_conjugation(it->second.q), rg = oracle::rotation_by_conjugation(g.pose.q);
      const auto& pts = mm.at(g.pose.class_id).points;
      double sa = 0, ss = 0;
      for (const auto& x : pts) {
        const Vec3 xp = rp * x + it->second.t;
        sa += norm(xp - (rg * x + g.pose.t));
        double best = kInf;
        for (const auto& y : pts) best = std::min(best, norm(xp - (rg * y + g.pose.t)));
        ss += best;
      }
      a = sa / pts.size();
      s = ss / pts.size();
      terr += norm(it->second.t - g.pose.t);
      ++matched;
    }
    add.push_back(a);
    adds.push_back(s);
    const bool sym = g.pose.class_id == 3 || g.pose.class_id == 5;
    (sym ? sym_s : nonsym_p).push_back(sym ? s : a);
  }
  EXPECT_NEAR(rep.total.auc_p, oracle_auc(add), 1e-6);
  EXPECT_NEAR(rep.total.auc_s, oracle_auc(adds), 1e-6);
  EXPECT_NEAR(rep.nonsym_auc_p, oracle_auc(nonsym_p), 1e-6);
  EXPECT_NEAR(rep.sym_auc_s, oracle_auc(sym_s), 1e-6);
  EXPECT_NEAR(rep.total.translation_error, terr / matched, 1e-12);
  EXPECT_EQ(rep.total.matched, static_cast<std::size_t>(matched));
  EXPECT_GE(rep.total.auc_s, rep.total.auc_p);
  for (const auto& c : rep.classes) EXPECT_GE(c.auc_s, c.auc_p);
}

TEST(Format, RealsAndKvLines) {
  EXPECT_EQ(format_real(100.0), "100.0");
  EXPECT_EQ(format_real(0.25), "0.25");
  EXPECT_EQ(format_real(75.0), "75.0");
  EXPECT_EQ(format_real(std::nan("")), "nan");
  const auto models = default_models(1);
  const std::vector<PoseRecord> gts{{0, pose(Quaternion::identity(), {0, 0, 1}, 1)}};
  const auto kv = format_report_kv(evaluate_scene_set(gts, gts, model_map(models), {}));
  EXPECT_NE(kv.find("class=box_a auc_p=100.0 auc_s=100.0 n=1"), std::string::npos);
  EXPECT_NE(kv.find("class=ALL auc_p=100.0 auc_s=100.0"), std::string::npos);
  EXPECT_NE(kv.find("summary nonsym_auc_p=100.0 sym_auc_s=nan"), std::string::npos);
}

}  // namespace
}  // namespace dpa
