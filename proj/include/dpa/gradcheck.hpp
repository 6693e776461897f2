#pragma once

// Finite-difference gradient checks and property sweeps for the orientation
// losses, shared by the test suites and the losscheck command.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>

#include "dpa/geometry.hpp"
#include "dpa/losses.hpp"
#include "dpa/point_model.hpp"
#include "dpa/rng.hpp"
#include "dpa/synth.hpp"

namespace dpa {

inline constexpr double kFiniteDifferenceStep = 1e-6;
inline constexpr double kGradientTolerance = 1e-4;

/// Central differences of f along the four raw quaternion components.
template <typename F>
Vec4 central_difference(F&& f, const Quaternion& q, double h = kFiniteDifferenceStep) {
  Vec4 g{};
  for (int k = 0; k < 4; ++k) {
    auto a = q.to_array(), b = q.to_array();
    a[k] += h;
    b[k] -= h;
    g[k] = (f(Quaternion::from_array(a)) - f(Quaternion::from_array(b))) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_error(const Vec4& a, const Vec4& b) {
  double diff = 0, na = 0, nb = 0;
  for (int k = 0; k < 4; ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale > 0 ? std::sqrt(diff) / scale : 0.0;
}

/// Random point cloud of `n` points inside a box of half-extent up to 0.1 m.
inline PointModel random_point_model(CounterRng& rng, int n, bool symmetric = false) {
  PointModel m;
  m.symmetric = symmetric;
  m.name = "random";
  const Vec3 half{rng.uniform(0.02, 0.1), rng.uniform(0.02, 0.1), rng.uniform(0.02, 0.1)};
  for (int i = 0; i < n; ++i)
    m.points.push_back({rng.uniform(-half.x, half.x), rng.uniform(-half.y, half.y), rng.uniform(-half.z, half.z)});
  return m;
}

/// n equally spaced points on a circle of radius r in the xy-plane.
inline PointModel ring_model(double r, int n) { return make_model(ModelShape::Ring, {r, 0, 0}, n, 0, 0, "ring"); }

/// Upper bound on sloss for a ring under any rotation about its axis: every
/// rotated point lies within half a sample gap (arc pi r / m) of a sample.
inline double ring_chord_gap_bound(double r, int n) {
  const double gap = std::numbers::pi * r / n;
  return gap * gap / 2.0;
}

/// Difference between the analytic qloss gradient and central differences.
inline double qloss_gradient_error(const Quaternion& a, const Quaternion& b, double eps = kDefaultQLossEpsilon) {
  const auto fd = central_difference([&](const Quaternion& x) { return qloss(x, b, eps); }, a);
  return relative_error(grad_qloss(a, b, eps).grad, fd);
}

/// Difference between the tangent-projected ploss gradient and central
/// differences of ploss (which renormalizes, so its gradient is tangential).
inline double ploss_gradient_error(const Quaternion& a, const Quaternion& b, const PointModel& m) {
  const auto fd = central_difference([&](const Quaternion& x) { return ploss(x, b, m); }, a);
  return relative_error(tangent_project(grad_ploss(a, b, m), a), fd);
}

/// As ploss_gradient_error for sloss; nullopt when a nearest-point
/// correspondence changes within the difference stencil.
inline std::optional<double> sloss_gradient_error(const Quaternion& a, const Quaternion& b, const PointModel& m) {
  const auto target = transform_points(m, quat_to_rotmat(b));
  const auto base = nearest_correspondences(transform_points(m, quat_to_rotmat(a)), target);
  for (int k = 0; k < 4; ++k)
    for (double s : {-1.0, 1.0}) {
      auto p = a.to_array();
      p[k] += s * kFiniteDifferenceStep;
      if (nearest_correspondences(transform_points(m, quat_to_rotmat(Quaternion::from_array(p))), target) != base)
        return std::nullopt;
    }
  const auto fd = central_difference([&](const Quaternion& x) { return sloss(x, b, m); }, a);
  return relative_error(tangent_project(grad_sloss(a, b, m), a), fd);
}

struct LossCheckReport {
  std::string loss;
  std::size_t trials = 0;
  std::size_t gradient_checks = 0;
  double max_gradient_error = 0;  // relative
  double max_property_violation = 0;
  std::string branch;  // smloss dispatch taken on the symmetric ring
  bool passed = true;
};

/// Runs the example and property suite of one loss (qloss, ploss, sloss or
/// smloss) on `trials` random instances. Gradient checks are included when
/// `grad_check` is set and the loss has an analytic gradient.
inline LossCheckReport run_loss_check(const std::string& loss, std::size_t trials, bool grad_check, std::uint64_t seed) {
  if (loss != "qloss" && loss != "ploss" && loss != "sloss" && loss != "smloss")
    throw Error(ErrorCode::BadParams, "unknown loss '" + loss + "'");
  LossCheckReport rep;
  rep.loss = loss;
  rep.trials = trials;
  auto violate = [&](double amount) { rep.max_property_violation = std::max(rep.max_property_violation, amount); };
  const double eps = kDefaultQLossEpsilon;

  for (std::size_t i = 0; i < trials; ++i) {
    CounterRng rng(seed, i);
    const Quaternion a = random_rotation(rng), b = random_rotation(rng), g = random_rotation(rng);
    if (loss == "qloss") {
      violate(std::abs(qloss(a, a, eps) - std::log(eps)));
      violate(std::abs(qloss(-a, b, eps) - qloss(a, b, eps)));
      violate(std::max(0.0, std::log(eps) - qloss(a, b, eps)));
      if (grad_check && std::abs(dot(a, b)) < 1.0 - 1e-6) {
        rep.max_gradient_error = std::max(rep.max_gradient_error, qloss_gradient_error(a, b, eps));
        ++rep.gradient_checks;
      }
      continue;
    }
    // Point-model losses: a small random cloud keeps brute-force sloss cheap.
    const PointModel m = random_point_model(rng, 40, loss == "sloss" || (loss == "smloss" && i % 2 == 0));
    const double p = ploss(a, b, m), s = sloss(a, b, m);
    violate(std::max(0.0, -p));
    violate(std::max(0.0, -s));
    violate(std::max(0.0, s - p));
    violate(std::abs(ploss(-a, b, m) - p));
    violate(std::abs(ploss(a, -b, m) - p));
    violate(std::abs(sloss(-a, -b, m) - s));
    violate(std::abs(ploss(g * a, g * b, m) - p));
    violate(ploss(a, a, m));
    violate(sloss(a, a, m));
    if (loss == "smloss") violate(std::abs(smloss(a, b, m) - (m.symmetric ? s : p)));
    if (!grad_check) continue;
    if (loss == "ploss" || (loss == "smloss" && !m.symmetric)) {
      rep.max_gradient_error = std::max(rep.max_gradient_error, ploss_gradient_error(a, b, m));
      ++rep.gradient_checks;
    } else if (const auto e = sloss_gradient_error(a, b, m)) {
      rep.max_gradient_error = std::max(rep.max_gradient_error, *e);
      ++rep.gradient_checks;
    }
  }

  if (loss != "qloss") {
    // Symmetric ring: a rotation about the axis is free under sloss only.
    PointModel ring = ring_model(0.05, 360);
    const double bound = ring_chord_gap_bound(0.05, 360);
    const Quaternion turn = from_axis_angle({0, 0, 1}, 0.5);
    const double s = sloss(turn, Quaternion::identity(), ring);
    const double p = ploss(turn, Quaternion::identity(), ring);
    violate(std::max(0.0, s - bound));
    if (p < 10 * bound) violate(10 * bound - p);
    rep.branch = ring.symmetric ? "sloss" : "ploss";
    if (loss == "smloss") violate(std::abs(smloss(turn, Quaternion::identity(), ring) - s));
  }
  rep.passed = rep.max_gradient_error < kGradientTolerance && rep.max_property_violation <= 1e-9;
  return rep;
}

}  // namespace dpa
