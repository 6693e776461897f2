#pragma once

// Orientation losses (QLoss, PLoss, SLoss and their symmetric dispatch), their
// analytic gradients, and the combined training objective.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "dpa/dense_map.hpp"
#include "dpa/error.hpp"
#include "dpa/geometry.hpp"
#include "dpa/point_model.hpp"

namespace dpa {

using Vec4 = std::array<double, 4>;

inline constexpr double kDefaultQLossEpsilon = 1e-4;

/// log(eps + 1 - |<a, b>|). Minimal (log eps) when a = +-b.
inline double qloss(const Quaternion& estimate, const Quaternion& target, double eps = kDefaultQLossEpsilon) {
  return std::log(eps + (1.0 - std::abs(dot(estimate, target))));
}

struct QLossGradient {
  Vec4 grad{};
  bool at_minimum = false;  // |<a, b>| = 1: the loss has a kink; grad is set to zero
};

/// d qloss / d estimate = -sign(<a, b>) b / (eps + 1 - |<a, b>|).
inline QLossGradient grad_qloss(const Quaternion& estimate, const Quaternion& target,
                                double eps = kDefaultQLossEpsilon) {
  const double d = dot(estimate, target);
  if (std::abs(d) >= 1.0 - 1e-12) return {{0, 0, 0, 0}, true};
  const double f = -(d < 0 ? -1.0 : 1.0) / (eps + (1.0 - std::abs(d)));
  return {{f * target.w, f * target.x, f * target.y, f * target.z}, false};
}

/// Partial derivatives of the unit-quaternion rotation matrix with respect to
/// (w, x, y, z).
inline std::array<Mat3, 4> rotmat_jacobian(const Quaternion& q) {
  const double w = 2 * q.w, x = 2 * q.x, y = 2 * q.y, z = 2 * q.z;
  return {Mat3{{0, -z, y, z, 0, -x, -y, x, 0}},                      //
          Mat3{{0, y, z, y, -2 * x, -w, z, w, -2 * x}},              //
          Mat3{{-2 * y, x, w, x, 0, z, -w, z, -2 * y}},              //
          Mat3{{-2 * z, -w, x, w, -2 * z, y, x, y, 0}}};
}

/// Removes the component along q: the gradient restricted to the tangent space of S^3.
inline Vec4 tangent_project(const Vec4& g, const Quaternion& q) {
  const Quaternion u = normalized(q);
  const double d = g[0] * u.w + g[1] * u.x + g[2] * u.y + g[3] * u.z;
  return {g[0] - d * u.w, g[1] - d * u.x, g[2] - d * u.y, g[3] - d * u.z};
}

/// (1/2m) sum_x ||R(estimate) x - R(target) x||^2
inline double ploss(const Quaternion& estimate, const Quaternion& target, const PointModel& model) {
  model.require_nonempty();
  const Mat3 re = quat_to_rotmat(estimate);
  const Mat3 rt = quat_to_rotmat(target);
  double s = 0;
  for (const auto& x : model.points) s += squared_norm(re * x - rt * x);
  return s / (2.0 * static_cast<double>(model.size()));
}

/// For every point of the estimate, the index of its nearest target point
/// (lowest index on ties).
inline std::vector<std::size_t> nearest_correspondences(std::span<const Vec3> from, std::span<const Vec3> to) {
  std::vector<std::size_t> match(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < to.size(); ++j) {
      const double d = squared_norm(from[i] - to[j]);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    match[i] = arg;
  }
  return match;
}

inline std::vector<Vec3> transform_points(const PointModel& model, const Mat3& r, const Vec3& t = {}) {
  std::vector<Vec3> out;
  out.reserve(model.size());
  for (const auto& p : model.points) out.push_back(r * p + t);
  return out;
}

/// (1/2m) sum_x1 min_x2 ||R(estimate) x1 - R(target) x2||^2, brute force.
inline double sloss(const Quaternion& estimate, const Quaternion& target, const PointModel& model) {
  model.require_nonempty();
  const auto pe = transform_points(model, quat_to_rotmat(estimate));
  const auto pt = transform_points(model, quat_to_rotmat(target));
  double s = 0;
  for (const auto& a : pe) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : pt) best = std::min(best, squared_norm(a - b));
    s += best;
  }
  return s / (2.0 * static_cast<double>(model.size()));
}

inline double smloss(const Quaternion& estimate, const Quaternion& target, const PointModel& model) {
  return model.symmetric ? sloss(estimate, target, model) : ploss(estimate, target, model);
}

namespace detail {
inline Vec4 chain_rotation(const Mat3& g, const Quaternion& q) {
  const auto jac = rotmat_jacobian(q);
  Vec4 out{};
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 9; ++i) out[k] += g.m[i] * jac[k].m[i];
  return out;
}
}  // namespace detail

/// Gradient of ploss with respect to the estimate's four components, with
/// R(estimate) taken as the unit-quaternion polynomial. Project with
/// tangent_project() to compare against perturbations that stay on S^3.
inline Vec4 grad_ploss(const Quaternion& estimate, const Quaternion& target, const PointModel& model) {
  model.require_nonempty();
  const Mat3 re = quat_to_rotmat(estimate);
  const Mat3 rt = quat_to_rotmat(target);
  Mat3 g = Mat3::zero();  // dL/dR(estimate)
  for (const auto& x : model.points) {
    const Vec3 e = re * x - rt * x;
    const double p[3] = {x.x, x.y, x.z};
    const double r[3] = {e.x, e.y, e.z};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) g(i, j) += r[i] * p[j];
  }
  for (double& v : g.m) v /= static_cast<double>(model.size());
  return detail::chain_rotation(g, estimate);
}

/// Subgradient of sloss: nearest-point correspondences are held fixed at
/// their current argmin.
inline Vec4 grad_sloss(const Quaternion& estimate, const Quaternion& target, const PointModel& model) {
  model.require_nonempty();
  const Mat3 re = quat_to_rotmat(estimate);
  const auto pe = transform_points(model, re);
  const auto pt = transform_points(model, quat_to_rotmat(target));
  const auto match = nearest_correspondences(pe, pt);
  Mat3 g = Mat3::zero();
  for (std::size_t k = 0; k < model.size(); ++k) {
    const Vec3 e = pe[k] - pt[match[k]];
    const Vec3& x = model.points[k];
    const double p[3] = {x.x, x.y, x.z};
    const double r[3] = {e.x, e.y, e.z};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) g(i, j) += r[i] * p[j];
  }
  for (double& v : g.m) v /= static_cast<double>(model.size());
  return detail::chain_rotation(g, estimate);
}

struct LossWeights {
  double seg = 1.0;
  double trans = 1.0;
  double rot = 1.0;
  double depth_scale = 100.0;

  /// Weights for the L2 and QLoss orientation variants.
  static constexpr LossWeights for_l2() { return {1.0, 1.0, 1.0, 100.0}; }
  /// Weights for the shape-match orientation variant.
  static constexpr LossWeights for_smloss() { return {1.0, 1.0, 100.0, 100.0}; }
};

inline double combined_loss(double seg_nll, double trans_l2, double rot, const LossWeights& w) {
  return w.seg * seg_nll + w.trans * trans_l2 + w.rot * rot;
}

/// Mean over pixels of -log p(true class).
inline double segmentation_nll(std::span<const double> true_class_probabilities) {
  if (true_class_probabilities.empty()) throw Error(ErrorCode::EmptySet, "no pixels");
  double s = 0;
  for (double p : true_class_probabilities) s -= std::log(std::max(p, 1e-300));
  return s / static_cast<double>(true_class_probabilities.size());
}

struct TranslationTarget {
  double dx = 0, dy = 0, depth = 0;
};

/// Mean squared error of (dx, dy, depth) with the depth term scaled by `depth_scale`.
inline double translation_l2(std::span<const TranslationTarget> predicted, std::span<const TranslationTarget> target,
                             double depth_scale = 100.0) {
  if (predicted.size() != target.size()) throw Error(ErrorCode::DimensionMismatch, "size mismatch");
  if (predicted.empty()) throw Error(ErrorCode::EmptySet, "no pixels");
  double s = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double ex = predicted[i].dx - target[i].dx, ey = predicted[i].dy - target[i].dy;
    const double ez = predicted[i].depth - target[i].depth;
    s += ex * ex + ey * ey + depth_scale * ez * ez;
  }
  return s / static_cast<double>(predicted.size());
}

/// Mean pixel-wise QLoss of the raw (normalized) quaternion field under `mask`.
inline double dense_qloss(const DensePredictionMap& dpm, const Mask& mask, const Quaternion& target,
                          double eps = kDefaultQLossEpsilon) {
  double s = 0;
  std::size_t n = 0;
  for (int r = 0; r < dpm.height(); ++r)
    for (int c = 0; c < dpm.width(); ++c) {
      if (!mask(r, c)) continue;
      const Quaternion q = dpm.raw_quaternion(r, c);
      if (!(norm(q) > kZeroNorm)) continue;
      s += qloss(normalized(q), target, eps);
      ++n;
    }
  if (n == 0) throw Error(ErrorCode::EmptyObject, "no valid pixels under the mask");
  return s / static_cast<double>(n);
}

/// Mean pixel-wise squared L2 distance of the raw quaternion field to `target`.
inline double dense_l2(const DensePredictionMap& dpm, const Mask& mask, const Quaternion& target) {
  double s = 0;
  std::size_t n = 0;
  for (int r = 0; r < dpm.height(); ++r)
    for (int c = 0; c < dpm.width(); ++c) {
      if (!mask(r, c)) continue;
      const Quaternion e = dpm.raw_quaternion(r, c) - target;
      s += dot(e, e);
      ++n;
    }
  if (n == 0) throw Error(ErrorCode::EmptyObject, "no pixels under the mask");
  return s / static_cast<double>(n);
}

}  // namespace dpa
