#pragma once

// Brute-force reference implementations used to check the fast paths.
// They share data types with the library but none of its algorithms.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "dpa/aggregation.hpp"
#include "dpa/error.hpp"
#include "dpa/geometry.hpp"
#include "dpa/hough.hpp"

namespace dpa::oracle {

/// Rotation matrix assembled column by column from q e_k q^*.
inline Mat3 rotation_by_conjugation(const Quaternion& q_in) {
  const Quaternion q = normalized(q_in);
  Mat3 r = Mat3::zero();
  const std::array<Quaternion, 3> basis{Quaternion{0, 1, 0, 0}, Quaternion{0, 0, 1, 0}, Quaternion{0, 0, 0, 1}};
  for (int k = 0; k < 3; ++k) {
    const Quaternion v = q * basis[k] * q.conjugate();
    r(0, k) = v.x;
    r(1, k) = v.y;
    r(2, k) = v.z;
  }
  return r;
}

/// Quasi-uniform points on S^3 (super-Fibonacci spiral).
inline std::vector<Quaternion> sphere_samples(std::size_t n) {
  constexpr double phi = 1.4142135623730951;  // sqrt(2)
  constexpr double psi = 1.533751168755204288118041;
  std::vector<Quaternion> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) + 0.5;
    const double r = std::sqrt(s / static_cast<double>(n));
    const double big_r = std::sqrt(1.0 - s / static_cast<double>(n));
    const double alpha = 2.0 * std::numbers::pi * s / phi;
    const double beta = 2.0 * std::numbers::pi * s / psi;
    out.push_back({r * std::sin(alpha), r * std::cos(alpha), big_r * std::sin(beta), big_r * std::cos(beta)});
  }
  return out;
}

struct GridAverageResult {
  Quaternion q;
  double cost = 0;
};

/// Direct minimization of sum_i w_i ||R(q) - R(q_i)||_F^2: exhaustive search
/// over `samples` spiral points plus every input, then coordinate descent
/// (golden-section line search about each body axis) from the best candidate.
inline GridAverageResult grid_average(const PredictionSet& set, std::size_t samples = 20000) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "prediction set is empty");
  std::vector<Mat3> rots;
  rots.reserve(set.size());
  for (const auto& q : set.quats) rots.push_back(rotation_by_conjugation(q));
  auto cost = [&](const Quaternion& q) {
    const Mat3 r = rotation_by_conjugation(q);
    double c = 0;
    for (std::size_t i = 0; i < rots.size(); ++i) {
      double f = 0;
      for (int k = 0; k < 9; ++k) {
        const double d = r.m[k] - rots[i].m[k];
        f += d * d;
      }
      c += set.weights[i] * f;
    }
    return c;
  };

  std::vector<Quaternion> candidates = sphere_samples(samples);
  candidates.insert(candidates.end(), set.quats.begin(), set.quats.end());
  Quaternion best = candidates.front();
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    const double v = cost(c);
    if (v < best_cost) {
      best_cost = v;
      best = c;
    }
  }

  auto turned = [](const Quaternion& q, int axis, double angle) {
    Quaternion d{std::cos(0.5 * angle), 0, 0, 0};
    (axis == 0 ? d.x : axis == 1 ? d.y : d.z) = std::sin(0.5 * angle);
    return normalized(q * d);
  };
  constexpr double bracket = 0.15;
  constexpr double golden = 0.6180339887498949;
  for (int cycle = 0; cycle < 4000; ++cycle) {
    double moved = 0;
    for (int axis = 0; axis < 3; ++axis) {
      double lo = -bracket, hi = bracket;
      double x1 = hi - golden * (hi - lo), x2 = lo + golden * (hi - lo);
      double f1 = cost(turned(best, axis, x1)), f2 = cost(turned(best, axis, x2));
      while (hi - lo > 1e-11) {
        if (f1 < f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - golden * (hi - lo);
          f1 = cost(turned(best, axis, x1));
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + golden * (hi - lo);
          f2 = cost(turned(best, axis, x2));
        }
      }
      const double step = 0.5 * (lo + hi);
      const Quaternion trial = turned(best, axis, step);
      const double v = cost(trial);
      if (v < best_cost) {
        best_cost = v;
        best = trial;
        moved = std::max(moved, std::abs(step));
      }
    }
    if (moved < 1e-9) break;
  }
  return {canonicalize_sign(best), best_cost};
}

inline Quaternion oracle_grid_average(const PredictionSet& set) { return grid_average(set).q; }

/// Exhaustive vote accumulation: pixel p votes for cell c iff c lies on p's
/// ray (dominant-axis offset k >= 0) and c's center is within half a cell of
/// the ray along the minor axis.
inline VoteMap oracle_vote_accumulate(const DirectionField& field, const Mask& mask) {
  if (field.width != mask.width || field.height != mask.height)
    throw Error(ErrorCode::DimensionMismatch, "direction field and mask sizes differ");
  VoteMap votes(field.width, field.height);
  for (int pr = 0; pr < field.height; ++pr) {
    for (int pc = 0; pc < field.width; ++pc) {
      const std::size_t i = field.index(pr, pc);
      if (!mask.data[i] || !field.valid.data[i]) continue;
      const double dx = field.dx[i], dy = field.dy[i];
      const bool x_major = std::abs(dx) >= std::abs(dy);
      for (int row = 0; row < field.height; ++row) {
        for (int col = 0; col < field.width; ++col) {
          double k, minor, target;
          if (x_major) {
            k = (col - pc) * (dx > 0 ? 1.0 : -1.0);
            minor = pr + k * (dy / std::abs(dx));
            target = row;
          } else {
            k = (row - pr) * (dy > 0 ? 1.0 : -1.0);
            minor = pc + k * (dx / std::abs(dy));
            target = col;
          }
          if (k < 0) continue;
          if (minor >= target - 0.5 && minor < target + 0.5) ++votes.at(row, col);
        }
      }
    }
  }
  return votes;
}

}  // namespace dpa::oracle
