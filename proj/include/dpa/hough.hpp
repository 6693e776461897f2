#pragma once

// Hough voting over dense 2D center directions: vote accumulation, center
// hypotheses, inlier selection and translation recovery by ray projection.
//
// Pixel (row, col) has its center at image coordinates (u, v) = (col, row).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dpa/dense_map.hpp"
#include "dpa/error.hpp"
#include "dpa/geometry.hpp"

namespace dpa {

/// Unit 2D directions towards the object center, plus a validity mask.
struct DirectionField {
  int width = 0, height = 0;
  std::vector<double> dx, dy;
  Mask valid;

  DirectionField() = default;
  DirectionField(int w, int h)
      : width(w), height(h), dx(static_cast<std::size_t>(w) * h, 0.0), dy(static_cast<std::size_t>(w) * h, 0.0), valid(w, h) {}

  std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width + col; }

  /// Stores the normalized direction; near-zero vectors are marked invalid.
  void set(int row, int col, double x, double y) {
    const double n = std::hypot(x, y);
    const std::size_t i = index(row, col);
    if (n > 1e-6) {
      dx[i] = x / n;
      dy[i] = y / n;
      valid.data[i] = 1;
    } else {
      dx[i] = dy[i] = 0.0;
      valid.data[i] = 0;
    }
  }

  static DirectionField from_dpm(const DensePredictionMap& dpm) {
    DirectionField f(dpm.width(), dpm.height());
    for (int r = 0; r < dpm.height(); ++r)
      for (int c = 0; c < dpm.width(); ++c) f.set(r, c, dpm.dir_x(r, c), dpm.dir_y(r, c));
    return f;
  }
};

struct VoteMap {
  int width = 0, height = 0;
  std::vector<std::uint32_t> counts;

  VoteMap() = default;
  VoteMap(int w, int h) : width(w), height(h), counts(static_cast<std::size_t>(w) * h, 0) {}

  std::uint32_t operator()(int row, int col) const { return counts[static_cast<std::size_t>(row) * width + col]; }
  std::uint32_t& at(int row, int col) { return counts[static_cast<std::size_t>(row) * width + col]; }
  bool operator==(const VoteMap&) const = default;
};

namespace detail {
/// The integer r with r - 0.5 <= y < r + 0.5, computed without rounding slop.
inline long long nearest_cell(double y) {
  long long r = static_cast<long long>(std::floor(y + 0.5));
  if (y < static_cast<double>(r) - 0.5) --r;
  else if (y >= static_cast<double>(r) + 0.5) ++r;
  return r;
}
}  // namespace detail

/// Every valid masked pixel casts one vote into each cell its ray crosses,
/// from the pixel itself to the image border. Rasterization steps one cell
/// along the dominant axis (x on ties) and picks the nearest cell on the
/// minor axis.
inline VoteMap cast_votes(const DirectionField& field, const Mask& mask) {
  if (field.width != mask.width || field.height != mask.height)
    throw Error(ErrorCode::DimensionMismatch, "direction field and mask sizes differ");
  const int w = field.width, h = field.height;
  VoteMap votes(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = field.index(r, c);
      if (!mask.data[i] || !field.valid.data[i]) continue;
      const double dx = field.dx[i], dy = field.dy[i];
      if (std::abs(dx) >= std::abs(dy)) {
        const int step = dx > 0 ? 1 : -1;
        const double slope = dy / std::abs(dx);
        for (long long k = 0;; ++k) {
          const long long col = c + k * step;
          if (col < 0 || col >= w) break;
          const long long row = detail::nearest_cell(r + static_cast<double>(k) * slope);
          if (row < 0 || row >= h) break;
          ++votes.at(static_cast<int>(row), static_cast<int>(col));
        }
      } else {
        const int step = dy > 0 ? 1 : -1;
        const double slope = dx / std::abs(dy);
        for (long long k = 0;; ++k) {
          const long long row = r + k * step;
          if (row < 0 || row >= h) break;
          const long long col = detail::nearest_cell(c + static_cast<double>(k) * slope);
          if (col < 0 || col >= w) break;
          ++votes.at(static_cast<int>(row), static_cast<int>(col));
        }
      }
    }
  }
  return votes;
}

struct CenterCandidate {
  double u = 0, v = 0;  // subpixel center
  std::uint32_t votes = 0;
  PixelIndex peak;
};

/// Local maxima (8-neighborhood) with at least `min_votes`, greedily
/// suppressed by descending votes within `nms_radius` pixels, refined to
/// subpixel precision by the vote centroid of the 3x3 neighborhood.
/// Equal vote counts are ordered row-major.
inline std::vector<CenterCandidate> find_centers(const VoteMap& votes, std::uint32_t min_votes, double nms_radius,
                                                 std::size_t max_hypotheses) {
  if (min_votes < 1) throw Error(ErrorCode::InvalidArgument, "min_votes must be at least 1");
  const int w = votes.width, h = votes.height;
  std::vector<PixelIndex> peaks;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::uint32_t v = votes(r, c);
      if (v < min_votes) continue;
      bool is_max = true;
      for (int dr = -1; dr <= 1 && is_max; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if ((dr || dc) && rr >= 0 && rr < h && cc >= 0 && cc < w && votes(rr, cc) > v) {
            is_max = false;
            break;
          }
        }
      if (is_max) peaks.push_back({r, c});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [&](const PixelIndex& a, const PixelIndex& b) { return votes(a.row, a.col) > votes(b.row, b.col); });

  std::vector<CenterCandidate> out;
  const double r2 = nms_radius * nms_radius;
  for (const auto& p : peaks) {
    if (out.size() >= max_hypotheses) break;
    const bool suppressed = std::any_of(out.begin(), out.end(), [&](const CenterCandidate& k) {
      const double du = p.col - k.peak.col, dv = p.row - k.peak.row;
      return du * du + dv * dv <= r2;
    });
    if (suppressed) continue;
    double su = 0, sv = 0, sw = 0;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = p.row + dr, cc = p.col + dc;
        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
        const double v = votes(rr, cc);
        su += v * cc;
        sv += v * rr;
        sw += v;
      }
    out.push_back({su / sw, sv / sw, votes(p.row, p.col), p});
  }
  return out;
}

/// Masked pixels whose direction points at `center` within the cosine threshold.
/// Pixels closer than half a pixel to the center are always inliers.
inline Mask inlier_mask(double center_u, double center_v, const DirectionField& field, const Mask& mask,
                        double cos_threshold) {
  if (!(cos_threshold > -1.0 && cos_threshold <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "cos_threshold must lie in (-1, 1]");
  if (field.width != mask.width || field.height != mask.height)
    throw Error(ErrorCode::DimensionMismatch, "direction field and mask sizes differ");
  Mask out(mask.width, mask.height);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask(r, c)) continue;
      const double ex = center_u - c, ey = center_v - r;
      const double dist = std::hypot(ex, ey);
      if (dist < 0.5) {
        out.set(r, c);
        continue;
      }
      const std::size_t i = field.index(r, c);
      if (!field.valid.data[i]) continue;
      if ((field.dx[i] * ex + field.dy[i] * ey) / dist >= cos_threshold) out.set(r, c);
    }
  }
  return out;
}

/// Least-squares intersection of the inlier rays: the point minimizing the
/// summed squared perpendicular distance to every ray's supporting line.
/// Returns nullopt when the rays are (nearly) parallel.
inline std::optional<std::pair<double, double>> intersect_rays(const DirectionField& field, const Mask& inliers) {
  double a00 = 0, a01 = 0, a11 = 0, b0 = 0, b1 = 0;
  std::size_t n = 0;
  for (int r = 0; r < inliers.height; ++r) {
    for (int c = 0; c < inliers.width; ++c) {
      const std::size_t i = field.index(r, c);
      if (!inliers.data[i] || !field.valid.data[i]) continue;
      const double nx = -field.dy[i], ny = field.dx[i];
      const double d = nx * c + ny * r;
      a00 += nx * nx;
      a01 += nx * ny;
      a11 += ny * ny;
      b0 += nx * d;
      b1 += ny * d;
      ++n;
    }
  }
  const double det = a00 * a11 - a01 * a01;
  if (n < 2 || !(det > 1e-6 * static_cast<double>(n) * static_cast<double>(n))) return std::nullopt;
  return std::make_pair((a11 * b0 - a01 * b1) / det, (a00 * b1 - a01 * b0) / det);
}

enum class DepthReduction { Mean, Median };

/// Averages the inlier depths and back-projects the center along its camera ray.
inline Vec3 estimate_translation(double center_u, double center_v, std::span<const float> depths, const Mask& inliers,
                                 const CameraIntrinsics& k, DepthReduction reduction = DepthReduction::Mean) {
  if (depths.size() != inliers.data.size()) throw Error(ErrorCode::DimensionMismatch, "depth and mask sizes differ");
  std::vector<double> values;
  for (std::size_t i = 0; i < depths.size(); ++i)
    if (inliers.data[i] && std::isfinite(depths[i])) values.push_back(depths[i]);
  if (values.empty()) throw Error(ErrorCode::NoInliers, "no inlier with a finite depth");
  double z;
  if (reduction == DepthReduction::Mean) {
    double s = 0;
    for (double v : values) s += v;
    z = s / static_cast<double>(values.size());
  } else {
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    z = *mid;
    if (values.size() % 2 == 0) z = 0.5 * (z + *std::max_element(values.begin(), mid));
  }
  if (!(z > 0)) throw Error(ErrorCode::NonPositiveDepth, "mean inlier depth is not positive");
  return backproject(center_u, center_v, z, k);
}

struct HoughParams {
  std::uint32_t min_votes = 50;
  double nms_radius = 20.0;
  double cos_threshold = 0.99;
  std::size_t max_hypotheses = 8;
  std::uint32_t min_inliers = 50;  // after removing pixels claimed by stronger hypotheses
  bool refine_center = true;       // re-estimate the center from the inlier rays
  DepthReduction depth = DepthReduction::Mean;
};

struct CenterHypothesis {
  double u = 0, v = 0;
  double votes = 0;
  std::size_t inlier_count = 0;
  double depth = 0;
  Vec3 translation;
  Mask inliers;
};

/// Full center voting for the pixels of one class. Hypotheses are processed
/// by descending votes and each pixel is an inlier of at most one of them;
/// hypotheses left with fewer than `min_inliers` unclaimed inliers, or
/// without a positive depth, are dropped.
inline std::vector<CenterHypothesis> detect_centers(const DirectionField& field, std::span<const float> depths,
                                                    const Mask& class_mask, const CameraIntrinsics& k,
                                                    const HoughParams& params) {
  const VoteMap votes = cast_votes(field, class_mask);
  Mask available = class_mask;
  std::vector<CenterHypothesis> out;
  for (const auto& cand : find_centers(votes, params.min_votes, params.nms_radius, params.max_hypotheses)) {
    CenterHypothesis hyp;
    hyp.u = cand.u;
    hyp.v = cand.v;
    hyp.votes = cand.votes;
    hyp.inliers = inlier_mask(hyp.u, hyp.v, field, available, params.cos_threshold);
    if (params.refine_center) {
      if (const auto refined = intersect_rays(field, hyp.inliers)) {
        // Accept only refinements that stay near the vote peak.
        const double du = refined->first - cand.u, dv = refined->second - cand.v;
        if (du * du + dv * dv <= 4.0) {
          hyp.u = refined->first;
          hyp.v = refined->second;
          hyp.inliers = inlier_mask(hyp.u, hyp.v, field, available, params.cos_threshold);
        }
      }
    }
    hyp.inlier_count = hyp.inliers.count();
    if (hyp.inlier_count == 0 || hyp.inlier_count < params.min_inliers) continue;
    try {
      hyp.translation = estimate_translation(hyp.u, hyp.v, depths, hyp.inliers, k, params.depth);
    } catch (const Error&) {
      continue;
    }
    hyp.depth = hyp.translation.z;
    for (std::size_t i = 0; i < available.data.size(); ++i)
      if (hyp.inliers.data[i]) available.data[i] = 0;
    out.push_back(std::move(hyp));
  }
  return out;
}

}  // namespace dpa
