#pragma once

// Aggregation of dense per-pixel orientation predictions into one orientation
// per object: naive averaging, weighted quaternion averaging (top eigenvector
// of the weighted outer-product matrix), norm-percentile pruning and
// (weighted) RANSAC clustering.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "dpa/dense_map.hpp"
#include "dpa/error.hpp"
#include "dpa/geometry.hpp"
#include "dpa/jacobi.hpp"
#include "dpa/rng.hpp"

namespace dpa {

enum class Weighting { Unit, Norm, Segmentation };

constexpr std::string_view to_string(Weighting w) {
  switch (w) {
    case Weighting::Unit: return "unit";
    case Weighting::Norm: return "norm";
    case Weighting::Segmentation: return "seg";
  }
  return "?";
}

/// Unit quaternions and nonnegative weights gathered for one object hypothesis.
struct PredictionSet {
  std::vector<Quaternion> quats;
  std::vector<double> weights;
  std::vector<PixelIndex> source_pixels;

  std::size_t size() const { return quats.size(); }
  bool empty() const { return quats.empty(); }

  void push_back(const Quaternion& q, double w, PixelIndex px = {}) {
    quats.push_back(q);
    weights.push_back(w);
    source_pixels.push_back(px);
  }

  double total_weight() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

  /// Throws InvalidArgument unless the set satisfies its invariants.
  void validate() const {
    if (quats.empty()) throw Error(ErrorCode::EmptySet, "prediction set is empty");
    if (weights.size() != quats.size() || source_pixels.size() != quats.size())
      throw Error(ErrorCode::InvalidArgument, "prediction set arrays differ in length");
    bool any_positive = false;
    for (double w : weights) {
      if (!(w >= 0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidArgument, "weights must be finite and >= 0");
      any_positive |= w > 0;
    }
    if (!any_positive) throw Error(ErrorCode::InvalidArgument, "at least one weight must be positive");
  }
};

/// Collects the predictions of the pixels selected by `mask`. Quaternions are
/// normalized and their pre-normalization norm becomes the Norm weight.
/// Pixels with a (near) zero quaternion are dropped. `class_id` selects the
/// score plane used for Segmentation weighting.
inline PredictionSet gather_object_predictions(const DensePredictionMap& dpm, const Mask& mask, Weighting weighting,
                                               int class_id = 0) {
  if (mask.width != dpm.width() || mask.height != dpm.height())
    throw Error(ErrorCode::DimensionMismatch, "mask and prediction map sizes differ");
  if (weighting == Weighting::Segmentation && (class_id < 0 || class_id >= dpm.num_classes()))
    throw Error(ErrorCode::InvalidArgument, "class id out of range for segmentation weighting");
  PredictionSet set;
  for (int r = 0; r < dpm.height(); ++r) {
    for (int c = 0; c < dpm.width(); ++c) {
      if (!mask(r, c)) continue;
      const Quaternion raw = dpm.raw_quaternion(r, c);
      const double n = norm(raw);
      if (!(n > kZeroNorm)) continue;
      double w = 1.0;
      if (weighting == Weighting::Norm) w = n;
      else if (weighting == Weighting::Segmentation) w = dpm.score(class_id, r, c);
      set.push_back({raw.w / n, raw.x / n, raw.y / n, raw.z / n}, w, {r, c});
    }
  }
  if (set.empty()) throw Error(ErrorCode::EmptyObject, "no valid predictions under the object mask");
  return set;
}

/// Unweighted component-wise mean after aligning every sign to the first element.
inline Quaternion average_naive(const PredictionSet& set) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "prediction set is empty");
  const Quaternion& ref = set.quats.front();
  Quaternion sum{0, 0, 0, 0};
  for (const auto& q : set.quats) sum = sum + (dot(q, ref) < 0 ? -q : q);
  const Quaternion mean = sum * (1.0 / static_cast<double>(set.size()));
  if (!(norm(mean) > 1e-9)) throw Error(ErrorCode::DegenerateMean, "mean quaternion vanishes");
  return normalized(mean);
}

/// M = sum_i w_i q_i q_i^T, indexed in (w, x, y, z) order.
inline SquareMatrix<4> weighted_outer_product(const PredictionSet& set) {
  double m[10] = {};
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Quaternion& q = set.quats[i];
    const double w = set.weights[i];
    const double a = w * q.w, b = w * q.x, c = w * q.y, d = w * q.z;
    m[0] += a * q.w, m[1] += a * q.x, m[2] += a * q.y, m[3] += a * q.z;
    m[4] += b * q.x, m[5] += b * q.y, m[6] += b * q.z;
    m[7] += c * q.y, m[8] += c * q.z;
    m[9] += d * q.z;
  }
  return {{{m[0], m[1], m[2], m[3]}, {m[1], m[4], m[5], m[6]}, {m[2], m[5], m[7], m[8]}, {m[3], m[6], m[8], m[9]}}};
}

struct MarkleyResult {
  Quaternion q;
  std::array<double, 4> eigenvalues{};  // descending
  bool degenerate = false;              // top eigenvalue not separated from the second
  int sweeps = 0;
};

inline constexpr double kDegenerateGap = 1e-9;

/// Weighted average rotation: argmin over unit q of sum_i w_i ||R(q) - R(q_i)||_F^2,
/// i.e. the top eigenvector of the weighted outer-product matrix. The result's
/// first nonzero component is positive.
inline MarkleyResult markley_average(const PredictionSet& set) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "prediction set is empty");
  const auto eig = jacobi_eigen<4>(weighted_outer_product(set));
  MarkleyResult out;
  out.eigenvalues = eig.values;
  out.sweeps = eig.sweeps;
  const auto& v = eig.vectors[0];
  out.q = canonicalize_sign(normalized({v[0], v[1], v[2], v[3]}));
  const double top = std::abs(eig.values[0]);
  out.degenerate = !(eig.values[0] - eig.values[1] > kDegenerateGap * std::max(top, 1e-300));
  return out;
}

inline Quaternion average_markley(const PredictionSet& set) { return markley_average(set).q; }

/// The averaging objective sum_i w_i ||R(q) - R(q_i)||_F^2, evaluated with
/// explicit rotation matrices.
inline double rotation_average_cost(const PredictionSet& set, const Quaternion& q) {
  const RotationMatrix r = quat_to_rotmat(q);
  double cost = 0;
  for (std::size_t i = 0; i < set.size(); ++i) cost += set.weights[i] * frobenius_squared(r - quat_to_rotmat(set.quats[i]));
  return cost;
}

/// Number of predictions kept when pruning the fraction `lambda`: ceil((1-lambda)*n), at least one.
inline std::size_t pruned_count(std::size_t n, double lambda) {
  // The epsilon absorbs representation error in lambda, e.g. (1-0.9)*10.
  const double keep = std::ceil((1.0 - lambda) * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(keep, 0.0)), 1, n);
}

/// Keeps the ceil((1-lambda)*n) largest-weight predictions. Ties are broken by
/// source pixel in row-major order. Kept elements stay in input order.
inline PredictionSet prune_by_norm(const PredictionSet& set, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
  if (set.empty()) throw Error(ErrorCode::EmptySet, "prediction set is empty");
  const std::size_t n = set.size();
  const std::size_t keep = pruned_count(n, lambda);
  if (keep == n) return set;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto by_weight = [&](std::size_t a, std::size_t b) {
    if (set.weights[a] != set.weights[b]) return set.weights[a] > set.weights[b];
    if (set.source_pixels[a] != set.source_pixels[b]) return set.source_pixels[a] < set.source_pixels[b];
    return a < b;
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep - 1), order.end(), by_weight);
  order.resize(keep);
  std::sort(order.begin(), order.end());

  PredictionSet out;
  out.quats.reserve(keep);
  out.weights.reserve(keep);
  out.source_pixels.reserve(keep);
  for (std::size_t i : order) out.push_back(set.quats[i], set.weights[i], set.source_pixels[i]);
  return out;
}

struct RansacResult {
  Quaternion q;
  std::size_t hypothesis_index = 0;  // index into the input set
  int iteration = 0;                 // iteration at which the winner was first drawn
  double score = 0;                  // inlier weight sum (inlier count when unweighted)
  std::size_t inliers = 0;
};

struct RansacOptions {
  double threshold = 0.2;  // radians, rotation angle
  int iterations = 50;
  bool weighted = true;
  bool refine_inliers = false;  // replace the winner with the weighted average of its inliers
};

/// RANSAC clustering over rotations. Each iteration draws a hypothesis from the
/// set (proportional to weight when weighted, uniformly otherwise); its inliers
/// are predictions within angular distance `threshold`. The hypothesis with the
/// largest inlier weight (count when unweighted) wins; the earliest iteration
/// wins ties. Deterministic for a given seed.
inline RansacResult ransac_cluster_detailed(const PredictionSet& set, const RansacOptions& opt, std::uint64_t seed) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "prediction set is empty");
  if (!(opt.threshold > 0 && opt.threshold < std::numbers::pi))
    throw Error(ErrorCode::InvalidArgument, "RANSAC threshold must lie in (0, pi)");
  if (opt.iterations < 1) throw Error(ErrorCode::InvalidArgument, "RANSAC needs at least one iteration");
  const std::size_t n = set.size();

  std::vector<double> cumulative;
  std::size_t last_positive = 0;
  if (opt.weighted) {
    cumulative.resize(n);
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += set.weights[i];
      cumulative[i] = acc;
      if (set.weights[i] > 0) last_positive = i;
    }
    if (!(acc > 0)) throw Error(ErrorCode::InvalidArgument, "weighted RANSAC needs a positive weight");
  }

  // d(q, h) < t  <=>  |<q, h>| > cos(t / 2) for unit quaternions.
  const double cos_half = std::cos(0.5 * opt.threshold);
  CounterRng rng(seed, 0x52414e53ULL);
  std::unordered_map<std::size_t, std::pair<double, std::size_t>> scored;
  RansacResult best;
  bool have_best = false;

  for (int it = 0; it < opt.iterations; ++it) {
    std::size_t h;
    if (opt.weighted) {
      const double u = rng.uniform() * cumulative.back();
      h = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      if (h >= n) h = last_positive;
    } else {
      h = static_cast<std::size_t>(rng.below(n));
    }

    auto found = scored.find(h);
    if (found == scored.end()) {
      const Quaternion& hq = set.quats[h];
      double score = 0;
      std::size_t count = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (std::abs(dot(set.quats[j], hq)) > cos_half) {
          score += opt.weighted ? set.weights[j] : 1.0;
          ++count;
        }
      }
      found = scored.emplace(h, std::make_pair(score, count)).first;
    }
    const auto [score, count] = found->second;
    if (!have_best || score > best.score) {
      best = {set.quats[h], h, it, score, count};
      have_best = true;
    }
  }

  if (opt.refine_inliers) {
    PredictionSet inliers;
    const Quaternion hq = best.q;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(dot(set.quats[j], hq)) > cos_half)
        inliers.push_back(set.quats[j], opt.weighted ? set.weights[j] : 1.0, set.source_pixels[j]);
    }
    if (inliers.total_weight() > 0) best.q = average_markley(inliers);
  }
  return best;
}

inline Quaternion ransac_cluster(const PredictionSet& set, double threshold, int iterations, bool weighted,
                                 std::uint64_t seed) {
  return ransac_cluster_detailed(set, {threshold, iterations, weighted, false}, seed).q;
}

// Aggregation method selection.

struct NaiveAverage {};
struct MarkleyAverage {
  Weighting weighting = Weighting::Unit;
};
struct Pruned {
  double lambda = 0.0;
  Weighting weighting = Weighting::Norm;
};
struct Single {};
struct Ransac {
  double threshold = 0.2;
  int iterations = 50;
  bool weighted = false;
  bool refine_inliers = false;
};

using AggregationMethod = std::variant<NaiveAverage, MarkleyAverage, Pruned, Single, Ransac>;

/// The weights the method expects in its PredictionSet.
inline Weighting method_weighting(const AggregationMethod& method) {
  struct Visitor {
    Weighting operator()(const NaiveAverage&) const { return Weighting::Unit; }
    Weighting operator()(const MarkleyAverage& m) const { return m.weighting; }
    Weighting operator()(const Pruned& m) const { return m.weighting; }
    Weighting operator()(const Single&) const { return Weighting::Norm; }
    Weighting operator()(const Ransac& m) const { return m.weighted ? Weighting::Norm : Weighting::Unit; }
  };
  return std::visit(Visitor{}, method);
}

struct AggregationDiagnostics {
  bool degenerate = false;
  std::size_t used = 0;  // predictions that entered the final estimate
};

/// Dispatches to the aggregator selected by `method`. `seed` only matters for RANSAC.
inline Quaternion aggregate_orientation(const PredictionSet& set, const AggregationMethod& method,
                                        std::uint64_t seed = 0, AggregationDiagnostics* diag = nullptr) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "prediction set is empty");
  AggregationDiagnostics local;
  Quaternion q;
  if (std::holds_alternative<NaiveAverage>(method)) {
    q = average_naive(set);
    local.used = set.size();
  } else if (std::holds_alternative<MarkleyAverage>(method)) {
    const auto r = markley_average(set);
    q = r.q;
    local = {r.degenerate, set.size()};
  } else if (const auto* p = std::get_if<Pruned>(&method)) {
    const PredictionSet kept = prune_by_norm(set, p->lambda);
    const auto r = markley_average(kept);
    q = r.q;
    local = {r.degenerate, kept.size()};
  } else if (std::holds_alternative<Single>(method)) {
    const PredictionSet kept = prune_by_norm(set, 1.0);
    const auto r = markley_average(kept);
    q = r.q;
    local = {false, kept.size()};
  } else {
    const auto& rs = std::get<Ransac>(method);
    const auto r = ransac_cluster_detailed(set, {rs.threshold, rs.iterations, rs.weighted, rs.refine_inliers}, seed);
    q = r.q;
    local.used = r.inliers;
  }
  if (diag) *diag = local;
  return q;
}

namespace detail {
inline std::optional<double> parse_number(std::string_view s) {
  double v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<Weighting> parse_weighting(std::string_view s) {
  if (s == "unit") return Weighting::Unit;
  if (s == "norm") return Weighting::Norm;
  if (s == "seg") return Weighting::Segmentation;
  return std::nullopt;
}
}  // namespace detail

/// Parses the method grammar used on the command line:
///   naive | markley[:unit|:norm|:seg] | pruned:<lambda>[:norm|:seg] | single
///   | ransac:<t> | wransac:<t>
/// Throws BadParams on malformed input or out-of-range parameters.
inline AggregationMethod parse_method(std::string_view text, int ransac_iterations = 50) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t colon = text.find(':', start);
    parts.push_back(text.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  auto fail = [&](const char* why) -> Error {
    return Error(ErrorCode::BadParams, "method '" + std::string(text) + "': " + why);
  };
  const std::string_view name = parts[0];

  if (name == "naive" || name == "single") {
    if (parts.size() != 1) throw fail("takes no parameters");
    if (name == "naive") return NaiveAverage{};
    return Single{};
  }
  if (name == "markley") {
    if (parts.size() > 2) throw fail("too many parameters");
    MarkleyAverage m;
    if (parts.size() == 2) {
      const auto w = detail::parse_weighting(parts[1]);
      if (!w) throw fail("weighting must be unit, norm or seg");
      m.weighting = *w;
    }
    return m;
  }
  if (name == "pruned") {
    if (parts.size() < 2 || parts.size() > 3) throw fail("expected pruned:<lambda>[:norm|:seg]");
    const auto lambda = detail::parse_number(parts[1]);
    if (!lambda || *lambda < 0 || *lambda > 1) throw fail("lambda must be a number in [0, 1]");
    Pruned p{*lambda, Weighting::Norm};
    if (parts.size() == 3) {
      const auto w = detail::parse_weighting(parts[2]);
      if (!w || *w == Weighting::Unit) throw fail("pruning weighting must be norm or seg");
      p.weighting = *w;
    }
    return p;
  }
  if (name == "ransac" || name == "wransac") {
    if (parts.size() != 2) throw fail("expected a threshold in radians");
    const auto t = detail::parse_number(parts[1]);
    if (!t || !(*t > 0) || !(*t < std::numbers::pi)) throw fail("threshold must lie in (0, pi)");
    if (ransac_iterations < 1) throw fail("RANSAC needs at least one iteration");
    return Ransac{*t, ransac_iterations, name == "wransac", false};
  }
  throw fail("unknown method");
}

namespace detail {
inline std::string shortest_number(double v) {
  char buf[32];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}
}  // namespace detail

inline std::string format_method(const AggregationMethod& method) {
  using detail::shortest_number;
  struct Visitor {
    std::string operator()(const NaiveAverage&) const { return "naive"; }
    std::string operator()(const MarkleyAverage& m) const { return "markley:" + std::string(to_string(m.weighting)); }
    std::string operator()(const Pruned& m) const {
      return "pruned:" + shortest_number(m.lambda) + ":" + std::string(to_string(m.weighting));
    }
    std::string operator()(const Single&) const { return "single"; }
    std::string operator()(const Ransac& m) const {
      return std::string(m.weighted ? "wransac:" : "ransac:") + shortest_number(m.threshold);
    }
  };
  return std::visit(Visitor{}, method);
}

}  // namespace dpa
