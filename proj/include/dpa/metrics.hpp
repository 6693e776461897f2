#pragma once

// ADD / ADD-S pose errors, accuracy curves, the area under the accuracy
// curve, and per-class evaluation reports.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dpa/error.hpp"
#include "dpa/geometry.hpp"
#include "dpa/point_model.hpp"
#include "dpa/pose.hpp"

namespace dpa {

inline constexpr double kAucMaxThreshold = 0.1;  // meters

namespace detail {
inline void check_pair(const PoseEstimate& pred, const PoseEstimate& gt, const PointModel& model) {
  if (pred.class_id != gt.class_id) throw Error(ErrorCode::ClassMismatch, "prediction and ground truth classes differ");
  model.require_nonempty();
}

inline std::vector<Vec3> posed_points(const PointModel& model, const PoseEstimate& pose) {
  const Mat3 r = quat_to_rotmat(pose.q);
  std::vector<Vec3> out;
  out.reserve(model.size());
  for (const auto& x : model.points) out.push_back(r * x + pose.t);
  return out;
}
}  // namespace detail

/// Mean distance between corresponding model points under the two poses.
inline double add_metric(const PoseEstimate& pred, const PoseEstimate& gt, const PointModel& model) {
  detail::check_pair(pred, gt, model);
  const auto a = detail::posed_points(model, pred);
  const auto b = detail::posed_points(model, gt);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::sqrt(squared_norm(a[i] - b[i]));
  return s / static_cast<double>(a.size());
}

/// Mean distance from each predicted model point to the closest ground-truth
/// model point (brute force).
inline double adds_metric(const PoseEstimate& pred, const PoseEstimate& gt, const PointModel& model) {
  detail::check_pair(pred, gt, model);
  const auto a = detail::posed_points(model, pred);
  const auto b = detail::posed_points(model, gt);
  double s = 0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, squared_norm(p - q));
    s += std::sqrt(best);
  }
  return s / static_cast<double>(a.size());
}

/// Fraction of distances strictly below each threshold.
inline std::vector<double> accuracy_curve(std::span<const double> distances, std::span<const double> thresholds) {
  if (distances.empty()) throw Error(ErrorCode::EmptyDistances, "no distances");
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw Error(ErrorCode::InvalidArgument, "thresholds must be ascending");
  std::vector<double> sorted(distances.begin(), distances.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    out.push_back(static_cast<double>(below) / static_cast<double>(sorted.size()));
  }
  return out;
}

/// Area under the accuracy curve on [0, max_threshold], scaled to [0, 100].
/// Integrates the empirical step function exactly:
///   100 * (1 - sum_i min(d_i / T, 1) / n).
/// Infinite distances (missed detections) contribute zero area.
inline double auc(std::span<const double> distances, double max_threshold = kAucMaxThreshold) {
  if (distances.empty()) throw Error(ErrorCode::EmptyDistances, "no distances");
  if (!(max_threshold > 0)) throw Error(ErrorCode::InvalidArgument, "max_threshold must be positive");
  double s = 0;
  for (double d : distances) s += std::min(d / max_threshold, 1.0);
  return 100.0 * (1.0 - s / static_cast<double>(distances.size()));
}

struct ClassReport {
  int class_id = 0;
  std::string name;
  bool symmetric = false;
  std::size_t n = 0;        // ground-truth instances
  std::size_t matched = 0;  // instances with a prediction
  double auc_p = 0, auc_s = 0;
  double rot_auc_p = 0, rot_auc_s = 0;  // ground-truth translation substituted
  double translation_error = std::numeric_limits<double>::quiet_NaN();  // mean over matched, meters
};

struct EvalReport {
  std::vector<ClassReport> classes;  // ascending class id
  ClassReport total;
  double nonsym_auc_p = std::numeric_limits<double>::quiet_NaN();  // ADD AUC over non-symmetric classes
  double sym_auc_s = std::numeric_limits<double>::quiet_NaN();     // ADD-S AUC over symmetric classes
};

/// Per-instance distances behind an EvalReport, in ground-truth order.
struct InstanceDistances {
  std::int64_t scene_id = 0;
  int class_id = 0;
  double add = std::numeric_limits<double>::infinity();
  double adds = std::numeric_limits<double>::infinity();
  double rot_add = std::numeric_limits<double>::infinity();
  double rot_adds = std::numeric_limits<double>::infinity();
  double translation_error = std::numeric_limits<double>::quiet_NaN();
  bool matched = false;
};

/// Assigns predictions to ground truth within each (scene, class): predictions
/// in descending confidence each take the nearest-translation unmatched ground
/// truth. Returns for every ground-truth record the index of its prediction, or -1.
inline std::vector<long> match_predictions(std::span<const PoseRecord> preds, std::span<const PoseRecord> gts) {
  std::vector<long> assigned(gts.size(), -1);
  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].pose.confidence > preds[b].pose.confidence;
  });
  std::map<std::pair<std::int64_t, int>, std::vector<std::size_t>> gt_groups;
  for (std::size_t g = 0; g < gts.size(); ++g) gt_groups[{gts[g].scene_id, gts[g].pose.class_id}].push_back(g);
  for (std::size_t pi : order) {
    auto it = gt_groups.find({preds[pi].scene_id, preds[pi].pose.class_id});
    if (it == gt_groups.end()) continue;
    long best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t g : it->second) {
      if (assigned[g] != -1) continue;
      const double d = squared_norm(preds[pi].pose.t - gts[g].pose.t);
      if (best == -1 || d < best_d) {
        best = static_cast<long>(g);
        best_d = d;
      }
    }
    if (best != -1) assigned[static_cast<std::size_t>(best)] = static_cast<long>(pi);
  }
  return assigned;
}

/// Distances for every ground-truth instance. Throws MissingModel when a
/// ground-truth or predicted class has no model.
inline std::vector<InstanceDistances> instance_distances(std::span<const PoseRecord> preds,
                                                         std::span<const PoseRecord> gts,
                                                         const std::map<int, PointModel>& models) {
  for (auto records : {preds, gts})
    for (const auto& r : records)
      if (!models.count(r.pose.class_id))
        throw Error(ErrorCode::MissingModel, "no point model for class " + std::to_string(r.pose.class_id));
  const auto assigned = match_predictions(preds, gts);
  std::vector<InstanceDistances> out(gts.size());
  for (std::size_t g = 0; g < gts.size(); ++g) {
    auto& d = out[g];
    d.scene_id = gts[g].scene_id;
    d.class_id = gts[g].pose.class_id;
    if (assigned[g] < 0) continue;
    const PoseEstimate& pred = preds[static_cast<std::size_t>(assigned[g])].pose;
    const PoseEstimate& gt = gts[g].pose;
    const PointModel& model = models.at(gt.class_id);
    PoseEstimate rot_only = pred;
    rot_only.t = gt.t;
    d.matched = true;
    d.add = add_metric(pred, gt, model);
    d.adds = adds_metric(pred, gt, model);
    d.rot_add = add_metric(rot_only, gt, model);
    d.rot_adds = adds_metric(rot_only, gt, model);
    d.translation_error = norm(pred.t - gt.t);
  }
  return out;
}

namespace detail {
inline ClassReport summarize(const std::vector<const InstanceDistances*>& rows) {
  ClassReport r;
  std::vector<double> add, adds, radd, radds;
  double terr = 0;
  for (const auto* d : rows) {
    add.push_back(d->add);
    adds.push_back(d->adds);
    radd.push_back(d->rot_add);
    radds.push_back(d->rot_adds);
    if (d->matched) {
      ++r.matched;
      terr += d->translation_error;
    }
  }
  r.n = rows.size();
  if (!rows.empty()) {
    r.auc_p = auc(add);
    r.auc_s = auc(adds);
    r.rot_auc_p = auc(radd);
    r.rot_auc_s = auc(radds);
  }
  if (r.matched) r.translation_error = terr / static_cast<double>(r.matched);
  return r;
}
}  // namespace detail

/// Evaluates predictions against ground truth: per-class and pooled AUC of
/// ADD (auc_p) and ADD-S (auc_s), rotation-only variants, and the mean
/// translation error. Unmatched ground truth scores an infinite distance.
/// `symmetric_classes` drives the symmetric/non-symmetric pooled columns.
inline EvalReport evaluate_scene_set(std::span<const PoseRecord> preds, std::span<const PoseRecord> gts,
                                     const std::map<int, PointModel>& models, const std::set<int>& symmetric_classes) {
  const auto dist = instance_distances(preds, gts, models);
  std::map<int, std::vector<const InstanceDistances*>> by_class;
  std::vector<const InstanceDistances*> all, sym, nonsym;
  for (const auto& d : dist) {
    by_class[d.class_id].push_back(&d);
    all.push_back(&d);
    (symmetric_classes.count(d.class_id) ? sym : nonsym).push_back(&d);
  }
  EvalReport report;
  for (const auto& [cls, rows] : by_class) {
    ClassReport r = detail::summarize(rows);
    r.class_id = cls;
    r.name = models.at(cls).name.empty() ? "class" + std::to_string(cls) : models.at(cls).name;
    r.symmetric = symmetric_classes.count(cls) > 0;
    report.classes.push_back(std::move(r));
  }
  report.total = detail::summarize(all);
  report.total.class_id = -1;
  report.total.name = "ALL";
  if (!nonsym.empty()) report.nonsym_auc_p = detail::summarize(nonsym).auc_p;
  if (!sym.empty()) report.sym_auc_s = detail::summarize(sym).auc_s;
  return report;
}

/// Shortest round-trip decimal, always with a decimal point ("100.0", "0.25").
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

namespace detail {
inline std::string kv_name(std::string s) {
  for (char& c : s)
    if (c == ' ' || c == '=' || c == '\t') c = '_';
  return s;
}
}  // namespace detail

/// One record per line:
///   class=<name> auc_p=<v> auc_s=<v> n=<count> rot_auc_p=<v> rot_auc_s=<v> trans_err=<m> matched=<count>
/// followed by the pooled "ALL" line and the symmetric/non-symmetric summaries.
inline std::string format_report_kv(const EvalReport& report) {
  std::string out;
  auto line = [&](const ClassReport& r) {
    out += "class=" + detail::kv_name(r.name) + " auc_p=" + format_real(r.auc_p) + " auc_s=" + format_real(r.auc_s) +
           " n=" + std::to_string(r.n) + " rot_auc_p=" + format_real(r.rot_auc_p) +
           " rot_auc_s=" + format_real(r.rot_auc_s) + " trans_err=" + format_real(r.translation_error) +
           " matched=" + std::to_string(r.matched) + "\n";
  };
  for (const auto& r : report.classes) line(r);
  line(report.total);
  out += "summary nonsym_auc_p=" + format_real(report.nonsym_auc_p) + " sym_auc_s=" + format_real(report.sym_auc_s) +
         "\n";
  return out;
}

inline std::string format_report_table(const EvalReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %4s %6s | %8s %8s | %8s %8s | %12s\n", "class", "sym", "n", "AUC P", "AUC S",
                "rot P", "rot S", "transl. [m]");
  out += buf;
  out += std::string(96, '-') + "\n";
  auto row = [&](const ClassReport& r, const char* sym) {
    std::snprintf(buf, sizeof buf, "%-24s %4s %6zu | %8.2f %8.2f | %8.2f %8.2f | %12.4f\n", r.name.c_str(), sym, r.n,
                  r.auc_p, r.auc_s, r.rot_auc_p, r.rot_auc_s, r.translation_error);
    out += buf;
  };
  for (const auto& r : report.classes) row(r, r.symmetric ? "yes" : "no");
  out += std::string(96, '-') + "\n";
  row(report.total, "");
  std::snprintf(buf, sizeof buf, "NonSymC AUC P %8.2f   SymC AUC S %8.2f\n", report.nonsym_auc_p, report.sym_auc_s);
  out += buf;
  return out;
}

}  // namespace dpa
