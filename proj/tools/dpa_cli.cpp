// dpa: synthetic data, pose aggregation, evaluation, loss checks and timing.
//
// Exit codes: 0 ok, 2 usage, 3 I/O, 4 empty object (partial output written),
// 5 missing model, 6 check failure, 1 anything else.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "dpa/dpa.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit : int { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kEmptyObject = 4, kMissingModel = 5, kCheckFailed = 6 };

// ---- diagnostics -----------------------------------------------------------

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

Level log_level() {
  static const Level level = [] {
    const char* env = std::getenv("DPA_LOG");
    if (!env) return Level::Warn;
    const std::string v = env;
    if (v == "error") return Level::Error;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    if (v != "warn") std::cerr << "dpa: warn: unrecognized DPA_LOG value '" << v << "', using warn\n";
    return Level::Warn;
  }();
  return level;
}

void log(Level level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level > log_level()) return;
  std::cerr << "dpa: " << names[static_cast<int>(level)] << ": " << msg << '\n';
}

int exit_code(dpa::ErrorCode code) {
  using dpa::ErrorCode;
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::BadMagic:
    case ErrorCode::VersionUnsupported:
    case ErrorCode::TruncatedPayload:
    case ErrorCode::TrailingBytes:
    case ErrorCode::NonFiniteValue:
    case ErrorCode::ParseError:
    case ErrorCode::EmptyModel:
    case ErrorCode::DimensionMismatch: return kIo;
    case ErrorCode::MissingModel: return kMissingModel;
    case ErrorCode::EmptyObject: return kEmptyObject;
    case ErrorCode::BadParams:
    case ErrorCode::InvalidArgument:
    case ErrorCode::PlacementFailure: return kUsage;
    default: return kInternal;
  }
}

// ---- scene-level parallelism -----------------------------------------------

/// Runs fn(0..n-1) on up to `jobs` threads. The exception of the lowest
/// failing index is rethrown, so errors do not depend on scheduling.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, jobs), n));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- shared option groups --------------------------------------------------

struct HoughFlags {
  dpa::HoughParams params;
  std::string depth = "mean";
  std::string pixels = "intersection";
  bool no_refine = false;

  void add(CLI::App& app) {
    app.add_option("--min-votes", params.min_votes, "Minimum votes for a center peak")->capture_default_str();
    app.add_option("--nms-radius", params.nms_radius, "Non-maximum suppression radius in pixels")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    app.add_option("--cos-threshold", params.cos_threshold, "Inlier cosine threshold")
        ->capture_default_str()
        ->check(CLI::Range(-1.0, 1.0));
    app.add_option("--max-hypotheses", params.max_hypotheses, "Centers per class")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--min-inliers", params.min_inliers, "Minimum unclaimed inliers per hypothesis")
        ->capture_default_str();
    app.add_flag("--no-refine", no_refine, "Keep the vote peak instead of the ray intersection");
    app.add_option("--depth", depth, "Depth reduction over inliers")
        ->capture_default_str()
        ->check(CLI::IsMember({"mean", "median"}));
    app.add_option("--pixels", pixels, "Pixels feeding the orientation")
        ->capture_default_str()
        ->check(CLI::IsMember({"intersection", "hough", "segmentation"}));
  }

  dpa::PipelineConfig config(const dpa::AggregationMethod& method) const {
    dpa::PipelineConfig cfg;
    cfg.hough = params;
    cfg.hough.refine_center = !no_refine;
    cfg.hough.depth = depth == "median" ? dpa::DepthReduction::Median : dpa::DepthReduction::Mean;
    cfg.pixels = pixels == "hough"          ? dpa::InstancePixels::HoughOnly
                 : pixels == "segmentation" ? dpa::InstancePixels::Segmentation
                                            : dpa::InstancePixels::Intersection;
    cfg.method = method;
    return cfg;
  }
};

/// Expands directories to their *.dpm files (sorted); files pass through.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    const fs::path p(a);
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p))
        if (entry.is_regular_file() && entry.path().extension() == ".dpm") found.push_back(entry.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  if (out.empty()) throw dpa::Error(dpa::ErrorCode::Io, "no input dense maps");
  return out;
}

/// Scene id from a `scene_<digits>` file stem, else the input position.
std::int64_t scene_id_for(const fs::path& path, std::size_t position) {
  static const std::regex pattern(R"(scene_(\d+))");
  std::smatch m;
  const std::string stem = path.stem().string();
  if (std::regex_match(stem, m, pattern)) return std::stoll(m[1].str());
  return static_cast<std::int64_t>(position);
}

std::string scene_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d.dpm", index);
  return buf;
}

// ---- synth -----------------------------------------------------------------

struct SynthFlags {
  int scenes = 0;
  std::string out;
  std::string gt;
  int min_objects = 1, max_objects = 3;
  int splat = 0;
  bool avoid_overlap = false;
  dpa::NoiseConfig noise;
  std::optional<double> outlier_norm;
};

int cmd_synth(const SynthFlags& f, std::uint64_t seed, unsigned jobs) {
  dpa::NoiseConfig noise = f.noise;
  noise.outlier_norm_mean = f.outlier_norm;
  noise.validate();
  if (f.min_objects > f.max_objects) throw dpa::Error(dpa::ErrorCode::BadParams, "--min-objects exceeds --max-objects");

  dpa::SceneConfig cfg;
  cfg.models = dpa::default_models(0);
  cfg.min_objects = f.min_objects;
  cfg.max_objects = f.max_objects;
  cfg.splat_radius = f.splat;
  cfg.avoid_overlap = f.avoid_overlap;

  const fs::path out_dir(f.out);
  const fs::path gt_path = f.gt.empty() ? out_dir / "gt.txt" : fs::path(f.gt);
  std::error_code ec;
  fs::create_directories(out_dir / "models", ec);
  if (ec) throw dpa::Error(dpa::ErrorCode::Io, "cannot create " + (out_dir / "models").string());
  for (const auto& m : cfg.models)
    dpa::io::write_point_model(m, out_dir / "models" / (std::to_string(m.class_id) + ".xyz"));

  const auto n = static_cast<std::size_t>(f.scenes);
  std::vector<std::vector<dpa::PoseRecord>> gts(n);
  std::vector<std::string> summaries(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const int index = static_cast<int>(i);
    const dpa::Scene scene = dpa::sample_scene(cfg, dpa::derive_seed(seed, i, 0));
    const dpa::DensePredictionMap dpm = dpa::corrupt(dpa::render_dense(scene), noise, dpa::derive_seed(seed, i, 1));
    const std::string name = scene_file_name(index);
    dpa::io::write_dpm(dpm, out_dir / name);
    gts[i] = dpa::scene_ground_truth(scene, index);

    std::size_t foreground = 0;
    for (const int label : dpa::label_image(dpm)) foreground += label > 0;
    std::string classes;
    for (const auto& r : gts[i]) classes += (classes.empty() ? "" : ",") + std::to_string(r.pose.class_id);
    summaries[i] = "scene=" + std::to_string(index) + " file=" + name + " objects=" + std::to_string(gts[i].size()) +
                   " classes=" + classes + " foreground=" + std::to_string(foreground);
    log(Level::Debug, "wrote " + (out_dir / name).string());
  });

  std::vector<dpa::PoseRecord> all;
  for (auto& g : gts) all.insert(all.end(), g.begin(), g.end());
  dpa::io::write_poses(all, gt_path);
  for (const auto& s : summaries) std::cout << s << '\n';
  log(Level::Info, "wrote " + std::to_string(n) + " scenes and " + gt_path.string());
  return kOk;
}

// ---- aggregate -------------------------------------------------------------

struct AggregateFlags {
  std::vector<std::string> in;
  std::string out;
  std::string method = "markley:norm";
  int ransac_iters = 50;
  HoughFlags hough;
};

int cmd_aggregate(const AggregateFlags& f, std::uint64_t seed, unsigned jobs) {
  const dpa::PipelineConfig cfg = f.hough.config(dpa::parse_method(f.method, f.ransac_iters));
  const auto inputs = expand_inputs(f.in);

  std::vector<dpa::FrameResult> results(inputs.size());
  std::vector<std::int64_t> ids(inputs.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    ids[i] = scene_id_for(inputs[i], i);
    const auto dpm = dpa::io::read_dpm(inputs[i]);
    results[i] = dpa::estimate_poses(dpm, cfg, dpa::derive_seed(seed, static_cast<std::uint64_t>(ids[i])));
  });

  std::vector<dpa::PoseRecord> records;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (const auto& p : results[i].poses) records.push_back({ids[i], p});
    for (const auto& fail : results[i].failures) {
      ++failures;
      log(Level::Warn, "scene " + std::to_string(ids[i]) + " class " + std::to_string(fail.class_id) + " instance " +
                           std::to_string(fail.index) + " omitted: " + fail.reason);
    }
    log(Level::Info, inputs[i].string() + ": " + std::to_string(results[i].poses.size()) + " poses");
  }
  dpa::io::write_poses(records, f.out);
  std::cout << "scenes=" << inputs.size() << " poses=" << records.size() << " omitted=" << failures
            << " method=" << dpa::format_method(cfg.method) << '\n';
  return failures ? kEmptyObject : kOk;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateFlags {
  std::string pred;
  std::string gt;
  std::string models;
  std::optional<std::string> sym;
  std::string format = "table";
};

std::set<int> parse_class_list(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw dpa::Error(dpa::ErrorCode::BadParams, "--sym: bad class id '" + item + "'");
    out.insert(v);
  }
  return out;
}

int cmd_evaluate(const EvaluateFlags& f) {
  std::optional<std::set<int>> sym_override;
  if (f.sym) sym_override = parse_class_list(*f.sym);
  const auto preds = dpa::io::read_poses(f.pred);
  const auto gts = dpa::io::read_poses(f.gt);

  std::set<int> classes;
  for (const auto* set : {&preds, &gts})
    for (const auto& r : *set) classes.insert(r.pose.class_id);
  std::map<int, dpa::PointModel> models;
  std::set<int> symmetric;
  for (const int cls : classes) {
    const fs::path path = fs::path(f.models) / (std::to_string(cls) + ".xyz");
    std::error_code ec;
    if (!fs::exists(path, ec))
      throw dpa::Error(dpa::ErrorCode::MissingModel, "class " + std::to_string(cls) + ": no model at " + path.string());
    dpa::PointModel m = dpa::io::read_point_model(path);
    m.class_id = cls;
    if (sym_override) m.symmetric = sym_override->count(cls) > 0;
    if (m.symmetric) symmetric.insert(cls);
    models.emplace(cls, std::move(m));
  }
  const auto report = dpa::evaluate_scene_set(preds, gts, models, symmetric);
  std::cout << (f.format == "kv" ? dpa::format_report_kv(report) : dpa::format_report_table(report));
  return kOk;
}

// ---- losscheck -------------------------------------------------------------

struct LossCheckFlags {
  std::string loss;
  std::size_t trials = 100;
  bool grad_check = false;
};

int cmd_losscheck(const LossCheckFlags& f, std::uint64_t seed) {
  const auto rep = dpa::run_loss_check(f.loss, f.trials, f.grad_check, seed);
  std::cout << "loss=" << rep.loss << " trials=" << rep.trials << " gradient_checks=" << rep.gradient_checks
            << " max_grad_rel_err=" << dpa::format_real(rep.max_gradient_error)
            << " max_property_violation=" << dpa::format_real(rep.max_property_violation);
  if (!rep.branch.empty()) std::cout << " ring_branch=" << rep.branch;
  std::cout << " status=" << (rep.passed ? "pass" : "fail") << '\n';
  return rep.passed ? kOk : kCheckFailed;
}

// ---- bench -----------------------------------------------------------------

struct BenchFlags {
  std::string in;
  std::string method = "markley:norm";
  int iters = 50;
  int warmup = 3;
  int ransac_iters = 50;
  HoughFlags hough;
};

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

int cmd_bench(const BenchFlags& f, std::uint64_t seed) {
  const dpa::PipelineConfig cfg = f.hough.config(dpa::parse_method(f.method, f.ransac_iters));
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };

  std::vector<double> load, hough, aggregate;
  std::size_t foreground = 0, detections = 0, poses = 0;
  for (int it = -f.warmup; it < f.iters; ++it) {
    const auto t0 = clock::now();
    const auto dpm = dpa::io::read_dpm(f.in);
    const auto t1 = clock::now();
    const auto field = dpa::DirectionField::from_dpm(dpm);
    const auto dets = dpa::detect_objects(dpm, field, cfg.hough);
    const auto t2 = clock::now();
    const auto result = dpa::aggregate_detections(dpm, field, dets, cfg, seed);
    const auto t3 = clock::now();
    if (it < 0) continue;
    load.push_back(ms(t1 - t0));
    hough.push_back(ms(t2 - t1));
    aggregate.push_back(ms(t3 - t2));
    if (it == 0) {
      for (const int label : dpa::label_image(dpm)) foreground += label > 0;
      detections = dets.size();
      poses = result.poses.size();
    }
  }
  std::cout << "method=" << dpa::format_method(cfg.method) << " iters=" << f.iters << " warmup=" << f.warmup
            << " foreground=" << foreground << " detections=" << detections << " poses=" << poses << '\n';
  auto line = [&](const char* stage, const std::vector<double>& v) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "stage=%s median_ms=%.4f p95_ms=%.4f", stage, percentile(v, 0.5),
                  percentile(v, 0.95));
    std::cout << buf << '\n';
  };
  line("load", load);
  line("hough", hough);
  line("aggregate", aggregate);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense 6D pose post-processing: synthetic data, aggregation, evaluation"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  unsigned jobs = 1;
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Random seed")->capture_default_str(); };
  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", jobs, "Worker threads over scenes")->capture_default_str()->check(CLI::PositiveNumber);
  };

  SynthFlags synth;
  auto* s = app.add_subcommand("synth", "Render synthetic scenes to dense maps with ground truth");
  s->add_option("--scenes", synth.scenes, "Number of scenes")->required()->check(CLI::PositiveNumber);
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--gt", synth.gt, "Ground-truth pose file (default <out>/gt.txt)");
  s->add_option("--min-objects", synth.min_objects, "Objects per scene, lower bound")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  s->add_option("--max-objects", synth.max_objects, "Objects per scene, upper bound")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  s->add_option("--splat", synth.splat, "Splat radius in pixels")->capture_default_str()->check(CLI::NonNegativeNumber);
  s->add_flag("--avoid-overlap", synth.avoid_overlap, "Reject placements whose projections overlap");
  s->add_option("--noise-rot", synth.noise.rot_sigma, "Rotation noise sigma [rad]")->check(CLI::NonNegativeNumber);
  s->add_option("--noise-dir", synth.noise.dir_sigma, "Center direction noise sigma [rad]")
      ->check(CLI::NonNegativeNumber);
  s->add_option("--noise-depth", synth.noise.depth_sigma, "Depth noise sigma [m]")->check(CLI::NonNegativeNumber);
  s->add_option("--outliers", synth.noise.outlier_fraction, "Outlier fraction")->check(CLI::Range(0.0, 1.0));
  s->add_option("--outlier-norm", synth.outlier_norm, "Norm of outlier quaternions")->check(CLI::PositiveNumber);
  s->add_option("--kappa", synth.noise.norm_confidence, "Norm confidence slope")->check(CLI::NonNegativeNumber);
  s->add_option("--jitter", synth.noise.norm_jitter, "Norm jitter sigma")->check(CLI::NonNegativeNumber);
  add_seed(s);
  add_jobs(s);

  AggregateFlags agg;
  auto* a = app.add_subcommand("aggregate", "Estimate poses from dense maps");
  a->add_option("--in", agg.in, "Dense map files or directories")->required()->expected(1, -1);
  a->add_option("--out", agg.out, "Output pose file")->required();
  a->add_option("--method", agg.method, "Orientation aggregation method")->capture_default_str();
  a->add_option("--ransac-iters", agg.ransac_iters, "RANSAC iterations")->capture_default_str();
  agg.hough.add(*a);
  add_seed(a);
  add_jobs(a);

  EvaluateFlags ev;
  auto* e = app.add_subcommand("evaluate", "Score predicted poses against ground truth");
  e->add_option("--pred", ev.pred, "Predicted pose file")->required();
  e->add_option("--gt", ev.gt, "Ground-truth pose file")->required();
  e->add_option("--models", ev.models, "Directory of <class>.xyz point models")->required();
  e->add_option("--sym", ev.sym, "Comma-separated symmetric class ids (default: model headers)");
  e->add_option("--format", ev.format, "Report format")->capture_default_str()->check(CLI::IsMember({"table", "kv"}));
  add_seed(e);

  LossCheckFlags lc;
  auto* l = app.add_subcommand("losscheck", "Property and gradient checks of the orientation losses");
  l->add_option("--loss", lc.loss, "qloss, ploss, sloss or smloss")->required();
  l->add_option("--trials", lc.trials, "Random instances")->capture_default_str()->check(CLI::PositiveNumber);
  l->add_flag("--grad-check", lc.grad_check, "Compare analytic gradients with finite differences");
  add_seed(l);

  BenchFlags bench;
  auto* b = app.add_subcommand("bench", "Time load, Hough and aggregation stages on one dense map");
  b->add_option("--in", bench.in, "Dense map file")->required();
  b->add_option("--method", bench.method, "Orientation aggregation method")->capture_default_str();
  b->add_option("--iters", bench.iters, "Timed runs")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--warmup", bench.warmup, "Untimed runs")->capture_default_str()->check(CLI::NonNegativeNumber);
  b->add_option("--ransac-iters", bench.ransac_iters, "RANSAC iterations")->capture_default_str();
  bench.hough.add(*b);
  add_seed(b);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_synth(synth, seed, jobs);
    if (*a) return cmd_aggregate(agg, seed, jobs);
    if (*e) return cmd_evaluate(ev);
    if (*l) return cmd_losscheck(lc, seed);
    if (*b) return cmd_bench(bench, seed);
  } catch (const dpa::Error& err) {
    log(Level::Error, err.what());
    return exit_code(err.code());
  } catch (const std::exception& err) {
    log(Level::Error, err.what());
    return kInternal;
  }
  return kUsage;
}
