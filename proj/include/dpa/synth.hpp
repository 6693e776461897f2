#pragma once

// Synthetic stand-in for a dense pose network: ground-truth scenes, splat
// rendering of exact dense fields, and controlled corruption of those fields.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dpa/dense_map.hpp"
#include "dpa/error.hpp"
#include "dpa/geometry.hpp"
#include "dpa/hough.hpp"
#include "dpa/point_model.hpp"
#include "dpa/pose.hpp"
#include "dpa/rng.hpp"

namespace dpa {

/// Uniformly distributed rotation (Shoemake's subgroup construction).
inline Quaternion random_rotation(CounterRng& rng) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return {b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3)};
}

inline Vec3 random_unit_vector(CounterRng& rng) {
  const double z = 2.0 * rng.uniform() - 1.0;
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

/// Rotation by `angle` about a uniformly random axis.
inline Quaternion random_rotation_of_angle(CounterRng& rng, double angle) {
  return from_axis_angle(random_unit_vector(rng), angle);
}

enum class ModelShape { Box, Cylinder, Ring };

/// Box: a, b, c = edge lengths. Cylinder: a = radius, b = height. Ring: a = radius.
struct ShapeParams {
  double a = 0.1, b = 0.1, c = 0.1;
};

/// Builds a point model. Box with n = 8 yields its corners; other boxes are
/// sampled uniformly on the surface from `seed`. Cylinders are a regular grid
/// of rings (rings * segments <= n points); rings are n equally spaced points
/// in the xy-plane. Cylinders and rings are flagged symmetric.
inline PointModel make_model(ModelShape shape, const ShapeParams& params, int n_points, std::uint64_t seed = 0,
                             int class_id = 1, std::string name = {}) {
  if (n_points < 4) throw Error(ErrorCode::BadParams, "a model needs at least 4 points");
  PointModel m;
  m.class_id = class_id;
  m.name = std::move(name);
  switch (shape) {
    case ModelShape::Box: {
      if (!(params.a > 0 && params.b > 0 && params.c > 0)) throw Error(ErrorCode::BadParams, "box edges must be positive");
      const double hx = params.a / 2, hy = params.b / 2, hz = params.c / 2;
      if (m.name.empty()) m.name = "box";
      if (n_points == 8) {
        for (int i = 0; i < 8; ++i) m.points.push_back({i & 1 ? hx : -hx, i & 2 ? hy : -hy, i & 4 ? hz : -hz});
        break;
      }
      CounterRng rng(seed, 0x626f78ULL);
      const double axy = params.a * params.b, axz = params.a * params.c, ayz = params.b * params.c;
      const double total = axy + axz + ayz;
      for (int i = 0; i < n_points; ++i) {
        const double pick = rng.uniform() * total;
        const double s = rng.uniform(-1, 1), t = rng.uniform(-1, 1);
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        if (pick < axy) m.points.push_back({s * hx, t * hy, side * hz});
        else if (pick < axy + axz) m.points.push_back({s * hx, side * hy, t * hz});
        else m.points.push_back({side * hx, s * hy, t * hz});
      }
      break;
    }
    case ModelShape::Cylinder: {
      if (!(params.a > 0 && params.b > 0)) throw Error(ErrorCode::BadParams, "cylinder radius and height must be positive");
      if (m.name.empty()) m.name = "cylinder";
      const double circumference = 2.0 * std::numbers::pi * params.a;
      const int rings = std::max(2, static_cast<int>(std::lround(std::sqrt(n_points * params.b / circumference))));
      const int segments = std::max(3, n_points / rings);
      for (int r = 0; r < rings; ++r) {
        const double z = -params.b / 2 + params.b * r / (rings - 1);
        for (int s = 0; s < segments; ++s) {
          const double phi = 2.0 * std::numbers::pi * s / segments;
          m.points.push_back({params.a * std::cos(phi), params.a * std::sin(phi), z});
        }
      }
      m.symmetric = true;
      break;
    }
    case ModelShape::Ring: {
      if (!(params.a > 0)) throw Error(ErrorCode::BadParams, "ring radius must be positive");
      if (m.name.empty()) m.name = "ring";
      for (int s = 0; s < n_points; ++s) {
        const double phi = 2.0 * std::numbers::pi * s / n_points;
        m.points.push_back({params.a * std::cos(phi), params.a * std::sin(phi), 0.0});
      }
      m.symmetric = true;
      break;
    }
  }
  return m;
}

struct SceneConfig {
  int min_objects = 1;
  int max_objects = 3;
  std::vector<PointModel> models;  // candidate objects; class ids must be >= 1
  Vec3 volume_min{-0.15, -0.10, 0.6};
  Vec3 volume_max{0.15, 0.10, 1.2};
  CameraIntrinsics camera = kYcbIntrinsics;
  bool distinct_classes = true;  // at most one instance per class
  bool avoid_overlap = false;    // projected bounding boxes must not touch
  int splat_radius = 0;          // 0 = one-pixel splats
  std::optional<Quaternion> fixed_orientation;
  int max_attempts = 100;

  int num_classes() const {
    int c = 0;
    for (const auto& m : models) c = std::max(c, m.class_id);
    return c + 1;
  }
};

struct SceneObject {
  std::size_t model_index = 0;
  PoseEstimate pose;
};

struct Scene {
  std::vector<SceneObject> objects;
  std::vector<PointModel> models;  // copy of the config's candidates
  CameraIntrinsics camera;
  int num_classes = 1;
  int splat_radius = 0;
};

namespace detail {
struct Extent {
  double u0, v0, u1, v1;  // projected bounding box
};

/// Projected bounding box of the posed model, or nullopt when a point falls
/// outside the image or the model reaches the camera plane.
inline std::optional<Extent> projected_extent(const PointModel& model, const PoseEstimate& pose,
                                              const CameraIntrinsics& k) {
  if (!(pose.t.z - model.radius() > 1e-3)) return std::nullopt;
  const Mat3 r = quat_to_rotmat(pose.q);
  Extent e{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& x : model.points) {
    const Projection p = project(r * x + pose.t, k);
    if (p.u < 0.5 || p.v < 0.5 || p.u > k.width - 1.5 || p.v > k.height - 1.5) return std::nullopt;
    e = {std::min(e.u0, p.u), std::min(e.v0, p.v), std::max(e.u1, p.u), std::max(e.v1, p.v)};
  }
  return e;
}
}  // namespace detail

/// Samples object counts, classes and poses. Positions are uniform in the
/// sampling volume and orientations uniform on SO(3). An object that leaves
/// the image (or overlaps another, when requested) is resampled, up to
/// `max_attempts` times. Object i draws from its own stream. Objects may
/// occlude each other unless `avoid_overlap` is set.
inline Scene sample_scene(const SceneConfig& cfg, std::uint64_t seed) {
  if (cfg.models.empty()) throw Error(ErrorCode::BadParams, "scene config has no models");
  if (!(cfg.volume_min.z > 0)) throw Error(ErrorCode::BadParams, "sampling volume must lie in front of the camera");
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects)
    throw Error(ErrorCode::BadParams, "bad object count range");
  if (cfg.distinct_classes && static_cast<std::size_t>(cfg.max_objects) > cfg.models.size())
    throw Error(ErrorCode::BadParams, "not enough models for distinct classes");
  if (!cfg.camera.valid()) throw Error(ErrorCode::BadParams, "invalid camera intrinsics");
  for (const auto& m : cfg.models) {
    m.require_nonempty();
    if (m.class_id < 1) throw Error(ErrorCode::BadParams, "model class ids must be >= 1");
  }

  Scene scene;
  scene.models = cfg.models;
  scene.camera = cfg.camera;
  scene.num_classes = cfg.num_classes();
  scene.splat_radius = cfg.splat_radius;

  CounterRng rng(seed, 0);
  const int count = cfg.min_objects + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1)));
  std::vector<std::size_t> pool(cfg.models.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;

  std::vector<detail::Extent> extents;
  for (int obj = 0; obj < count; ++obj) {
    std::size_t model_index;
    if (cfg.distinct_classes) {
      const std::size_t pick = static_cast<std::size_t>(rng.below(pool.size()));
      model_index = pool[pick];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    } else {
      model_index = static_cast<std::size_t>(rng.below(cfg.models.size()));
    }
    const PointModel& model = cfg.models[model_index];
    CounterRng orng(seed, 1000 + static_cast<std::uint64_t>(obj));
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      PoseEstimate pose;
      pose.class_id = model.class_id;
      pose.t = {orng.uniform(cfg.volume_min.x, cfg.volume_max.x), orng.uniform(cfg.volume_min.y, cfg.volume_max.y),
                orng.uniform(cfg.volume_min.z, cfg.volume_max.z)};
      pose.q = cfg.fixed_orientation ? normalized(*cfg.fixed_orientation) : random_rotation(orng);
      const auto ext = detail::projected_extent(model, pose, cfg.camera);
      if (!ext) continue;
      if (cfg.avoid_overlap) {
        const bool overlaps = std::any_of(extents.begin(), extents.end(), [&](const detail::Extent& e) {
          return ext->u0 <= e.u1 + 2.0 && e.u0 <= ext->u1 + 2.0 && ext->v0 <= e.v1 + 2.0 && e.v0 <= ext->v1 + 2.0;
        });
        if (overlaps) continue;
      }
      extents.push_back(*ext);
      scene.objects.push_back({model_index, pose});
      placed = true;
    }
    if (!placed) throw Error(ErrorCode::PlacementFailure, "could not place object " + std::to_string(obj));
  }
  return scene;
}

inline std::vector<PoseRecord> scene_ground_truth(const Scene& scene, std::int64_t scene_id) {
  std::vector<PoseRecord> out;
  for (const auto& o : scene.objects) out.push_back({scene_id, o.pose});
  return out;
}

/// Ground-truth dense fields by z-buffered point splatting: one-hot class
/// scores (class 0 = background), unit direction to the projected object
/// center, the object's center depth, and its unit quaternion.
inline DensePredictionMap render_dense(const Scene& scene) {
  const CameraIntrinsics& k = scene.camera;
  DensePredictionMap dpm(k.width, k.height, scene.num_classes, k);
  std::vector<double> zbuf(dpm.plane_size(), std::numeric_limits<double>::infinity());
  std::vector<int> owner(dpm.plane_size(), -1);
  const int s = scene.splat_radius;

  for (std::size_t oi = 0; oi < scene.objects.size(); ++oi) {
    const auto& obj = scene.objects[oi];
    const Mat3 r = quat_to_rotmat(obj.pose.q);
    for (const auto& x : scene.models[obj.model_index].points) {
      const Vec3 p = r * x + obj.pose.t;
      if (!(p.z > 0)) continue;
      const Projection pr = project(p, k);
      const long long col0 = detail::nearest_cell(pr.u), row0 = detail::nearest_cell(pr.v);
      for (long long row = row0 - s; row <= row0 + s; ++row)
        for (long long col = col0 - s; col <= col0 + s; ++col) {
          if (row < 0 || row >= k.height || col < 0 || col >= k.width) continue;
          const std::size_t i = dpm.index(static_cast<int>(row), static_cast<int>(col));
          if (p.z < zbuf[i]) {
            zbuf[i] = p.z;
            owner[i] = static_cast<int>(oi);
          }
        }
    }
  }

  std::vector<Projection> centers;
  for (const auto& obj : scene.objects) centers.push_back(project(obj.pose.t, k));
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      const int o = owner[dpm.index(row, col)];
      if (o < 0) {
        dpm.set_score(0, row, col, 1.0f);
        continue;
      }
      const auto& obj = scene.objects[static_cast<std::size_t>(o)];
      dpm.set_score(obj.pose.class_id, row, col, 1.0f);
      dpm.set_quaternion(row, col, obj.pose.q);
      const double ex = centers[static_cast<std::size_t>(o)].u - col, ey = centers[static_cast<std::size_t>(o)].v - row;
      const double d = std::hypot(ex, ey);
      if (d > 1e-9) dpm.set_direction(row, col, ex / d, ey / d);
      dpm.set_depth(row, col, obj.pose.t.z);
    }
  }
  return dpm;
}

struct NoiseConfig {
  double rot_sigma = 0;               // radians; perturbation angle ~ |N(0, sigma)|
  double dir_sigma = 0;               // radians
  double depth_sigma = 0;             // meters
  double outlier_fraction = 0;        // probability of a uniformly random quaternion
  std::optional<double> outlier_norm_mean;  // norm of outliers; default follows the confidence model
  double norm_confidence = 0;         // kappa in norm = 1 / (1 + kappa * theta_err)
  double norm_jitter = 0;             // std of additive Gaussian jitter on the norm

  void validate() const {
    if (!(rot_sigma >= 0 && dir_sigma >= 0 && depth_sigma >= 0 && norm_confidence >= 0 && norm_jitter >= 0))
      throw Error(ErrorCode::BadParams, "noise parameters must be nonnegative");
    if (!(outlier_fraction >= 0 && outlier_fraction < 1)) throw Error(ErrorCode::BadParams, "outlier fraction must lie in [0, 1)");
  }
};

/// Per-pixel record of what corrupt() did; NaN / 0 on background pixels.
struct CorruptionTrace {
  std::vector<float> angle_error;  // radians between corrupted and true orientation
  std::vector<std::uint8_t> outlier;
};

inline constexpr double kMinCorruptedNorm = 0.01;

/// Applies the noise model to every object pixel (nonzero quaternion). Each
/// pixel draws from its own stream, so the result depends only on `seed`.
inline DensePredictionMap corrupt(const DensePredictionMap& gt, const NoiseConfig& noise, std::uint64_t seed,
                                  CorruptionTrace* trace = nullptr) {
  noise.validate();
  DensePredictionMap out = gt;
  if (trace) {
    trace->angle_error.assign(gt.plane_size(), std::numeric_limits<float>::quiet_NaN());
    trace->outlier.assign(gt.plane_size(), 0);
  }
  for (int row = 0; row < gt.height(); ++row) {
    for (int col = 0; col < gt.width(); ++col) {
      const Quaternion raw = gt.raw_quaternion(row, col);
      if (!(norm(raw) > kZeroNorm)) continue;
      const std::size_t idx = gt.index(row, col);
      CounterRng rng(seed, idx + 1);
      const Quaternion q = normalized(raw);

      Quaternion noisy = q;
      double theta = 0;
      const bool outlier = noise.outlier_fraction > 0 && rng.uniform() < noise.outlier_fraction;
      if (outlier) {
        noisy = random_rotation(rng);
        theta = quat_angular_distance(noisy, q);
      } else if (noise.rot_sigma > 0) {
        const double angle = std::abs(rng.normal(0.0, noise.rot_sigma));
        noisy = random_rotation_of_angle(rng, angle) * q;
        theta = quat_angular_distance(noisy, q);
      }

      double n = (outlier && noise.outlier_norm_mean) ? *noise.outlier_norm_mean
                                                       : 1.0 / (1.0 + noise.norm_confidence * theta);
      if (noise.norm_jitter > 0) n += rng.normal(0.0, noise.norm_jitter);
      n = std::max(n, kMinCorruptedNorm);
      if (outlier || theta > 0 || n != 1.0) out.set_quaternion(row, col, normalized(noisy) * n);

      if (noise.dir_sigma > 0) {
        const double a = rng.normal(0.0, noise.dir_sigma);
        const double dx = gt.dir_x(row, col), dy = gt.dir_y(row, col);
        out.set_direction(row, col, std::cos(a) * dx - std::sin(a) * dy, std::sin(a) * dx + std::cos(a) * dy);
      }
      if (noise.depth_sigma > 0) out.set_depth(row, col, gt.depth(row, col) + rng.normal(0.0, noise.depth_sigma));

      if (trace) {
        trace->angle_error[idx] = static_cast<float>(theta);
        trace->outlier[idx] = outlier ? 1 : 0;
      }
    }
  }
  return out;
}

/// Default object set for synthetic runs: asymmetric boxes and symmetric
/// cylinders at YCB-like scale, 2620 points each where the shape allows.
inline std::vector<PointModel> default_models(std::uint64_t seed = 0) {
  std::vector<PointModel> models;
  models.push_back(make_model(ModelShape::Box, {0.10, 0.06, 0.16}, 2620, seed, 1, "box_a"));
  models.push_back(make_model(ModelShape::Box, {0.05, 0.14, 0.08}, 2620, seed + 1, 2, "box_b"));
  models.push_back(make_model(ModelShape::Cylinder, {0.035, 0.12}, 2620, seed, 3, "cylinder_a"));
  models.push_back(make_model(ModelShape::Box, {0.12, 0.12, 0.04}, 2620, seed + 2, 4, "box_c"));
  models.push_back(make_model(ModelShape::Cylinder, {0.05, 0.06}, 2620, seed, 5, "cylinder_b"));
  return models;
}

}  // namespace dpa
