#pragma once

// Dense prediction map -> object poses: per-class Hough voting for centers and
// translations, then orientation aggregation over each hypothesis' pixels.

#include <cstdint>
#include <string>
#include <vector>

#include "dpa/aggregation.hpp"
#include "dpa/dense_map.hpp"
#include "dpa/hough.hpp"
#include "dpa/pose.hpp"
#include "dpa/rng.hpp"

namespace dpa {

/// Which pixels feed the orientation of a hypothesis.
enum class InstancePixels {
  Intersection,  // Hough inliers among the class's segmentation pixels
  HoughOnly,     // Hough inliers among all pixels with a direction
  Segmentation,  // every pixel of the class
};

struct PipelineConfig {
  HoughParams hough;
  AggregationMethod method = MarkleyAverage{Weighting::Norm};
  InstancePixels pixels = InstancePixels::Intersection;
};

struct Detection {
  int class_id = 0;
  std::size_t index = 0;  // hypothesis index within the class
  CenterHypothesis center;
};

struct ObjectFailure {
  int class_id = 0;
  std::size_t index = 0;
  std::string reason;
};

struct FrameResult {
  std::vector<PoseEstimate> poses;
  std::vector<ObjectFailure> failures;
};

/// Segmentation argmax image.
inline std::vector<int> label_image(const DensePredictionMap& dpm) {
  std::vector<int> labels(dpm.plane_size());
  for (int r = 0; r < dpm.height(); ++r)
    for (int c = 0; c < dpm.width(); ++c) labels[dpm.index(r, c)] = dpm.label(r, c);
  return labels;
}

/// Center hypotheses for every foreground class, ordered by class id then votes.
inline std::vector<Detection> detect_objects(const DensePredictionMap& dpm, const DirectionField& field,
                                             const HoughParams& params) {
  const auto labels = label_image(dpm);
  std::vector<Detection> out;
  for (int cls = 1; cls < dpm.num_classes(); ++cls) {
    Mask mask(dpm.width(), dpm.height());
    bool any = false;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) {
        mask.data[i] = 1;
        any = true;
      }
    if (!any) continue;
    auto hyps = detect_centers(field, dpm.plane(dpm.depth_plane()), mask, dpm.intrinsics(), params);
    for (std::size_t h = 0; h < hyps.size(); ++h) out.push_back({cls, h, std::move(hyps[h])});
  }
  return out;
}

/// Seed of the RANSAC stream for one hypothesis; independent of evaluation order.
inline std::uint64_t object_seed(std::uint64_t seed, int class_id, std::size_t index) {
  return derive_seed(seed, static_cast<std::uint64_t>(class_id), index);
}

/// Orientation for every detection. Detections without valid orientation
/// pixels are reported in `failures` and omitted from `poses`.
inline FrameResult aggregate_detections(const DensePredictionMap& dpm, const DirectionField& field,
                                        const std::vector<Detection>& detections, const PipelineConfig& cfg,
                                        std::uint64_t seed) {
  FrameResult result;
  const Weighting weighting = method_weighting(cfg.method);
  for (const auto& det : detections) {
    Mask pixels;
    switch (cfg.pixels) {
      case InstancePixels::Intersection: pixels = det.center.inliers; break;
      case InstancePixels::HoughOnly:
        pixels = inlier_mask(det.center.u, det.center.v, field, Mask(dpm.width(), dpm.height(), true),
                             cfg.hough.cos_threshold);
        break;
      case InstancePixels::Segmentation: pixels = dpm.class_mask(det.class_id); break;
    }
    try {
      const PredictionSet set = gather_object_predictions(dpm, pixels, weighting, det.class_id);
      PoseEstimate pose;
      pose.class_id = det.class_id;
      pose.q = aggregate_orientation(set, cfg.method, object_seed(seed, det.class_id, det.index));
      pose.t = det.center.translation;
      pose.confidence = det.center.votes;
      result.poses.push_back(pose);
    } catch (const Error& e) {
      result.failures.push_back({det.class_id, det.index, e.what()});
    }
  }
  return result;
}

inline FrameResult estimate_poses(const DensePredictionMap& dpm, const PipelineConfig& cfg, std::uint64_t seed) {
  const DirectionField field = DirectionField::from_dpm(dpm);
  return aggregate_detections(dpm, field, detect_objects(dpm, field, cfg.hough), cfg, seed);
}

}  // namespace dpa
