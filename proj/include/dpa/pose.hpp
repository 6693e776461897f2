#pragma once

#include <cstdint>

#include "dpa/geometry.hpp"

namespace dpa {

/// Object pose in the camera frame: x_cam = R(q) x_obj + t.
struct PoseEstimate {
  int class_id = 0;
  Quaternion q;
  Vec3 t;  // meters
  double confidence = 1.0;

  bool operator==(const PoseEstimate&) const = default;
};

/// One line of a pose file: a pose tagged with the scene it belongs to.
struct PoseRecord {
  std::int64_t scene_id = 0;
  PoseEstimate pose;

  bool operator==(const PoseRecord&) const = default;
};

}  // namespace dpa
