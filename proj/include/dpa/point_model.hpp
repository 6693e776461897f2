#pragma once

#include <string>
#include <vector>

#include "dpa/error.hpp"
#include "dpa/geometry.hpp"

namespace dpa {

/// 3D points of one object class in its own frame (meters). The symmetry flag
/// selects the symmetric loss and the ADD-S metric.
struct PointModel {
  std::vector<Vec3> points;
  bool symmetric = false;
  int class_id = 0;
  std::string name;

  std::size_t size() const { return points.size(); }

  Vec3 centroid() const {
    Vec3 c;
    for (const auto& p : points) c += p;
    return points.empty() ? c : c / static_cast<double>(points.size());
  }

  /// Largest distance of any point from the model origin.
  double radius() const {
    double r = 0;
    for (const auto& p : points) r = std::max(r, norm(p));
    return r;
  }

  void require_nonempty() const {
    if (points.empty()) throw Error(ErrorCode::EmptyModel, "point model '" + name + "' has no points");
  }
};

}  // namespace dpa
