#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dpa/error.hpp"
#include "dpa/geometry.hpp"

namespace dpa {

struct PixelIndex {
  int row = 0, col = 0;
  bool operator==(const PixelIndex&) const = default;
  auto operator<=>(const PixelIndex&) const = default;
};

/// Per-pixel boolean image, row-major.
struct Mask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, bool value = false)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, value ? 1 : 0) {}

  bool operator()(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col] != 0; }
  void set(int row, int col, bool v = true) { data[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }
  bool operator==(const Mask&) const = default;
};

inline Mask mask_and(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) throw Error(ErrorCode::DimensionMismatch, "mask sizes differ");
  Mask out(a.width, a.height);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] && b.data[i];
  return out;
}

/// Dense network output for one frame. Channels are stored as row-major
/// float planes in the same order as the DPM file: C class-score planes,
/// raw quaternion w,x,y,z, center direction dx,dy, depth.
///
/// Quaternions are kept unnormalized; their norm is the confidence signal.
class DensePredictionMap {
 public:
  static constexpr int kQuatPlanes = 4;
  static constexpr int kDirPlanes = 2;
  static constexpr int kDepthPlanes = 1;
  static constexpr int kFixedPlanes = kQuatPlanes + kDirPlanes + kDepthPlanes;

  DensePredictionMap() = default;
  DensePredictionMap(int width, int height, int num_classes, const CameraIntrinsics& k)
      : width_(width), height_(height), num_classes_(num_classes), k_(k) {
    if (width <= 0 || height <= 0 || num_classes <= 0)
      throw Error(ErrorCode::InvalidArgument, "map dimensions must be positive");
    k_.width = width;
    k_.height = height;
    data_.assign(plane_size() * static_cast<std::size_t>(num_planes()), 0.0f);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int num_classes() const { return num_classes_; }
  int num_planes() const { return num_classes_ + kFixedPlanes; }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }
  const CameraIntrinsics& intrinsics() const { return k_; }

  std::span<float> plane(int p) { return {data_.data() + p * plane_size(), plane_size()}; }
  std::span<const float> plane(int p) const { return {data_.data() + p * plane_size(), plane_size()}; }
  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width_ + col; }

  float score(int cls, int row, int col) const { return plane(cls)[index(row, col)]; }
  void set_score(int cls, int row, int col, float v) { plane(cls)[index(row, col)] = v; }

  Quaternion raw_quaternion(int row, int col) const {
    const std::size_t i = index(row, col);
    return {plane(quat_plane())[i], plane(quat_plane() + 1)[i], plane(quat_plane() + 2)[i],
            plane(quat_plane() + 3)[i]};
  }
  void set_quaternion(int row, int col, const Quaternion& q) {
    const std::size_t i = index(row, col);
    plane(quat_plane())[i] = static_cast<float>(q.w);
    plane(quat_plane() + 1)[i] = static_cast<float>(q.x);
    plane(quat_plane() + 2)[i] = static_cast<float>(q.y);
    plane(quat_plane() + 3)[i] = static_cast<float>(q.z);
  }

  float dir_x(int row, int col) const { return plane(dir_plane())[index(row, col)]; }
  float dir_y(int row, int col) const { return plane(dir_plane() + 1)[index(row, col)]; }
  void set_direction(int row, int col, double dx, double dy) {
    plane(dir_plane())[index(row, col)] = static_cast<float>(dx);
    plane(dir_plane() + 1)[index(row, col)] = static_cast<float>(dy);
  }

  float depth(int row, int col) const { return plane(depth_plane())[index(row, col)]; }
  void set_depth(int row, int col, double z) { plane(depth_plane())[index(row, col)] = static_cast<float>(z); }

  int quat_plane() const { return num_classes_; }
  int dir_plane() const { return num_classes_ + kQuatPlanes; }
  int depth_plane() const { return num_classes_ + kQuatPlanes + kDirPlanes; }

  /// argmax over class scores; ties resolve to the lowest class id.
  int label(int row, int col) const {
    const std::size_t i = index(row, col);
    int best = 0;
    float best_score = plane(0)[i];
    for (int c = 1; c < num_classes_; ++c) {
      if (plane(c)[i] > best_score) {
        best_score = plane(c)[i];
        best = c;
      }
    }
    return best;
  }

  /// Pixels whose segmentation argmax is `cls`.
  Mask class_mask(int cls) const {
    Mask m(width_, height_);
    for (int r = 0; r < height_; ++r)
      for (int c = 0; c < width_; ++c)
        if (label(r, c) == cls) m.set(r, c);
    return m;
  }

  bool operator==(const DensePredictionMap& o) const {
    return width_ == o.width_ && height_ == o.height_ && num_classes_ == o.num_classes_ && k_ == o.k_ &&
           data_ == o.data_;
  }

 private:
  int width_ = 0, height_ = 0, num_classes_ = 0;
  CameraIntrinsics k_{};
  std::vector<float> data_;
};

}  // namespace dpa
