#pragma once

// Quaternion algebra, rotations and the pinhole camera model.
//
// Quaternions are stored (w, x, y, z) everywhere, including file formats.
// q and -q describe the same rotation; every operation here that maps a
// quaternion to a rotation is exactly invariant under that sign flip.

#include <array>
#include <cmath>
#include <numbers>
#include <ostream>

#include "dpa/error.hpp"

namespace dpa {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
constexpr double squared_norm(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline bool is_finite(const Vec3& a) { return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z); }

struct Quaternion {
  double w = 1, x = 0, y = 0, z = 0;

  constexpr Quaternion() = default;
  constexpr Quaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  static constexpr Quaternion identity() { return {1, 0, 0, 0}; }

  constexpr Quaternion operator-() const { return {-w, -x, -y, -z}; }
  constexpr Quaternion operator+(const Quaternion& o) const { return {w + o.w, x + o.x, y + o.y, z + o.z}; }
  constexpr Quaternion operator-(const Quaternion& o) const { return {w - o.w, x - o.x, y - o.y, z - o.z}; }
  constexpr Quaternion operator*(double s) const { return {w * s, x * s, y * s, z * s}; }

  // Hamilton product.
  constexpr Quaternion operator*(const Quaternion& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
  }

  constexpr Quaternion conjugate() const { return {w, -x, -y, -z}; }
  constexpr std::array<double, 4> to_array() const { return {w, x, y, z}; }
  static constexpr Quaternion from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }

  constexpr bool operator==(const Quaternion&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const Quaternion& q) {
  return os << '(' << q.w << ',' << q.x << ',' << q.y << ',' << q.z << ')';
}

constexpr double dot(const Quaternion& a, const Quaternion& b) {
  return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}
inline double norm(const Quaternion& q) { return std::sqrt(dot(q, q)); }
inline bool is_finite(const Quaternion& q) {
  return std::isfinite(q.w) && std::isfinite(q.x) && std::isfinite(q.y) && std::isfinite(q.z);
}

inline constexpr double kZeroNorm = 1e-12;
inline constexpr double kUnitTolerance = 1e-6;

struct NormalizedQuaternion {
  Quaternion q;
  double norm;  // pre-normalization Euclidean norm; the confidence weight
};

inline NormalizedQuaternion quat_normalize(const Quaternion& q) {
  const double n = norm(q);
  if (!(n > kZeroNorm)) throw Error(ErrorCode::ZeroNorm, "quaternion norm is zero");
  return {{q.w / n, q.x / n, q.y / n, q.z / n}, n};
}

inline Quaternion normalized(const Quaternion& q) { return quat_normalize(q).q; }

inline Quaternion from_axis_angle(const Vec3& axis, double angle) {
  const double n = norm(axis);
  if (!(n > kZeroNorm)) throw Error(ErrorCode::ZeroNorm, "rotation axis is zero");
  const double s = std::sin(0.5 * angle) / n;
  return {std::cos(0.5 * angle), axis.x * s, axis.y * s, axis.z * s};
}

/// Flips the sign so the first component with |c| > 1e-12 is positive.
inline Quaternion canonicalize_sign(const Quaternion& q) {
  for (double c : q.to_array()) {
    if (std::abs(c) > kZeroNorm) return c < 0 ? -q : q;
  }
  return q;
}

/// 3x3 matrix, row-major.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static constexpr Mat3 identity() { return {}; }
  static constexpr Mat3 zero() { return Mat3{{0, 0, 0, 0, 0, 0, 0, 0, 0}}; }

  constexpr double& operator()(int r, int c) { return m[r * 3 + c]; }
  constexpr double operator()(int r, int c) const { return m[r * 3 + c]; }

  constexpr Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  constexpr Mat3 operator*(const Mat3& o) const {
    Mat3 r = zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) r(i, j) += (*this)(i, k) * o(k, j);
    return r;
  }

  constexpr Mat3 operator-(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] - o.m[i];
    return r;
  }

  constexpr Mat3 transposed() const {
    return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }

  constexpr double trace() const { return m[0] + m[4] + m[8]; }

  constexpr double determinant() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  constexpr bool operator==(const Mat3&) const = default;
};

using RotationMatrix = Mat3;

inline double frobenius_squared(const Mat3& a) {
  double s = 0;
  for (double v : a.m) s += v * v;
  return s;
}

/// Rotation matrix of q. Uses the homogeneous form with s = 2/|q|^2, so
/// slightly non-unit inputs are handled without a separate normalization and
/// R(q) == R(-q) holds bit for bit.
inline RotationMatrix quat_to_rotmat(const Quaternion& q) {
  const double n2 = dot(q, q);
  if (!(n2 > kZeroNorm * kZeroNorm)) throw Error(ErrorCode::ZeroNorm, "quaternion norm is zero");
  const double s = 2.0 / n2;
  const double xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
  const double xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
  const double wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
  return Mat3{{1 - s * (yy + zz), s * (xy - wz), s * (xz + wy),  //
               s * (xy + wz), 1 - s * (xx + zz), s * (yz - wx),  //
               s * (xz - wy), s * (yz + wx), 1 - s * (xx + yy)}};
}

inline Vec3 rotate(const Quaternion& q, const Vec3& v) { return quat_to_rotmat(q) * v; }

/// Rotation angle between the rotations of q1 and q2, in [0, pi].
///
/// Equal to 2*acos(min(1, |<q1,q2>|)) for unit inputs but evaluated as
/// 4*atan2(|q1 - q2'|, |q1 + q2'|) with q2' sign-aligned to q1, which stays
/// accurate for nearly identical rotations where acos loses half the digits.
inline double quat_angular_distance(const Quaternion& q1, const Quaternion& q2) {
  const Quaternion a = normalized(q1);
  Quaternion b = normalized(q2);
  if (dot(a, b) < 0) b = -b;
  return 4.0 * std::atan2(norm(a - b), norm(a + b));
}

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height &&
           std::isfinite(fx) && std::isfinite(fy);
  }

  bool operator==(const CameraIntrinsics&) const = default;
};

/// YCB-Video's camera; the default for synthetic scenes.
inline constexpr CameraIntrinsics kYcbIntrinsics{1066.778, 1067.487, 312.9869, 241.3109, 640, 480};

struct Projection {
  double u, v, z;
};

inline Projection project(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z > 0)) throw Error(ErrorCode::BehindCamera, "point is not in front of the camera");
  return {k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy, p.z};
}

inline Vec3 backproject(double u, double v, double z, const CameraIntrinsics& k) {
  if (!(z > 0)) throw Error(ErrorCode::NonPositiveDepth, "depth must be positive");
  return {(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
}

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace dpa
