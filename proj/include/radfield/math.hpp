// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace radfield {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
/// RGB radiance, reflectance or a per-channel derivative.
using Spectrum = Eigen::Array3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInvPi = 1.0 / std::numbers::pi;

inline double luminance(const Spectrum& s) {
  return 0.2126 * s[0] + 0.7152 * s[1] + 0.0722 * s[2];
}

/// Orthonormal shading frame; `n` is the local +z axis.
struct Frame {
  Vec3 s, t, n;

  Frame() : s(Vec3::UnitX()), t(Vec3::UnitY()), n(Vec3::UnitZ()) {}

  // Duff et al. branchless basis construction.
  explicit Frame(const Vec3& normal) : n(normal) {
    const double sign = std::copysign(1.0, n.z());
    const double a = -1.0 / (sign + n.z());
    const double b = n.x() * n.y() * a;
    s = Vec3(1.0 + sign * n.x() * n.x() * a, sign * b, -sign * n.x());
    t = Vec3(b, sign + n.y() * n.y() * a, -n.y());
  }

  Vec3 to_local(const Vec3& v) const { return {v.dot(s), v.dot(t), v.dot(n)}; }
  Vec3 to_world(const Vec3& v) const { return s * v.x() + t * v.y() + n * v.z(); }
};

inline Vec3 reflect(const Vec3& w, const Vec3& h) { return 2.0 * w.dot(h) * h - w; }

}  // namespace radfield
