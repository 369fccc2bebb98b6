// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/math.hpp"

#include <array>
#include <limits>
#include <optional>
#include <vector>

namespace radfield {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_min = 0.0;
  double t_max = std::numeric_limits<double>::infinity();
};

/// Nearest intersection along a ray.
struct Hit {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 geom_normal = Vec3::UnitZ();
  Vec2 uv = Vec2::Zero();
  int shape_id = -1;
  int material_id = -1;
};

struct SurfaceSample {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double pdf_area = 0.0;
  int shape_id = -1;
};

struct DirectionSample {
  Vec3 direction = Vec3::UnitZ();
  double pdf = 0.0;
};

struct Bounds {
  Vec3 lower = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 upper = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Vec3& p) {
    lower = lower.cwiseMin(p);
    upper = upper.cwiseMax(p);
  }
  Vec3 extent() const { return upper - lower; }
  double diagonal() const { return extent().norm(); }
  bool contains(const Vec3& p, double slack = 0.0) const {
    return (p.array() >= lower.array() - slack).all() && (p.array() <= upper.array() + slack).all();
  }
};

enum class ShapeKind { quad, triangle, sphere };

/// Quads are parallelograms `p0 + u*e1 + v*e2`; triangles use the same
/// vertex/edge layout; spheres use `p0` as center. Planar shapes are
/// intersectable from both sides but carry a single geometric normal.
struct Shape {
  ShapeKind kind = ShapeKind::quad;
  int material = -1;
  Vec3 p0 = Vec3::Zero();
  Vec3 e1 = Vec3::Zero();
  Vec3 e2 = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double radius = 0.0;
  double area = 0.0;

  static Shape quad(const Vec3& corner, const Vec3& edge_u, const Vec3& edge_v, int material);
  static Shape triangle(const Vec3& a, const Vec3& b, const Vec3& c, int material);
  static Shape sphere(const Vec3& center, double radius, int material);

  Bounds bounds() const;
  /// Uniform area sample on this shape.
  SurfaceSample sample(const Vec2& u) const;
};

/// Nearest hit of a single shape, honoring [t_min, t_max].
std::optional<Hit> intersect_shape(const Shape& shape, int shape_id, const Ray& ray);

/// Every intersection distance of the ray's supporting line with the shape in
/// (t_min, t_max], ignoring all other shapes. At most two entries.
int intersect_shape_all(const Shape& shape, const Ray& ray, std::array<double, 2>& ts);

/// Flat shape list with linear traversal.
class Geometry {
 public:
  Geometry() = default;
  explicit Geometry(std::vector<Shape> shapes);

  const std::vector<Shape>& shapes() const { return shapes_; }
  const Shape& shape(int id) const { return shapes_[static_cast<std::size_t>(id)]; }
  double total_area() const { return total_area_; }
  const Bounds& bounds() const { return bounds_; }
  /// Secondary-ray offset: 1e-4 of the scene diagonal.
  double ray_epsilon() const { return 1e-4 * std::max(bounds_.diagonal(), 1e-12); }

  std::optional<Hit> intersect(const Ray& ray) const;
  bool occluded(const Ray& ray) const;

  /// Area-weighted uniform sample over the union of all surfaces.
  SurfaceSample sample_surface_uniform(const Vec2& u) const;

 private:
  std::vector<Shape> shapes_;
  std::vector<double> area_cdf_;
  double total_area_ = 0.0;
  Bounds bounds_;
};

DirectionSample sample_hemisphere_uniform(const Vec3& normal, const Vec2& u);
DirectionSample sample_sphere_uniform(const Vec2& u);
DirectionSample sample_cosine_hemisphere(const Vec3& normal, const Vec2& u);
inline double cosine_hemisphere_pdf(double cos_theta) { return cos_theta > 0.0 ? cos_theta * kInvPi : 0.0; }

}  // namespace radfield
