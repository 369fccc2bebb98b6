// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace radfield {

Shape Shape::quad(const Vec3& corner, const Vec3& edge_u, const Vec3& edge_v, int material) {
  Shape s;
  s.kind = ShapeKind::quad;
  s.material = material;
  s.p0 = corner;
  s.e1 = edge_u;
  s.e2 = edge_v;
  const Vec3 c = edge_u.cross(edge_v);
  s.area = c.norm();
  if (!(s.area > 0.0)) throw std::invalid_argument("degenerate quad");
  s.normal = c / s.area;
  return s;
}

Shape Shape::triangle(const Vec3& a, const Vec3& b, const Vec3& c, int material) {
  Shape s;
  s.kind = ShapeKind::triangle;
  s.material = material;
  s.p0 = a;
  s.e1 = b - a;
  s.e2 = c - a;
  const Vec3 n = s.e1.cross(s.e2);
  const double len = n.norm();
  if (!(len > 0.0)) throw std::invalid_argument("degenerate triangle");
  s.area = 0.5 * len;
  s.normal = n / len;
  return s;
}

Shape Shape::sphere(const Vec3& center, double radius, int material) {
  if (!(radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
  Shape s;
  s.kind = ShapeKind::sphere;
  s.material = material;
  s.p0 = center;
  s.radius = radius;
  s.area = 4.0 * kPi * radius * radius;
  return s;
}

Bounds Shape::bounds() const {
  Bounds b;
  switch (kind) {
    case ShapeKind::quad:
      b.expand(p0);
      b.expand(p0 + e1);
      b.expand(p0 + e2);
      b.expand(p0 + e1 + e2);
      break;
    case ShapeKind::triangle:
      b.expand(p0);
      b.expand(p0 + e1);
      b.expand(p0 + e2);
      break;
    case ShapeKind::sphere:
      b.expand(p0 - Vec3::Constant(radius));
      b.expand(p0 + Vec3::Constant(radius));
      break;
  }
  return b;
}

SurfaceSample Shape::sample(const Vec2& u) const {
  SurfaceSample s;
  s.pdf_area = 1.0 / area;
  switch (kind) {
    case ShapeKind::quad:
      s.point = p0 + u.x() * e1 + u.y() * e2;
      s.normal = normal;
      break;
    case ShapeKind::triangle: {
      const double su = std::sqrt(u.x());
      const double b1 = 1.0 - su;
      const double b2 = u.y() * su;
      s.point = p0 + b1 * e1 + b2 * e2;
      s.normal = normal;
      break;
    }
    case ShapeKind::sphere: {
      const Vec3 d = sample_sphere_uniform(u).direction;
      s.point = p0 + radius * d;
      s.normal = d;
      break;
    }
  }
  return s;
}

namespace {

// Parallelogram / triangle test in the Moller-Trumbore form.
inline bool planar_hit(const Shape& s, const Ray& ray, double& t, double& u, double& v) {
  const Vec3 pvec = ray.direction.cross(s.e2);
  const double det = s.e1.dot(pvec);
  if (det == 0.0) return false;
  const double inv = 1.0 / det;
  const Vec3 tvec = ray.origin - s.p0;
  u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qvec = tvec.cross(s.e1);
  v = ray.direction.dot(qvec) * inv;
  if (v < 0.0) return false;
  if (s.kind == ShapeKind::quad ? v > 1.0 : u + v > 1.0) return false;
  t = s.e2.dot(qvec) * inv;
  return true;
}

// Roots of |o + t d - c|^2 = r^2 for unit d, in ascending order.
inline bool sphere_roots(const Shape& s, const Ray& ray, double& t0, double& t1) {
  const Vec3 oc = ray.origin - s.p0;
  const double b = oc.dot(ray.direction);
  // Distance-to-line form keeps precision when the origin is far away.
  const Vec3 perp = oc - b * ray.direction;
  const double disc = s.radius * s.radius - perp.squaredNorm();
  if (disc < 0.0) return false;
  const double root = std::sqrt(disc);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double q = b > 0.0 ? -b - root : -b + root;
  if (q == 0.0) {
    t0 = t1 = -b;
  } else {
    t0 = q;
    t1 = c / q;
  }
  if (t0 > t1) std::swap(t0, t1);
  return true;
}

}  // namespace

std::optional<Hit> intersect_shape(const Shape& shape, int shape_id, const Ray& ray) {
  double t = 0.0;
  Hit hit;
  if (shape.kind == ShapeKind::sphere) {
    double t0 = 0.0, t1 = 0.0;
    if (!sphere_roots(shape, ray, t0, t1)) return std::nullopt;
    if (t0 > ray.t_min && t0 <= ray.t_max) {
      t = t0;
    } else if (t1 > ray.t_min && t1 <= ray.t_max) {
      t = t1;
    } else {
      return std::nullopt;
    }
    hit.point = ray.origin + t * ray.direction;
    hit.geom_normal = (hit.point - shape.p0).normalized();
    const Vec3& n = hit.geom_normal;
    hit.uv = Vec2(std::atan2(n.y(), n.x()) * 0.5 * kInvPi + 0.5, std::acos(std::clamp(n.z(), -1.0, 1.0)) * kInvPi);
  } else {
    double u = 0.0, v = 0.0;
    if (!planar_hit(shape, ray, t, u, v)) return std::nullopt;
    if (!(t > ray.t_min && t <= ray.t_max)) return std::nullopt;
    hit.point = ray.origin + t * ray.direction;
    hit.geom_normal = shape.normal;
    hit.uv = Vec2(u, v);
  }
  hit.t = t;
  hit.shape_id = shape_id;
  hit.material_id = shape.material;
  return hit;
}

int intersect_shape_all(const Shape& shape, const Ray& ray, std::array<double, 2>& ts) {
  int count = 0;
  if (shape.kind == ShapeKind::sphere) {
    double t0 = 0.0, t1 = 0.0;
    if (!sphere_roots(shape, ray, t0, t1)) return 0;
    if (t0 > ray.t_min && t0 <= ray.t_max) ts[count++] = t0;
    if (t1 != t0 && t1 > ray.t_min && t1 <= ray.t_max) ts[count++] = t1;
  } else {
    double t = 0.0, u = 0.0, v = 0.0;
    if (planar_hit(shape, ray, t, u, v) && t > ray.t_min && t <= ray.t_max) ts[count++] = t;
  }
  return count;
}

Geometry::Geometry(std::vector<Shape> shapes) : shapes_(std::move(shapes)) {
  area_cdf_.reserve(shapes_.size());
  for (const Shape& s : shapes_) {
    total_area_ += s.area;
    area_cdf_.push_back(total_area_);
    const Bounds b = s.bounds();
    bounds_.expand(b.lower);
    bounds_.expand(b.upper);
  }
}

std::optional<Hit> Geometry::intersect(const Ray& ray) const {
  std::optional<Hit> best;
  Ray r = ray;
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    if (auto h = intersect_shape(shapes_[i], static_cast<int>(i), r)) {
      r.t_max = h->t;
      best = h;
    }
  }
  return best;
}

bool Geometry::occluded(const Ray& ray) const {
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    if (intersect_shape(shapes_[i], static_cast<int>(i), ray)) return true;
  }
  return false;
}

SurfaceSample Geometry::sample_surface_uniform(const Vec2& u) const {
  if (shapes_.empty() || !(total_area_ > 0.0)) throw std::logic_error("sampling an empty scene");
  const double target = u.x() * total_area_;
  auto it = std::upper_bound(area_cdf_.begin(), area_cdf_.end(), target);
  if (it == area_cdf_.end()) --it;
  const auto idx = static_cast<std::size_t>(it - area_cdf_.begin());
  const double lo = idx == 0 ? 0.0 : area_cdf_[idx - 1];
  const double ux = std::clamp((target - lo) / shapes_[idx].area, 0.0, std::nextafter(1.0, 0.0));
  SurfaceSample s = shapes_[idx].sample(Vec2(ux, u.y()));
  s.pdf_area = 1.0 / total_area_;
  s.shape_id = static_cast<int>(idx);
  return s;
}

DirectionSample sample_hemisphere_uniform(const Vec3& normal, const Vec2& u) {
  const double z = u.x();
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * kPi * u.y();
  const Frame frame(normal);
  return {frame.to_world(Vec3(r * std::cos(phi), r * std::sin(phi), z)), 0.5 * kInvPi};
}

DirectionSample sample_sphere_uniform(const Vec2& u) {
  const double z = 1.0 - 2.0 * u.x();
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * kPi * u.y();
  return {Vec3(r * std::cos(phi), r * std::sin(phi), z), 0.25 * kInvPi};
}

DirectionSample sample_cosine_hemisphere(const Vec3& normal, const Vec2& u) {
  const double r = std::sqrt(u.x());
  const double phi = 2.0 * kPi * u.y();
  const double z = std::sqrt(std::max(0.0, 1.0 - u.x()));
  const Frame frame(normal);
  return {frame.to_world(Vec3(r * std::cos(phi), r * std::sin(phi), z)), z * kInvPi};
}

}  // namespace radfield
