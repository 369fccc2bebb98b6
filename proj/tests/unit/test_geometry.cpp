// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "radfield/geometry.hpp"
#include "radfield/rng.hpp"

#include <cmath>

using namespace radfield;

TEST_CASE("quad hit and miss") {
  const Shape q = Shape::quad(Vec3(-1, -1, 0), Vec3(2, 0, 0), Vec3(0, 2, 0), 0);
  CHECK(q.area == doctest::Approx(4.0));
  CHECK(q.normal.isApprox(Vec3::UnitZ()));
  auto hit = intersect_shape(q, 0, Ray{Vec3(0.5, 0.25, 3), Vec3(0, 0, -1)});
  REQUIRE(hit);
  CHECK(hit->t == doctest::Approx(3.0));
  CHECK(hit->point.isApprox(Vec3(0.5, 0.25, 0)));
  CHECK_FALSE(intersect_shape(q, 0, Ray{Vec3(1.5, 0, 3), Vec3(0, 0, -1)}));
  // back side is intersectable, normal unchanged
  hit = intersect_shape(q, 0, Ray{Vec3(0, 0, -2), Vec3(0, 0, 1)});
  REQUIRE(hit);
  CHECK(hit->geom_normal.isApprox(Vec3::UnitZ()));
  // t range honored
  CHECK_FALSE(intersect_shape(q, 0, Ray{Vec3(0, 0, 3), Vec3(0, 0, -1), 0.0, 2.5}));
  CHECK_FALSE(intersect_shape(q, 0, Ray{Vec3(0, 0, 3), Vec3(0, 0, -1), 3.5}));
}

TEST_CASE("triangle barycentric boundary") {
  const Shape t = Shape::triangle(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), 0);
  CHECK(t.area == doctest::Approx(0.5));
  CHECK(intersect_shape(t, 0, Ray{Vec3(0.2, 0.2, 1), Vec3(0, 0, -1)}));
  CHECK_FALSE(intersect_shape(t, 0, Ray{Vec3(0.6, 0.6, 1), Vec3(0, 0, -1)}));
}

TEST_CASE("sphere from outside and inside") {
  const Shape s = Shape::sphere(Vec3(0, 0, 0), 1.0, 0);
  CHECK(s.area == doctest::Approx(4.0 * kPi));
  auto hit = intersect_shape(s, 0, Ray{Vec3(0, 0, 5), Vec3(0, 0, -1)});
  REQUIRE(hit);
  CHECK(hit->t == doctest::Approx(4.0));
  CHECK(hit->geom_normal.isApprox(Vec3::UnitZ()));
  hit = intersect_shape(s, 0, Ray{Vec3(0, 0, 0), Vec3(1, 0, 0)});
  REQUIRE(hit);
  CHECK(hit->t == doctest::Approx(1.0));
  std::array<double, 2> ts{};
  CHECK(intersect_shape_all(s, Ray{Vec3(0, 0, 5), Vec3(0, 0, -1)}, ts) == 2);
  CHECK(ts[0] == doctest::Approx(4.0));
  CHECK(ts[1] == doctest::Approx(6.0));
  CHECK(intersect_shape_all(s, Ray{Vec3(0, 3, 5), Vec3(0, 0, -1)}, ts) == 0);
}

TEST_CASE("degenerate shapes rejected") {
  CHECK_THROWS(Shape::quad(Vec3::Zero(), Vec3(1, 0, 0), Vec3(2, 0, 0), 0));
  CHECK_THROWS(Shape::sphere(Vec3::Zero(), 0.0, 0));
}

TEST_CASE("geometry returns the nearest hit") {
  Geometry g({Shape::quad(Vec3(-1, -1, 0), Vec3(2, 0, 0), Vec3(0, 2, 0), 0),
              Shape::quad(Vec3(-1, -1, 1), Vec3(2, 0, 0), Vec3(0, 2, 0), 1)});
  auto hit = g.intersect(Ray{Vec3(0, 0, 3), Vec3(0, 0, -1)});
  REQUIRE(hit);
  CHECK(hit->shape_id == 1);
  CHECK(hit->material_id == 1);
  CHECK(g.occluded(Ray{Vec3(0, 0, 3), Vec3(0, 0, -1), 0.0, 10.0}));
  CHECK_FALSE(g.occluded(Ray{Vec3(0, 0, 3), Vec3(0, 0, -1), 0.0, 1.5}));
}

TEST_CASE("uniform surface sampling is proportional to area") {
  Geometry g({Shape::quad(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), 0),
              Shape::sphere(Vec3(0, 0, 3), 0.5, 0), Shape::triangle(Vec3(0, 0, 5), Vec3(2, 0, 5), Vec3(0, 2, 5), 0)});
  const double total = 1.0 + kPi + 2.0;
  CHECK(g.total_area() == doctest::Approx(total));
  Sampler rng(3, 0, 0);
  std::array<int, 3> counts{};
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const SurfaceSample s = g.sample_surface_uniform(rng.next2d());
    CHECK(s.pdf_area == doctest::Approx(1.0 / total));
    counts[static_cast<std::size_t>(s.shape_id)]++;
    if (s.shape_id == 1) CHECK((s.point - Vec3(0, 0, 3)).norm() == doctest::Approx(0.5));
    if (s.shape_id == 0) CHECK(s.point.z() == doctest::Approx(0.0));
  }
  const std::array<double, 3> areas{1.0, kPi, 2.0};
  for (int k = 0; k < 3; ++k) {
    const double p = areas[static_cast<std::size_t>(k)] / total;
    const double sigma = std::sqrt(n * p * (1 - p));
    CHECK(std::abs(counts[static_cast<std::size_t>(k)] - n * p) < 5.0 * sigma);
  }
}

TEST_CASE("direction warps integrate known functions") {
  Sampler rng(9, 1, 2);
  const Vec3 n = Vec3(1, 2, -0.5).normalized();
  const int count = 400000;
  double solid = 0.0, cos_int = 0.0, sphere = 0.0, cos_solid = 0.0;
  for (int i = 0; i < count; ++i) {
    const DirectionSample h = sample_hemisphere_uniform(n, rng.next2d());
    CHECK(h.pdf == doctest::Approx(0.5 * kInvPi));
    CHECK(h.direction.dot(n) >= 0.0);
    solid += 1.0 / h.pdf;
    cos_int += h.direction.dot(n) / h.pdf;
    const DirectionSample s = sample_sphere_uniform(rng.next2d());
    sphere += 1.0 / s.pdf;
    const DirectionSample c = sample_cosine_hemisphere(n, rng.next2d());
    CHECK(c.pdf == doctest::Approx(cosine_hemisphere_pdf(c.direction.dot(n))));
    cos_solid += 1.0 / c.pdf;
  }
  CHECK(solid / count == doctest::Approx(2.0 * kPi));
  CHECK(cos_int / count == doctest::Approx(kPi).epsilon(0.01));
  CHECK(sphere / count == doctest::Approx(4.0 * kPi));
  CHECK(cos_solid / count == doctest::Approx(2.0 * kPi).epsilon(0.02));
}

TEST_CASE("frames are orthonormal for all normals") {
  Sampler rng(1, 2, 3);
  for (int i = 0; i < 1000; ++i) {
    Vec3 n = sample_sphere_uniform(rng.next2d()).direction;
    if (i == 0) n = -Vec3::UnitZ();
    if (i == 1) n = Vec3::UnitZ();
    const Frame f(n);
    CHECK(std::abs(f.s.dot(f.t)) < 1e-12);
    CHECK(std::abs(f.s.dot(f.n)) < 1e-12);
    CHECK(f.s.norm() == doctest::Approx(1.0));
    CHECK(f.t.norm() == doctest::Approx(1.0));
    const Vec3 v(0.3, -0.2, 0.9);
    CHECK(f.to_world(f.to_local(v)).isApprox(v, 1e-12));
  }
}
