// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/fields.hpp"
#include "radfield/image.hpp"
#include "radfield/scene.hpp"

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace radfield::analytic {

/// Irradiance at x (surface normal n) from a uniform Lambertian polygon of
/// radiance `radiance`, by Lambert's edge-sum formula. The polygon must lie
/// entirely above the tangent plane of x.
double polygon_irradiance(const Vec3& x, const Vec3& n, std::span<const Vec3> polygon, double radiance);

/// Nodes and weights of n-point Gauss-Legendre quadrature on [0, 1].
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n);

/// Closed-form solution of a single-bounce scene: one diffuse receiver with a
/// differentiable albedo, lit only by quad emitters whose own albedo is zero.
class DirectScene {
 public:
  /// Throws SceneError when the scene does not have that structure.
  explicit DirectScene(const Scene& scene);

  /// Irradiance at a receiver point, per channel.
  Spectrum irradiance(const Vec3& x) const;
  /// Outgoing radiance toward wo at a surface point.
  Spectrum radiance(const SurfacePoint& x, const Vec3& wo) const;
  /// dL_c/d(albedo_c) per channel (irradiance / pi on the receiver's front).
  Spectrum albedo_derivative(const SurfacePoint& x, const Vec3& wo) const;

  /// Box-filtered pixel values by Gauss-Legendre quadrature over the film.
  Image image(int order = 4) const;
  /// Pixel c-channel of slice albedo_param() + c, stored as one RGB image.
  Image albedo_derivative_image(int order = 4) const;

  /// Network parts (L - E) of the exact primal and differential fields.
  QueryFn primal_solution() const;
  QueryFn diff_solution() const;

  int receiver_material() const { return receiver_; }
  int albedo_param() const { return albedo_param_; }

 private:
  const Scene* scene_;
  int receiver_ = -1;
  int receiver_shape_ = -1;
  int albedo_param_ = -1;
  struct Light {
    std::array<Vec3, 4> corners;
    Spectrum radiance;
  };
  std::vector<Light> lights_;
};

}  // namespace radfield::analytic
