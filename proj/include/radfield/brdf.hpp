// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/dual.hpp"
#include "radfield/math.hpp"
#include "radfield/scene.hpp"

#include <array>
#include <span>

namespace radfield {

/// Largest number of material scalars a single BRDF or emission evaluation
/// can depend on (conductor: roughness + k rgb).
inline constexpr int kMaxLocalParams = 4;

/// A spectrum together with its derivatives w.r.t. a few scene parameters.
/// Row r of `jacobian` is d(value)/d(p[index[r]]).
struct DualSpectrum {
  Spectrum value = Spectrum::Zero();
  int count = 0;
  std::array<int, kMaxLocalParams> index{};
  Eigen::Matrix<double, kMaxLocalParams, 3> jacobian = Eigen::Matrix<double, kMaxLocalParams, 3>::Zero();

  Eigen::Array3d row(int r) const { return jacobian.row(r).transpose().array(); }
};

struct BsdfSample {
  Vec3 wi = Vec3::UnitZ();
  double pdf = 0.0;
  /// f * cos(theta_i) / pdf.
  Spectrum weight = Spectrum::Zero();
  /// False for degenerate samples (pdf < 1e-9 or below the surface); callers discard them.
  bool valid = false;
};

/// Rgb triple over a generic scalar so the same arithmetic runs on doubles
/// and on dual numbers.
template <class T>
using Rgb = std::array<T, 3>;

namespace ggx {

/// Trowbridge-Reitz distribution for a local half vector (z up).
template <class T>
T distribution(const T& alpha, double cos_h) {
  if (cos_h <= 0.0) return T(0.0);
  const T a2 = alpha * alpha;
  const T denom = cos_h * cos_h * (a2 - 1.0) + 1.0;
  return a2 / (kPi * denom * denom);
}

/// Separable Smith shadowing term for one direction.
template <class T>
T smith_g1(const T& alpha, double cos_v) {
  if (cos_v <= 0.0) return T(0.0);
  const double tan2 = std::max(0.0, 1.0 - cos_v * cos_v) / (cos_v * cos_v);
  using std::sqrt;
  return 2.0 / (1.0 + sqrt(1.0 + alpha * alpha * tan2));
}

/// Unpolarized Fresnel reflectance of a conductor with IOR eta + i k.
template <class T>
T fresnel_conductor(double cos_i, double eta, const T& k) {
  using std::sqrt;
  const double c2 = cos_i * cos_i;
  const double s2 = 1.0 - c2;
  const double s4 = s2 * s2;
  const T temp1 = eta * eta - k * k - s2;
  const T a2pb2 = sqrt(temp1 * temp1 + 4.0 * k * k * (eta * eta));
  const T a = sqrt(0.5 * (a2pb2 + temp1));
  const T term1 = a2pb2 + c2;
  const T term2 = 2.0 * cos_i * a;
  const T rs = (term1 - term2) / (term1 + term2);
  const T term3 = a2pb2 * c2 + s4;
  const T term4 = term2 * s2;
  const T rp = rs * (term3 - term4) / (term3 + term4);
  return 0.5 * (rs + rp);
}

}  // namespace ggx

/// Microfacet conductor BRDF in the local frame (no cosine factor).
template <class T>
Rgb<T> conductor_brdf(const T& alpha, const Spectrum& eta, const Rgb<T>& k, const Vec3& wi, const Vec3& wo) {
  Rgb<T> out{T(0.0), T(0.0), T(0.0)};
  if (wi.z() <= 0.0 || wo.z() <= 0.0) return out;
  const Vec3 sum = wi + wo;
  const double len = sum.norm();
  if (len == 0.0) return out;
  const Vec3 h = sum / len;
  // Symmetric in (wi, wo) so reciprocity holds bit-exactly.
  const double cos_ih = 0.5 * (wi.dot(h) + wo.dot(h));
  const T d = ggx::distribution(alpha, h.z());
  const T g = ggx::smith_g1(alpha, wi.z()) * ggx::smith_g1(alpha, wo.z());
  const T common = d * g / (4.0 * (wi.z() * wo.z()));
  for (int c = 0; c < 3; ++c) out[c] = ggx::fresnel_conductor(cos_ih, eta[c], k[c]) * common;
  return out;
}

/// BRDF value; the cosine lives in the projected-solid-angle measure.
Spectrum eval(const MaterialDesc& m, const Frame& frame, const Vec3& wi, const Vec3& wo);

/// Importance samples wi given wo: cosine-weighted for diffuse, GGX normal
/// distribution sampling for conductors. The returned pdf equals pdf(...).
BsdfSample sample(const MaterialDesc& m, const Frame& frame, const Vec3& wo, const Vec2& u);

/// Solid-angle density of sample() producing wi.
double pdf(const MaterialDesc& m, const Frame& frame, const Vec3& wi, const Vec3& wo);

/// BRDF value plus its derivatives w.r.t. the material's differentiable
/// scalars. `active` restricts the rows (global parameter indices); an empty
/// span selects all of the material's BRDF parameters.
DualSpectrum eval_dual(const MaterialDesc& m, const Frame& frame, const Vec3& wi, const Vec3& wo,
                       std::span<const int> active = {});

/// Emitted radiance toward wo: constant on the side of `normal`, zero behind.
Spectrum emission(const MaterialDesc& m, const Vec3& normal, const Vec3& wo);
DualSpectrum emission_dual(const MaterialDesc& m, const Vec3& normal, const Vec3& wo);

/// Normal-incidence conductor reflectance, used as a specular reflectance hint.
Spectrum specular_reflectance(const MaterialDesc& m);
Spectrum diffuse_reflectance(const MaterialDesc& m);

/// Shading frame for a surface hit seen from direction wo. Two-sided materials
/// flip the normal toward wo.
Frame shading_frame(const MaterialDesc& m, const Vec3& geom_normal, const Vec3& wo);

}  // namespace radfield
