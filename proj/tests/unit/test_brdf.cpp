// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "radfield/brdf.hpp"
#include "radfield/geometry.hpp"
#include "radfield/rng.hpp"

#include <complex>

using namespace radfield;

namespace {

MaterialDesc conductor(double roughness) {
  MaterialDesc m;
  m.name = "metal";
  m.model = MaterialModel::rough_conductor;
  m.roughness = roughness;
  m.eta = Spectrum(0.2, 0.92, 1.1);
  m.k = Spectrum(3.9, 2.45, 2.14);
  return m;
}

// Unpolarized Fresnel reflectance of a conductor from the complex index.
double fresnel_complex(double cos_i, double eta, double k) {
  using C = std::complex<double>;
  const C n(eta, k);
  const double sin2 = 1.0 - cos_i * cos_i;
  const C root = std::sqrt(n * n - sin2);
  const C rs = (cos_i - root) / (cos_i + root);
  const C rp = (n * n * cos_i - root) / (n * n * cos_i + root);
  return 0.5 * (std::norm(rs) + std::norm(rp));
}

Vec3 dir(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

// Midpoint quadrature of g(wi) over the upper hemisphere.
template <class Fn>
double hemisphere_quadrature(Fn&& g, int n_theta = 400, int n_phi = 400) {
  double sum = 0.0;
  const double dt = 0.5 * kPi / n_theta, dp = 2.0 * kPi / n_phi;
  for (int i = 0; i < n_theta; ++i) {
    const double t = (i + 0.5) * dt;
    for (int j = 0; j < n_phi; ++j) sum += g(dir(t, (j + 0.5) * dp)) * std::sin(t) * dt * dp;
  }
  return sum;
}

}  // namespace

TEST_CASE("conductor Fresnel matches the complex-index form") {
  for (double c : {1.0, 0.9, 0.5, 0.2, 0.05}) {
    for (int ch = 0; ch < 3; ++ch) {
      const MaterialDesc m = conductor(0.3);
      CHECK(ggx::fresnel_conductor(c, m.eta[ch], m.k[ch]) ==
            doctest::Approx(fresnel_complex(c, m.eta[ch], m.k[ch])).epsilon(1e-12));
    }
  }
  const MaterialDesc m = conductor(0.3);
  const Spectrum f0 = ((m.eta - 1).square() + m.k.square()) / ((m.eta + 1).square() + m.k.square());
  CHECK(specular_reflectance(m).isApprox(f0));
}

TEST_CASE("GGX distribution is normalized over projected half-vectors") {
  for (double a : {0.05, 0.2, 0.6, 1.0}) {
    const int n = 200000;
    double sum = 0.0;
    // substitute x = cos^2 for accuracy at small alpha
    for (int i = 0; i < n; ++i) {
      const double x = (i + 0.5) / n;
      const double c = std::sqrt(x);
      sum += ggx::distribution(a, c) * kPi / n;  // D cos sin dtheta dphi = D * pi * dx
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("Lambert eval, pdf and sample") {
  MaterialDesc m;
  m.albedo = Spectrum(0.2, 0.5, 0.9);
  const Frame f(Vec3::UnitZ());
  const Vec3 wo = dir(0.3, 1.0), wi = dir(0.8, -2.0);
  CHECK(eval(m, f, wi, wo).isApprox(m.albedo * kInvPi));
  CHECK(eval(m, f, -wi, wo).isZero());
  CHECK(pdf(m, f, wi, wo) == doctest::Approx(std::cos(0.8) * kInvPi));
  Sampler rng(1, 2, 3);
  for (int i = 0; i < 100; ++i) {
    const BsdfSample s = sample(m, f, wo, rng.next2d());
    REQUIRE(s.valid);
    CHECK(s.weight.isApprox(m.albedo));
    CHECK(s.pdf == doctest::Approx(pdf(m, f, s.wi, wo)));
  }
}

TEST_CASE("conductor is reciprocal and energy bounded") {
  const MaterialDesc m = conductor(0.35);
  const Frame f(Vec3(0.2, -0.1, 1.0).normalized());
  Sampler rng(4, 5, 6);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a = sample_hemisphere_uniform(f.n, rng.next2d()).direction;
    const Vec3 b = sample_hemisphere_uniform(f.n, rng.next2d()).direction;
    const Spectrum ab = eval(m, f, a, b), ba = eval(m, f, b, a);
    CHECK((ab == ba).all());
    CHECK((ab >= 0.0).all());
  }
  for (double theta : {0.1, 0.7, 1.3}) {
    const Vec3 wo = dir(theta, 0.4);
    const double albedo = hemisphere_quadrature([&](const Vec3& wi) { return eval(m, Frame(), wi, wo)[0] * wi.z(); });
    CHECK(albedo <= 1.0);
    CHECK(albedo > 0.3);
  }
}

TEST_CASE("conductor sampling agrees with pdf and eval") {
  for (double a : {0.1, 0.4, 0.9}) {
    const MaterialDesc m = conductor(a);
    const Frame f;
    for (double theta : {0.2, 1.0, 1.4}) {
      const Vec3 wo = dir(theta, 0.3);
      Sampler rng(7, static_cast<std::uint64_t>(a * 100), static_cast<std::uint64_t>(theta * 100));
      const int n = 200000;
      Spectrum mc = Spectrum::Zero();
      for (int i = 0; i < n; ++i) {
        const BsdfSample s = sample(m, f, wo, rng.next2d());
        if (!s.valid) continue;
        CHECK(s.pdf == doctest::Approx(pdf(m, f, s.wi, wo)).epsilon(1e-12));
        mc += s.weight / n;
      }
      // the sampling density integrates to at most one over the hemisphere
      const double mass = hemisphere_quadrature([&](const Vec3& wi) { return pdf(m, f, wi, wo); });
      CHECK(mass <= 1.0 + 1e-3);
      CHECK(mass > 0.5);
      for (int c = 0; c < 3; ++c) {
        const double ref = hemisphere_quadrature([&](const Vec3& wi) { return eval(m, f, wi, wo)[c] * wi.z(); });
        CHECK(mc[c] == doctest::Approx(ref).epsilon(0.02));
      }
    }
  }
}

TEST_CASE("conductor sampling histogram matches pdf") {
  const MaterialDesc m = conductor(0.3);
  const Frame f;
  const Vec3 wo = dir(0.6, 0.0);
  const int bins_t = 10, bins_p = 8, n = 400000;
  std::vector<double> observed(bins_t * bins_p, 0.0), expected(bins_t * bins_p, 0.0);
  Sampler rng(11, 0, 0);
  for (int i = 0; i < n; ++i) {
    const BsdfSample s = sample(m, f, wo, rng.next2d());
    if (!s.valid) continue;
    const double ct = s.wi.z();
    const double ph = std::atan2(s.wi.y(), s.wi.x()) + kPi;
    const int bt = std::min(bins_t - 1, static_cast<int>(ct * bins_t));
    const int bp = std::min(bins_p - 1, static_cast<int>(ph / (2 * kPi) * bins_p));
    observed[static_cast<std::size_t>(bt * bins_p + bp)] += 1;
  }
  // expected counts from the pdf integrated over each bin in (cos theta, phi)
  const int sub = 40;
  for (int bt = 0; bt < bins_t; ++bt) {
    for (int bp = 0; bp < bins_p; ++bp) {
      double e = 0.0;
      for (int i = 0; i < sub; ++i) {
        for (int j = 0; j < sub; ++j) {
          const double ct = (bt + (i + 0.5) / sub) / bins_t;
          const double ph = (bp + (j + 0.5) / sub) / bins_p * 2 * kPi - kPi;
          const double st = std::sqrt(1 - ct * ct);
          const Vec3 wi(st * std::cos(ph), st * std::sin(ph), ct);
          e += pdf(m, f, wi, wo) / (bins_t * sub) * (2 * kPi / (bins_p * sub));
        }
      }
      expected[static_cast<std::size_t>(bt * bins_p + bp)] = e * n;
    }
  }
  double chi2 = 0.0;
  int dof = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] < 5.0) continue;
    chi2 += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    ++dof;
  }
  // about 5 sigma above the mean of a chi-square with dof degrees of freedom
  CHECK(chi2 < dof + 5.0 * std::sqrt(2.0 * dof));
}

TEST_CASE("eval_dual matches central differences") {
  MaterialDesc m = conductor(0.35);
  m.roughness_param = 0;
  m.k_param = 1;
  const Frame f(Vec3(0.1, 0.3, 1.0).normalized());
  const Vec3 wo = f.to_world(dir(0.7, 0.2)), wi = f.to_world(dir(0.4, 2.5));
  const DualSpectrum d = eval_dual(m, f, wi, wo);
  REQUIRE(d.count == 4);
  CHECK(d.value.isApprox(eval(m, f, wi, wo)));
  const double h = 1e-6;
  for (int r = 0; r < 4; ++r) {
    MaterialDesc p = m, q = m;
    if (r == 0) {
      p.roughness += h;
      q.roughness -= h;
    } else {
      p.k[r - 1] += h;
      q.k[r - 1] -= h;
    }
    const Spectrum fd = (eval(p, f, wi, wo) - eval(q, f, wi, wo)) / (2 * h);
    for (int c = 0; c < 3; ++c) {
      if (std::abs(fd[c]) < 1e-12) {
        CHECK(std::abs(d.jacobian(r, c)) < 1e-9);
      } else {
        CHECK(d.jacobian(r, c) == doctest::Approx(fd[c]).epsilon(1e-6));
      }
    }
  }
  // active subset keeps only the requested rows
  const std::array<int, 1> only{2};
  const DualSpectrum s = eval_dual(m, f, wi, wo, only);
  REQUIRE(s.count == 1);
  CHECK(s.index[0] == 2);
  CHECK(s.row(0).isApprox(d.row(2)));

  MaterialDesc lam;
  lam.albedo = Spectrum(0.3, 0.6, 0.9);
  lam.albedo_param = 5;
  const DualSpectrum dl = eval_dual(lam, Frame(), dir(0.2, 0), dir(0.5, 1));
  REQUIRE(dl.count == 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(dl.index[static_cast<std::size_t>(c)] == 5 + c);
    CHECK(dl.jacobian(c, c) == doctest::Approx(kInvPi));
  }
}

TEST_CASE("emission is one-sided") {
  MaterialDesc m;
  m.emission = Spectrum(1, 2, 3);
  m.emission_param = 4;
  CHECK(emission(m, Vec3::UnitZ(), Vec3(0, 0.6, 0.8)).isApprox(m.emission));
  CHECK(emission(m, Vec3::UnitZ(), Vec3(0, 0.6, -0.8)).isZero());
  const DualSpectrum d = emission_dual(m, Vec3::UnitZ(), Vec3(0, 0, 1));
  CHECK(d.count == 3);
  CHECK(d.jacobian(1, 1) == 1.0);
  CHECK(emission_dual(m, Vec3::UnitZ(), Vec3(0, 0, -1)).jacobian.isZero());
}

TEST_CASE("two-sided materials flip the shading frame") {
  MaterialDesc m;
  m.two_sided = true;
  CHECK(shading_frame(m, Vec3::UnitZ(), -Vec3::UnitZ()).n.isApprox(-Vec3::UnitZ()));
  m.two_sided = false;
  CHECK(shading_frame(m, Vec3::UnitZ(), -Vec3::UnitZ()).n.isApprox(Vec3::UnitZ()));
}
