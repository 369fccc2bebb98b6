// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/brdf.hpp"

#include <algorithm>

namespace radfield {

namespace {

using D4 = Dual<kMaxLocalParams>;

double conductor_pdf_local(double alpha, const Vec3& wi, const Vec3& wo) {
  if (wi.z() <= 0.0 || wo.z() <= 0.0) return 0.0;
  const Vec3 sum = wi + wo;
  const double len = sum.norm();
  if (len == 0.0) return 0.0;
  const Vec3 h = sum / len;
  const double wo_h = wo.dot(h);
  if (wo_h <= 0.0) return 0.0;
  return ggx::distribution(alpha, h.z()) * h.z() / (4.0 * wo_h);
}

Spectrum to_spectrum(const Rgb<double>& v) { return {v[0], v[1], v[2]}; }

}  // namespace

Frame shading_frame(const MaterialDesc& m, const Vec3& geom_normal, const Vec3& wo) {
  if (m.two_sided && geom_normal.dot(wo) < 0.0) return Frame(-geom_normal);
  return Frame(geom_normal);
}

Spectrum eval(const MaterialDesc& m, const Frame& frame, const Vec3& wi, const Vec3& wo) {
  const Vec3 li = frame.to_local(wi);
  const Vec3 lo = frame.to_local(wo);
  if (li.z() <= 0.0 || lo.z() <= 0.0) return Spectrum::Zero();
  if (m.model == MaterialModel::diffuse) return m.albedo * kInvPi;
  const Rgb<double> k{m.k[0], m.k[1], m.k[2]};
  return to_spectrum(conductor_brdf(m.roughness, m.eta, k, li, lo));
}

double pdf(const MaterialDesc& m, const Frame& frame, const Vec3& wi, const Vec3& wo) {
  const Vec3 li = frame.to_local(wi);
  const Vec3 lo = frame.to_local(wo);
  if (li.z() <= 0.0 || lo.z() <= 0.0) return 0.0;
  if (m.model == MaterialModel::diffuse) return li.z() * kInvPi;
  return conductor_pdf_local(m.roughness, li, lo);
}

BsdfSample sample(const MaterialDesc& m, const Frame& frame, const Vec3& wo, const Vec2& u) {
  BsdfSample s;
  const Vec3 lo = frame.to_local(wo);
  if (lo.z() <= 0.0) return s;
  Vec3 li;
  if (m.model == MaterialModel::diffuse) {
    const double r = std::sqrt(u.x());
    const double phi = 2.0 * kPi * u.y();
    li = Vec3(r * std::cos(phi), r * std::sin(phi), std::sqrt(std::max(0.0, 1.0 - u.x())));
    if (li.z() <= 0.0) return s;
    s.wi = frame.to_world(li);
    s.pdf = li.z() * kInvPi;
    s.weight = m.albedo;
  } else {
    const double a = m.roughness;
    const double tan2 = a * a * u.x() / std::max(1.0 - u.x(), 1e-300);
    const double cos_h = 1.0 / std::sqrt(1.0 + tan2);
    const double sin_h = std::sqrt(std::max(0.0, 1.0 - cos_h * cos_h));
    const double phi = 2.0 * kPi * u.y();
    const Vec3 h(sin_h * std::cos(phi), sin_h * std::sin(phi), cos_h);
    li = reflect(lo, h);
    if (li.z() <= 0.0) return s;
    s.wi = frame.to_world(li);
    // Re-derive the density from the returned direction so pdf() agrees.
    s.pdf = pdf(m, frame, s.wi, wo);
    if (!(s.pdf >= 1e-9)) return s;
    s.weight = eval(m, frame, s.wi, wo) * frame.to_local(s.wi).z() / s.pdf;
  }
  s.valid = s.pdf >= 1e-9;
  return s;
}

DualSpectrum eval_dual(const MaterialDesc& m, const Frame& frame, const Vec3& wi, const Vec3& wo,
                       std::span<const int> active) {
  // Local slot -> global parameter index.
  std::array<int, kMaxLocalParams> global{};
  global.fill(-1);
  if (m.model == MaterialModel::diffuse) {
    if (m.albedo_param >= 0) {
      for (int c = 0; c < 3; ++c) global[static_cast<std::size_t>(c)] = m.albedo_param + c;
    }
  } else {
    if (m.roughness_param >= 0) global[0] = m.roughness_param;
    if (m.k_param >= 0) {
      for (int c = 0; c < 3; ++c) global[static_cast<std::size_t>(c + 1)] = m.k_param + c;
    }
  }
  auto selected = [&](int g) {
    if (g < 0) return false;
    return active.empty() || std::find(active.begin(), active.end(), g) != active.end();
  };

  DualSpectrum out;
  std::array<int, kMaxLocalParams> slot_of_row{};
  for (int s = 0; s < kMaxLocalParams; ++s) {
    if (selected(global[static_cast<std::size_t>(s)])) {
      slot_of_row[static_cast<std::size_t>(out.count)] = s;
      out.index[static_cast<std::size_t>(out.count)] = global[static_cast<std::size_t>(s)];
      ++out.count;
    }
  }
  auto seeded = [&](double v, int slot) {
    return selected(global[static_cast<std::size_t>(slot)]) ? D4::variable(v, slot) : D4(v);
  };

  const Vec3 li = frame.to_local(wi);
  const Vec3 lo = frame.to_local(wo);
  Rgb<D4> f{D4(0.0), D4(0.0), D4(0.0)};
  if (li.z() > 0.0 && lo.z() > 0.0) {
    if (m.model == MaterialModel::diffuse) {
      for (int c = 0; c < 3; ++c) f[static_cast<std::size_t>(c)] = seeded(m.albedo[c], c) * kInvPi;
    } else {
      const D4 alpha = seeded(m.roughness, 0);
      const Rgb<D4> k{seeded(m.k[0], 1), seeded(m.k[1], 2), seeded(m.k[2], 3)};
      f = conductor_brdf(alpha, m.eta, k, li, lo);
    }
  }
  for (int c = 0; c < 3; ++c) {
    const D4& fc = f[static_cast<std::size_t>(c)];
    out.value[c] = fc.v;
    for (int r = 0; r < out.count; ++r) out.jacobian(r, c) = fc.d[slot_of_row[static_cast<std::size_t>(r)]];
  }
  return out;
}

Spectrum emission(const MaterialDesc& m, const Vec3& normal, const Vec3& wo) {
  if (normal.dot(wo) <= 0.0) return Spectrum::Zero();
  return m.emission;
}

DualSpectrum emission_dual(const MaterialDesc& m, const Vec3& normal, const Vec3& wo) {
  DualSpectrum out;
  const bool front = normal.dot(wo) > 0.0;
  if (front) out.value = m.emission;
  if (m.emission_param >= 0) {
    out.count = 3;
    for (int c = 0; c < 3; ++c) {
      out.index[static_cast<std::size_t>(c)] = m.emission_param + c;
      if (front) out.jacobian(c, c) = 1.0;
    }
  }
  return out;
}

Spectrum specular_reflectance(const MaterialDesc& m) {
  if (m.model != MaterialModel::rough_conductor) return Spectrum::Zero();
  const Spectrum num = (m.eta - 1.0).square() + m.k.square();
  const Spectrum den = (m.eta + 1.0).square() + m.k.square();
  return num / den;
}

Spectrum diffuse_reflectance(const MaterialDesc& m) {
  return m.model == MaterialModel::diffuse ? m.albedo : Spectrum::Zero();
}

}  // namespace radfield
