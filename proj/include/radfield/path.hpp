// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/brdf.hpp"
#include "radfield/fields.hpp"
#include "radfield/rng.hpp"
#include "radfield/scene.hpp"

#include <algorithm>

namespace radfield {

struct PathOptions {
  int max_depth = 15;  // path segments, 1 = emission at the first hit only
  int rr_depth = 5;    // roulette from this vertex on
};

/// Everything a visitor needs about one path vertex. Directions and
/// densities are primal (detached) quantities.
struct PathVertex {
  int depth = 1;  // segments from the path origin to this vertex
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  int material = -1;
  Vec3 wo = Vec3::UnitZ();
  Frame frame;
  Spectrum beta = Spectrum::Ones();  // throughput reaching this vertex
  double emission_weight = 1.0;      // MIS weight applied to Le here
  Spectrum emitted = Spectrum::Zero();

  // Emitter-sampled direction; contribution beta * f * le * light_scale.
  bool has_light = false;
  Vec3 wl = Vec3::UnitZ();
  double light_scale = 0.0;  // cos * w_light / pdf_light
  Spectrum light_f = Spectrum::Zero();
  Spectrum light_le = Spectrum::Zero();
  int light_material = -1;
  Vec3 light_normal = Vec3::UnitZ();

  // BSDF-sampled continuation; next beta = beta * weight.
  bool has_next = false;
  Vec3 wb = Vec3::UnitZ();
  double pdf_b = 0.0;
  double next_scale = 0.0;  // cos * rr / pdf
  Spectrum weight = Spectrum::Zero();
  double next_emission_weight = 1.0;
};

/// Random numbers drawn per vertex, regardless of which branches use them,
/// so perturbed scenes replay identical streams.
inline constexpr int kDrawsPerVertex = 6;

/// Unidirectional path tracer with emitter sampling and balance-heuristic MIS.
/// Calls `visit(const PathVertex&)` at every vertex and returns the radiance
/// estimate arriving along `ray`.
template <class Visitor>
Spectrum trace_path(const Scene& scene, const Ray& ray, Sampler& rng, const PathOptions& opt, int start_depth,
                    double start_emission_weight, Visitor&& visit) {
  const Geometry& geo = scene.geometry();
  const auto& emitters = scene.emitters();
  const double eps = geo.ray_epsilon();
  Spectrum radiance = Spectrum::Zero();
  auto hit = geo.intersect(ray);
  PathVertex v;
  v.wo = -ray.direction;
  v.emission_weight = start_emission_weight;
  for (int depth = start_depth; hit; ++depth) {
    v.depth = depth;
    v.point = hit->point;
    v.normal = hit->geom_normal;
    v.material = hit->material_id;
    const MaterialDesc& m = scene.material(v.material);
    v.frame = shading_frame(m, v.normal, v.wo);
    v.emitted = emission(m, v.normal, v.wo);
    radiance += v.beta * v.emitted * v.emission_weight;
    v.has_light = false;
    v.has_next = false;

    const double u_pick = rng.next1d();
    const Vec2 u_light = rng.next2d();
    const Vec2 u_bsdf = rng.next2d();
    const double u_rr = rng.next1d();
    if (depth >= opt.max_depth) {
      visit(v);
      break;
    }

    if (!emitters.empty()) {
      const auto e = std::min(static_cast<std::size_t>(u_pick * static_cast<double>(emitters.size())), emitters.size() - 1);
      const SurfaceSample y = geo.shape(emitters[e]).sample(u_light);
      const Vec3 d = y.point - v.point;
      const double dist = d.norm();
      if (dist > 1e-12) {
        const Vec3 wl = d / dist;
        const double cos_l = v.frame.n.dot(wl);
        if (cos_l > 0.0) {
          const auto lh = geo.intersect(Ray{v.point, wl, eps});
          if (lh) {
            const MaterialDesc& lm = scene.material(lh->material_id);
            const Spectrum le = emission(lm, lh->geom_normal, -wl);
            const double p_l = emitter_direction_pdf(scene, v.point, wl);
            if ((le > 0.0).any() && p_l > 0.0) {
              const double p_b = pdf(m, v.frame, wl, v.wo);
              v.has_light = true;
              v.wl = wl;
              v.light_scale = cos_l / (p_l + p_b);
              v.light_f = eval(m, v.frame, wl, v.wo);
              v.light_le = le;
              v.light_material = lh->material_id;
              v.light_normal = lh->geom_normal;
              radiance += v.beta * v.light_f * le * v.light_scale;
            }
          }
        }
      }
    }

    const BsdfSample s = sample(m, v.frame, v.wo, u_bsdf);
    if (s.valid) {
      Spectrum beta_next = v.beta * s.weight;
      double rr = 1.0;
      bool alive = true;
      if (depth >= opt.rr_depth) {
        const double q = std::clamp(luminance(beta_next), 0.05, 0.95);
        if (u_rr >= q) {
          alive = false;
        } else {
          rr = 1.0 / q;
        }
      }
      if (alive && (beta_next > 0.0).any()) {
        v.has_next = true;
        v.wb = s.wi;
        v.pdf_b = s.pdf;
        v.next_scale = v.frame.n.dot(s.wi) * rr / s.pdf;
        v.weight = s.weight * rr;
        const double p_l = emitters.empty() ? 0.0 : emitter_direction_pdf(scene, v.point, s.wi);
        v.next_emission_weight = s.pdf / (s.pdf + p_l);
      }
    }
    visit(v);
    if (!v.has_next) break;
    const Ray next{v.point, v.wb, eps};
    hit = geo.intersect(next);
    v.beta = v.beta * v.weight;
    v.wo = -v.wb;
    v.emission_weight = v.next_emission_weight;
  }
  return radiance;
}

}  // namespace radfield
