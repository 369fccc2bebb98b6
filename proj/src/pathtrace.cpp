// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/pathtrace.hpp"

#include "radfield/parallel.hpp"
#include "radfield/path.hpp"

#include <stdexcept>
#include <string>

namespace radfield {

namespace {

using DualRows = Eigen::Matrix<double, Eigen::Dynamic, 3, 0, kMaxDualParams, 3>;

constexpr std::uint64_t kRhsStream = 0x726873;

Ray pixel_ray(const Camera& cam, int x, int y, Sampler& rng) {
  const Vec2 u = rng.next2d();
  return cam.generate_ray(x + u.x(), y + u.y());
}

struct FirstHits {
  std::vector<FieldQuery> queries;
  std::vector<Eigen::Index> pixel;
};

// Primary hits of rows [y0, y1), sample-major within each pixel.
FirstHits first_hits(const Scene& scene, int y0, int y1, int spp, std::uint64_t seed) {
  const Camera& cam = scene.camera();
  FirstHits out;
  for (int y = y0; y < y1; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Index pix = static_cast<Eigen::Index>(y) * cam.width + x;
      for (int s = 0; s < spp; ++s) {
        Sampler rng(seed, static_cast<std::uint64_t>(pix), static_cast<std::uint64_t>(s));
        const Ray ray = pixel_ray(cam, x, y, rng);
        const auto hit = scene.geometry().intersect(ray);
        if (!hit) continue;
        out.queries.push_back({surface_point(*hit), -ray.direction});
        out.pixel.push_back(pix);
      }
    }
  }
  return out;
}

int rows_per_chunk(const Camera& cam, int spp) {
  return std::max(1, 8192 / std::max(1, cam.width * spp));
}

void check_spp(int spp) {
  if (spp < 1) throw std::invalid_argument("spp must be >= 1");
}

void add_rows(DualRows& dst, const DualSpectrum& d, const Spectrum& scale, const std::vector<char>& active) {
  for (int r = 0; r < d.count; ++r) {
    const int p = d.index[static_cast<std::size_t>(r)];
    if (!active[static_cast<std::size_t>(p)]) continue;
    dst.row(p).array() += d.row(r).transpose() * scale.transpose();
  }
}

GradientImage make_gradient(const Camera& cam, int n) {
  GradientImage g;
  g.slices.assign(static_cast<std::size_t>(n), Image(cam.width, cam.height));
  return g;
}

}  // namespace

Image render_primal(const Scene& scene, int spp, int max_depth, std::uint64_t seed, int rr_depth) {
  check_spp(spp);
  if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
  const Camera& cam = scene.camera();
  Image img(cam.width, cam.height);
  const PathOptions opt{max_depth, rr_depth};
  const double inv = 1.0 / spp;
  parallel_for(static_cast<std::size_t>(img.pixel_count()), [&](std::size_t i) {
    const auto pix = static_cast<Eigen::Index>(i);
    const int x = static_cast<int>(pix % cam.width);
    const int y = static_cast<int>(pix / cam.width);
    Spectrum acc = Spectrum::Zero();
    for (int s = 0; s < spp; ++s) {
      Sampler rng(seed, i, static_cast<std::uint64_t>(s));
      const Ray ray = pixel_ray(cam, x, y, rng);
      acc += trace_path(scene, ray, rng, opt, 1, 1.0, [](const PathVertex&) {});
    }
    img.set(pix, acc * inv);
  });
  img.meta = {spp, seed, "primal"};
  return img;
}

template <class S>
Image render_field_lhs(const Scene& scene, const PrimalField<S>& field, int spp, std::uint64_t seed) {
  check_spp(spp);
  const Camera& cam = scene.camera();
  Image img(cam.width, cam.height);
  const int step = rows_per_chunk(cam, spp);
  for (int y0 = 0; y0 < cam.height; y0 += step) {
    const FirstHits h = first_hits(scene, y0, std::min(cam.height, y0 + step), spp, seed);
    const Eigen::MatrixXd out = field.evaluate(h.queries);
    for (std::size_t j = 0; j < h.queries.size(); ++j) {
      const FieldQuery& q = h.queries[j];
      const Spectrum e = emission(scene.material(q.x.material_id), q.x.normal, q.wo);
      const Spectrum l = (out.col(static_cast<Eigen::Index>(j)).array() + e).max(0.0);
      img.data().col(h.pixel[j]) += (l / spp).matrix();
    }
  }
  img.meta = {spp, seed, "field-lhs"};
  return img;
}

template <class S>
GradientImage render_field_lhs(const Scene& scene, const DiffField<S>& field, int spp, std::uint64_t seed) {
  check_spp(spp);
  const Camera& cam = scene.camera();
  const int n = field.param_count();
  GradientImage g = make_gradient(cam, n);
  const int step = rows_per_chunk(cam, spp);
  for (int y0 = 0; y0 < cam.height; y0 += step) {
    const FirstHits h = first_hits(scene, y0, std::min(cam.height, y0 + step), spp, seed);
    const Eigen::MatrixXd out = field.evaluate(h.queries);
    for (std::size_t j = 0; j < h.queries.size(); ++j) {
      const FieldQuery& q = h.queries[j];
      const DualSpectrum de = emission_dual(scene.material(q.x.material_id), q.x.normal, q.wo);
      for (int p = 0; p < n; ++p) {
        Spectrum v = out.col(static_cast<Eigen::Index>(j)).segment<3>(3 * p).array();
        for (int r = 0; r < de.count; ++r) {
          if (de.index[static_cast<std::size_t>(r)] == p) v += de.row(r);
        }
        g.slices[static_cast<std::size_t>(p)].data().col(h.pixel[j]) += (v / spp).matrix();
      }
    }
  }
  for (Image& s : g.slices) s.meta = {spp, seed, "field-lhs"};
  return g;
}

template <class S>
Image render_field_rhs(const Scene& scene, const PrimalField<S>& field, int spp, int incident, std::uint64_t seed) {
  check_spp(spp);
  const Camera& cam = scene.camera();
  Image img(cam.width, cam.height);
  const int step = rows_per_chunk(cam, spp);
  for (int y0 = 0; y0 < cam.height; y0 += step) {
    const FirstHits h = first_hits(scene, y0, std::min(cam.height, y0 + step), spp, seed);
    if (h.queries.empty()) continue;
    const ResidualBatch b = rhs_batch(scene, h.queries, incident, mix64(seed ^ kRhsStream), static_cast<std::uint64_t>(y0));
    const Eigen::MatrixXd rhs = primal_rhs(b, field.evaluate(b.queries));
    for (std::size_t j = 0; j < h.queries.size(); ++j) {
      img.data().col(h.pixel[j]) += rhs.col(static_cast<Eigen::Index>(j)) / spp;
    }
  }
  img.meta = {spp, seed, "field-rhs"};
  return img;
}

template <class S>
GradientImage render_field_rhs(const Scene& scene, const DiffField<S>& field, const PrimalField<S>& primal, int spp,
                               int incident, std::uint64_t seed) {
  check_spp(spp);
  if (primal.network().output_width() != 3) throw std::invalid_argument("RHS gradient rendering needs a primal field");
  const Camera& cam = scene.camera();
  const int n = field.param_count();
  GradientImage g = make_gradient(cam, n);
  const int step = rows_per_chunk(cam, spp);
  for (int y0 = 0; y0 < cam.height; y0 += step) {
    const FirstHits h = first_hits(scene, y0, std::min(cam.height, y0 + step), spp, seed);
    if (h.queries.empty()) continue;
    const ResidualBatch b = rhs_batch(scene, h.queries, incident, mix64(seed ^ kRhsStream), static_cast<std::uint64_t>(y0));
    const Eigen::MatrixXd rhs = diff_rhs(b, field.evaluate(b.queries), primal.evaluate(b.queries));
    for (std::size_t j = 0; j < h.queries.size(); ++j) {
      for (int p = 0; p < n; ++p) {
        g.slices[static_cast<std::size_t>(p)].data().col(h.pixel[j]) +=
            rhs.col(static_cast<Eigen::Index>(j)).segment<3>(3 * p) / spp;
      }
    }
  }
  for (Image& s : g.slices) s.meta = {spp, seed, "field-rhs"};
  return g;
}

Image fd_gradient(const Scene& scene, int param, double eps, int spp, std::uint64_t seed, int max_depth) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  if (param < 0 || param >= scene.param_count()) throw std::invalid_argument("parameter index out of range");
  const double p0 = scene.get_param(param);
  const auto [lo, hi] = scene.param_range(param);
  if (p0 - eps < lo || p0 + eps > hi) {
    throw std::invalid_argument("finite-difference stencil for '" + scene.params().scalar_name(param) +
                                "' leaves its valid range");
  }
  Scene plus = scene;
  Scene minus = scene;
  plus.set_param(param, p0 + eps);
  minus.set_param(param, p0 - eps);
  // Roulette decisions depend on throughput and would desynchronize the stencil.
  const Image a = render_primal(plus, spp, max_depth, seed, max_depth);
  const Image b = render_primal(minus, spp, max_depth, seed, max_depth);
  Image g(a.width(), a.height());
  g.data() = (a.data() - b.data()) / (2.0 * eps);
  g.meta = {spp, seed, "fd"};
  return g;
}

GradientImage forward_dual_gradient(const Scene& scene, std::span<const int> active, int spp, int max_depth,
                                    std::uint64_t seed, int rr_depth) {
  check_spp(spp);
  const int n = scene.param_count();
  if (n > kMaxDualParams) throw std::invalid_argument("forward-dual tracing supports at most 16 parameters");
  std::vector<char> mask(static_cast<std::size_t>(n), active.empty() ? 1 : 0);
  for (int p : active) {
    if (p < 0 || p >= n) throw std::invalid_argument("active parameter index out of range");
    mask[static_cast<std::size_t>(p)] = 1;
  }
  const std::vector<int> active_list(active.begin(), active.end());
  const Camera& cam = scene.camera();
  GradientImage g = make_gradient(cam, n);
  const PathOptions opt{max_depth, rr_depth};
  const double inv = 1.0 / spp;
  parallel_for(static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height), [&](std::size_t i) {
    const auto pix = static_cast<Eigen::Index>(i);
    const int x = static_cast<int>(pix % cam.width);
    const int y = static_cast<int>(pix / cam.width);
    DualRows total = DualRows::Zero(n, 3);
    for (int s = 0; s < spp; ++s) {
      Sampler rng(seed, i, static_cast<std::uint64_t>(s));
      const Ray ray = pixel_ray(cam, x, y, rng);
      DualRows jb = DualRows::Zero(n, 3);
      DualRows jl = DualRows::Zero(n, 3);
      trace_path(scene, ray, rng, opt, 1, 1.0, [&](const PathVertex& v) {
        const MaterialDesc& m = scene.material(v.material);
        // d(beta * Le)
        const DualSpectrum de = emission_dual(m, v.normal, v.wo);
        jl.array() += v.emission_weight * (jb.array().rowwise() * v.emitted.transpose());
        add_rows(jl, de, v.beta * v.emission_weight, mask);
        if (v.has_light) {
          const DualSpectrum df = eval_dual(m, v.frame, v.wl, v.wo, active_list);
          const DualSpectrum dle = emission_dual(scene.material(v.light_material), v.light_normal, -v.wl);
          jl.array() += v.light_scale * (jb.array().rowwise() * (v.light_f * v.light_le).transpose());
          add_rows(jl, df, v.beta * v.light_le * v.light_scale, mask);
          add_rows(jl, dle, v.beta * v.light_f * v.light_scale, mask);
        }
        if (v.has_next) {
          const DualSpectrum df = eval_dual(m, v.frame, v.wb, v.wo, active_list);
          jb.array().rowwise() *= v.weight.transpose();
          add_rows(jb, df, v.beta * v.next_scale, mask);
        }
      });
      total += jl;
    }
    for (int p = 0; p < n; ++p) {
      g.slices[static_cast<std::size_t>(p)].data().col(pix) = total.row(p).transpose() * inv;
    }
  });
  for (Image& s : g.slices) s.meta = {spp, seed, "forward-dual"};
  return g;
}

#define RADFIELD_INSTANTIATE(S)                                                                                    \
  template Image render_field_lhs<S>(const Scene&, const PrimalField<S>&, int, std::uint64_t);                    \
  template GradientImage render_field_lhs<S>(const Scene&, const DiffField<S>&, int, std::uint64_t);              \
  template Image render_field_rhs<S>(const Scene&, const PrimalField<S>&, int, int, std::uint64_t);               \
  template GradientImage render_field_rhs<S>(const Scene&, const DiffField<S>&, const PrimalField<S>&, int, int,  \
                                             std::uint64_t);

RADFIELD_INSTANTIATE(float)
RADFIELD_INSTANTIATE(double)

#undef RADFIELD_INSTANTIATE

}  // namespace radfield
