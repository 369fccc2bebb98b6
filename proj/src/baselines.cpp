// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/baselines.hpp"

#include "radfield/parallel.hpp"
#include "radfield/path.hpp"

#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

namespace radfield {

namespace {

constexpr std::uint64_t kInnerStream = 0x696e6e6572;

// Allocation tally of the path currently traced on this thread.
struct PathTally {
  std::int64_t allocations = 0;
  std::int64_t bytes = 0;
};
thread_local PathTally tally;

template <class T>
struct CountingAllocator {
  using value_type = T;
  CountingAllocator() = default;
  template <class U>
  CountingAllocator(const CountingAllocator<U>&) {}
  T* allocate(std::size_t n) {
    ++tally.allocations;
    tally.bytes += static_cast<std::int64_t>(n * sizeof(T));
    return std::allocator<T>{}.allocate(n);
  }
  void deallocate(T* p, std::size_t n) { std::allocator<T>{}.deallocate(p, n); }
  template <class U>
  bool operator==(const CountingAllocator<U>&) const {
    return true;
  }
};

// grad[p] += sum_c d/dp(value_c) * scale_c
void contract(Eigen::VectorXd& grad, const DualSpectrum& d, const Spectrum& scale) {
  for (int r = 0; r < d.count; ++r) grad[d.index[static_cast<std::size_t>(r)]] += (d.row(r) * scale).sum();
}

// Derivative terms of one vertex that do not need incident radiance.
void local_terms(const Scene& scene, const PathVertex& v, const Spectrum& a, Eigen::VectorXd& grad) {
  const MaterialDesc& m = scene.material(v.material);
  contract(grad, emission_dual(m, v.normal, v.wo), a * v.emission_weight);
  if (v.has_light) {
    contract(grad, eval_dual(m, v.frame, v.wl, v.wo), a * v.light_le * v.light_scale);
    contract(grad, emission_dual(scene.material(v.light_material), v.light_normal, -v.wl),
             a * v.light_f * v.light_scale);
  }
}

void check_inputs(const Scene& scene, const AdjointImage& adjoint, int spp, int max_depth) {
  const Camera& cam = scene.camera();
  if (adjoint.width() != cam.width || adjoint.height() != cam.height) {
    throw std::invalid_argument("adjoint image does not match the camera resolution");
  }
  if (spp < 1) throw std::invalid_argument("spp must be >= 1");
  if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
}

template <class PixelFn>
BaselineResult run_pixels(const Scene& scene, PixelFn&& per_pixel) {
  const Camera& cam = scene.camera();
  const auto npix = static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height);
  const int n = scene.param_count();
  Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(npix));
  std::vector<BaselineStats> stats(npix);
  parallel_for(npix, [&](std::size_t i) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    per_pixel(i, g, stats[i]);
    partial.col(static_cast<Eigen::Index>(i)) = g;
  });
  BaselineResult out;
  out.gradient = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < partial.cols(); ++i) out.gradient += partial.col(i);
  for (const BaselineStats& s : stats) {
    out.stats.paths += s.paths;
    out.stats.vertices += s.vertices;
    out.stats.max_path_allocations = std::max(out.stats.max_path_allocations, s.max_path_allocations);
    out.stats.max_path_bytes = std::max(out.stats.max_path_bytes, s.max_path_bytes);
  }
  return out;
}

void close_path(BaselineStats& st) {
  ++st.paths;
  st.max_path_allocations = std::max(st.max_path_allocations, tally.allocations);
  st.max_path_bytes = std::max(st.max_path_bytes, tally.bytes);
  tally = {};
}

struct ReplayVertex {
  Vec3 point;
  Spectrum beta;
  double pdf_b = 0.0;
  Spectrum radiance_to_go;
};

bool same_point(const Vec3& a, const Vec3& b) { return std::memcmp(a.data(), b.data(), sizeof(double) * 3) == 0; }

}  // namespace

BaselineResult rb_gradient(const Scene& scene, const AdjointImage& adjoint, int spp, int max_depth, std::uint64_t seed,
                           int rr_depth) {
  check_inputs(scene, adjoint, spp, max_depth);
  const Camera& cam = scene.camera();
  const PathOptions opt{max_depth, rr_depth};
  const double eps = scene.geometry().ray_epsilon();
  return run_pixels(scene, [&](std::size_t i, Eigen::VectorXd& grad, BaselineStats& st) {
    const auto pix = static_cast<Eigen::Index>(i);
    const int x = static_cast<int>(pix % cam.width);
    const int y = static_cast<int>(pix / cam.width);
    const Spectrum delta = adjoint.at(pix) / spp;
    for (int s = 0; s < spp; ++s) {
      tally = {};
      Sampler rng(seed, i, static_cast<std::uint64_t>(s));
      const Vec2 u = rng.next2d();
      const Ray ray = cam.generate_ray(x + u.x(), y + u.y());
      const std::uint64_t path_id = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(spp) + static_cast<std::uint64_t>(s);
      trace_path(scene, ray, rng, opt, 1, 1.0, [&](const PathVertex& v) {
        ++st.vertices;
        const Spectrum a = delta * v.beta;
        local_terms(scene, v, a, grad);
        if (!v.has_next) return;
        const MaterialDesc& m = scene.material(v.material);
        const DualSpectrum df = eval_dual(m, v.frame, v.wb, v.wo);
        if (df.count == 0) return;
        // Fresh estimate of radiance arriving along wb.
        Sampler inner(seed ^ kInnerStream, path_id, static_cast<std::uint64_t>(v.depth));
        const Spectrum li = trace_path(scene, Ray{v.point, v.wb, eps}, inner, opt, v.depth + 1,
                                       v.next_emission_weight, [](const PathVertex&) {});
        contract(grad, df, a * li * v.next_scale);
      });
      close_path(st);
    }
  });
}

BaselineResult prb_gradient(const Scene& scene, const AdjointImage& adjoint, int spp, int max_depth, std::uint64_t seed,
                            int rr_depth) {
  check_inputs(scene, adjoint, spp, max_depth);
  const Camera& cam = scene.camera();
  const PathOptions opt{max_depth, rr_depth};
  return run_pixels(scene, [&](std::size_t i, Eigen::VectorXd& grad, BaselineStats& st) {
    const auto pix = static_cast<Eigen::Index>(i);
    const int x = static_cast<int>(pix % cam.width);
    const int y = static_cast<int>(pix / cam.width);
    const Spectrum delta = adjoint.at(pix) / spp;
    for (int s = 0; s < spp; ++s) {
      tally = {};
      std::vector<ReplayVertex, CountingAllocator<ReplayVertex>> record;
      record.reserve(static_cast<std::size_t>(max_depth));

      // Pass one: primal path, recording the radiance gathered up to each vertex.
      Sampler rng1(seed, i, static_cast<std::uint64_t>(s));
      const Vec2 u1 = rng1.next2d();
      Spectrum gathered = Spectrum::Zero();
      const Spectrum total = trace_path(scene, cam.generate_ray(x + u1.x(), y + u1.y()), rng1, opt, 1, 1.0,
                                        [&](const PathVertex& v) {
                                          gathered += v.beta * v.emitted * v.emission_weight;
                                          if (v.has_light) gathered += v.beta * v.light_f * v.light_le * v.light_scale;
                                          record.push_back({v.point, v.beta, v.pdf_b, gathered});
                                        });
      for (ReplayVertex& r : record) r.radiance_to_go = total - r.radiance_to_go;

      // Pass two: replay and backpropagate.
      Sampler rng2(seed, i, static_cast<std::uint64_t>(s));
      const Vec2 u2 = rng2.next2d();
      std::size_t k = 0;
      trace_path(scene, cam.generate_ray(x + u2.x(), y + u2.y()), rng2, opt, 1, 1.0, [&](const PathVertex& v) {
        if (k >= record.size() || !same_point(record[k].point, v.point) || record[k].pdf_b != v.pdf_b) {
          throw ReplayDivergence("path replay diverged at vertex " + std::to_string(k) + " of pixel " +
                                 std::to_string(i));
        }
        ++st.vertices;
        const Spectrum a = delta * v.beta;
        local_terms(scene, v, a, grad);
        if (v.has_next) {
          const DualSpectrum df = eval_dual(scene.material(v.material), v.frame, v.wb, v.wo);
          if (df.count > 0) {
            // Incident radiance along wb = radiance-to-go / next throughput, 0/0 -> 0.
            const Spectrum next_beta = v.beta * v.weight;
            Spectrum li = Spectrum::Zero();
            for (int c = 0; c < 3; ++c) {
              if (next_beta[c] != 0.0) li[c] = record[k].radiance_to_go[c] / next_beta[c];
            }
            contract(grad, df, a * li * v.next_scale);
          }
        }
        ++k;
      });
      if (k != record.size()) throw ReplayDivergence("path replay ended early in pixel " + std::to_string(i));
      close_path(st);
    }
  });
}

}  // namespace radfield
