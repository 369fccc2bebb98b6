// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/oracle.hpp"

#include "radfield/analytic.hpp"
#include "radfield/baselines.hpp"
#include "radfield/pathtrace.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace radfield {

std::pair<double, double> mean_and_stderr(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  if (xs.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

namespace {

using Clock = std::chrono::steady_clock;

double z_score(double mean, double err, double exact) {
  const double d = std::abs(mean - exact);
  if (err == 0.0) return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return d / err;
}

template <class Fn>
OracleCheck timed(const std::string& name, double tolerance, Fn&& measure) {
  const auto t0 = Clock::now();
  OracleCheck c;
  c.name = name;
  c.tolerance = tolerance;
  c.value = measure();
  c.pass = c.value < tolerance;
  c.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  return c;
}

}  // namespace

std::vector<OracleCheck> run_oracle_suite(const Scene& scene, const OracleOptions& opt) {
  const analytic::DirectScene exact(scene);
  const int a = exact.albedo_param();
  const Spectrum img_exact = exact.image().mean();
  const Spectrum grad_exact = exact.albedo_derivative_image().mean();
  auto run_seed = [&](int r, std::uint64_t stream) { return mix64(mix64(opt.seed ^ stream) + static_cast<std::uint64_t>(r)); };

  std::vector<OracleCheck> out;
  out.push_back(timed("render_primal relative error", 0.01, [&] {
    const Spectrum m = render_primal(scene, opt.primal_spp, opt.max_depth, opt.seed).mean();
    return ((m - img_exact).abs() / img_exact).maxCoeff();
  }));

  // Each gradient estimator yields one image-mean derivative per channel and run.
  auto gradient_check = [&](const std::string& name, std::uint64_t stream, auto&& estimate) {
    return timed(name + " albedo derivative (z-score)", 3.0, [&] {
      std::array<std::vector<double>, 3> samples;
      for (int r = 0; r < opt.runs; ++r) {
        const Spectrum g = estimate(run_seed(r, stream));
        for (int c = 0; c < 3; ++c) samples[static_cast<std::size_t>(c)].push_back(g[c]);
      }
      double worst = 0.0;
      for (int c = 0; c < 3; ++c) {
        const auto [m, e] = mean_and_stderr(samples[static_cast<std::size_t>(c)]);
        worst = std::max(worst, z_score(m, e, grad_exact[c]));
      }
      return worst;
    });
  };

  out.push_back(gradient_check("fd", 0x6664, [&](std::uint64_t seed) {
    Spectrum g;
    for (int c = 0; c < 3; ++c) g[c] = fd_gradient(scene, a + c, opt.eps, opt.gradient_spp, seed, opt.max_depth).mean()[c];
    return g;
  }));
  out.push_back(gradient_check("forward_dual", 0x6676, [&](std::uint64_t seed) {
    const std::array<int, 3> active{a, a + 1, a + 2};
    const GradientImage gi = forward_dual_gradient(scene, active, opt.gradient_spp, opt.max_depth, seed);
    Spectrum g;
    for (int c = 0; c < 3; ++c) g[c] = gi.slices[static_cast<std::size_t>(a + c)].mean()[c];
    return g;
  }));

  AdjointImage adjoint(scene.camera().width, scene.camera().height);
  adjoint.data().setConstant(1.0 / static_cast<double>(adjoint.pixel_count()));
  out.push_back(gradient_check("rb", 0x7262, [&](std::uint64_t seed) {
    const ParamGradient g = rb_gradient(scene, adjoint, opt.gradient_spp, opt.max_depth, seed).gradient;
    return Spectrum(g[a], g[a + 1], g[a + 2]);
  }));
  out.push_back(gradient_check("prb", 0x7072, [&](std::uint64_t seed) {
    const ParamGradient g = prb_gradient(scene, adjoint, opt.gradient_spp, opt.max_depth, seed).gradient;
    return Spectrum(g[a], g[a + 1], g[a + 2]);
  }));

  auto residual_check = [&](const std::string& name, auto&& stats) {
    return timed(name, 3.0, [&] {
      const ResidualStats s = stats();
      double worst = 0.0;
      for (Eigen::Index i = 0; i < s.mean.size(); ++i) worst = std::max(worst, z_score(s.mean[i], s.mean_err[i], 0.0));
      return worst;
    });
  };
  out.push_back(residual_check("primal residual of closed form (z-score)", [&] {
    return primal_residual_stats(scene, exact.primal_solution(), opt.residual_records, opt.incident, opt.seed);
  }));
  out.push_back(residual_check("differential residual of closed form (z-score)", [&] {
    return diff_residual_stats(scene, exact.diff_solution(), exact.primal_solution(), opt.residual_records,
                               opt.incident, opt.seed);
  }));
  return out;
}

}  // namespace radfield
