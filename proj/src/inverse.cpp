// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/inverse.hpp"

#include "radfield/pathtrace.hpp"

#include <chrono>
#include <fstream>

namespace radfield {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr std::uint64_t kPrimalStream = 0x7072696d;
constexpr std::uint64_t kGradientStream = 0x67726164;

}  // namespace

ImageLoss image_loss_and_adjoint(const Image& candidate, const Objective& objective) {
  if (!candidate.same_size(objective.target)) throw std::invalid_argument("candidate and target sizes differ");
  const Eigen::MatrixXd diff = candidate.data() - objective.target.data();
  const double count = static_cast<double>(diff.size());
  ImageLoss out;
  out.adjoint = Image(candidate.width(), candidate.height());
  if (objective.kind == LossKind::l2) {
    out.loss = diff.squaredNorm() / count;
    out.adjoint.data() = 2.0 * diff / count;
  } else {
    out.loss = diff.cwiseAbs().sum() / count;
    out.adjoint.data() = diff.unaryExpr([](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); }) / count;
  }
  return out;
}

template <class S>
GradientImage measurement_gradient(const Scene& scene, const DiffField<S>* diff, const PrimalField<S>* primal,
                                   GradientMode mode, int spp, int incident, std::uint64_t seed) {
  if (!diff) throw std::invalid_argument("measurement gradient needs a differential field");
  if (mode == GradientMode::lhs_query) return render_field_lhs(scene, *diff, spp, seed);
  if (!primal) throw std::invalid_argument("rhs_eval mode needs a primal field");
  return render_field_rhs(scene, *diff, *primal, spp, incident, seed);
}

std::uint64_t primal_render_seed(const OptimRun& run, int it) {
  return mix64(run.seed ^ kPrimalStream) + static_cast<std::uint64_t>(it) * run.primal_seed_stride;
}

ParamGradient chain(const AdjointImage& adjoint, const GradientImage& grad) {
  ParamGradient g(grad.size());
  for (int j = 0; j < grad.size(); ++j) {
    const Image& s = grad.slices[static_cast<std::size_t>(j)];
    if (!s.same_size(adjoint)) throw std::invalid_argument("adjoint and gradient images differ in size");
    g[j] = adjoint.data().cwiseProduct(s.data()).sum();
  }
  return g;
}

int RunLog::first_below(double threshold) const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].sq_err >= 0.0 && records[i].sq_err < threshold) return static_cast<int>(i);
  }
  return -1;
}

void write_run_log(const std::filesystem::path& path, const RunLog& log, bool include_wall) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  const Eigen::Index n = log.records.empty() ? 0 : log.records.front().params.size();
  const bool has_err = !log.records.empty() && log.records.front().sq_err >= 0.0;
  out << "iter,loss,wall_ms_grad,wall_ms_total";
  for (Eigen::Index j = 0; j < n; ++j) out << ",p_" << j;
  if (has_err) out << ",sq_err";
  out << '\n';
  for (const RunRecord& r : log.records) {
    out << r.iter << ',' << r.loss << ',' << (include_wall ? r.wall_ms_grad : 0.0) << ','
        << (include_wall ? r.wall_ms_total : 0.0);
    for (Eigen::Index j = 0; j < n; ++j) out << ',' << r.params[j];
    if (has_err) out << ',' << r.sq_err;
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

template <class S>
void finetune(PrimalField<S>& primal, DiffField<S>& diff, const Scene& scene, int steps_theta, int steps_phi,
              const TrainConfig& cfg, nn::Adam<S>& adam_primal, nn::Adam<S>& adam_diff, std::int64_t first_step) {
  if (steps_theta <= 0 && steps_phi <= 0) return;
  primal.rebind(scene);
  diff.rebind(scene);
  for (int i = 0; i < steps_theta; ++i) diff_train_step(diff, primal, scene, adam_diff, cfg, first_step + i);
  for (int i = 0; i < steps_phi; ++i) primal_train_step(primal, scene, adam_primal, cfg, first_step + i);
}

template <class S>
RunLog optimize(Scene& scene, const Objective& objective, const OptimRun& run, PrimalField<S>* primal,
                DiffField<S>* diff) {
  const int n = scene.param_count();
  if (run.lr.size() != n) throw std::invalid_argument("optimizer needs one learning rate per scalar parameter");
  if ((run.lr.array() < 0.0).any() || !run.lr.allFinite()) throw std::invalid_argument("learning rates must be non-negative");
  if (run.source == GradientSource::field && (!diff || (run.mode == GradientMode::rhs_eval && !primal))) {
    throw std::invalid_argument("field-driven optimization needs trained fields");
  }
  const bool tuning = run.finetune_diff_steps > 0 || run.finetune_primal_steps > 0;
  if (tuning && (!primal || !diff)) throw std::invalid_argument("fine-tuning needs both fields");
  if (run.target_params && run.target_params->size() != n) throw std::invalid_argument("target parameter count mismatch");

  RunLog log;
  nn::Adam<double> adam;
  nn::Adam<S> adam_primal(nn::AdamConfig{run.finetune.lr});
  nn::Adam<S> adam_diff(nn::AdamConfig{run.finetune.lr});
  Eigen::VectorXd p = scene.get_params();
  const Eigen::VectorXd lr = run.lr;
  double first_loss = 0.0;
  const auto start = Clock::now();
  for (int it = 0; it < run.iterations; ++it) {
    const std::uint64_t primal_seed = primal_render_seed(run, it);
    const std::uint64_t grad_seed = mix64((run.seed ^ kGradientStream) + static_cast<std::uint64_t>(it));
    const Image img = render_primal(scene, run.primal_spp, run.max_depth, primal_seed, run.rr_depth);
    const ImageLoss il = image_loss_and_adjoint(img, objective);
    if (it == 0) first_loss = il.loss;
    if (it > 0 && il.loss > run.divergence_factor * first_loss) {
      log.diverged = true;
      log.stop_reason = "image loss exceeded " + std::to_string(run.divergence_factor) + "x its initial value";
      break;
    }

    const auto tg = Clock::now();
    ParamGradient g;
    switch (run.source) {
      case GradientSource::field:
        g = chain(il.adjoint, measurement_gradient(scene, diff, primal, run.mode, run.gradient_spp, run.incident, grad_seed));
        break;
      case GradientSource::rb:
        g = rb_gradient(scene, il.adjoint, run.gradient_spp, run.max_depth, grad_seed, run.rr_depth).gradient;
        break;
      case GradientSource::prb:
        g = prb_gradient(scene, il.adjoint, run.gradient_spp, run.max_depth, grad_seed, run.rr_depth).gradient;
        break;
    }
    const double grad_ms = ms_since(tg);

    adam.step(p, g, &lr);
    scene.set_params(p);
    p = scene.get_params();
    if (tuning) {
      finetune(*primal, *diff, scene, run.finetune_diff_steps, run.finetune_primal_steps, run.finetune, adam_primal,
               adam_diff, static_cast<std::int64_t>(it) * std::max(run.finetune_diff_steps, run.finetune_primal_steps));
    }

    RunRecord r;
    r.iter = it;
    r.loss = il.loss;
    r.wall_ms_grad = grad_ms;
    r.wall_ms_total = ms_since(start);
    r.params = p;
    if (run.target_params) r.sq_err = (p - *run.target_params).array().square().maxCoeff();
    log.records.push_back(r);
    if (run.stop_sq_err > 0.0 && r.sq_err >= 0.0 && r.sq_err < run.stop_sq_err) {
      log.stop_reason = "parameter error below threshold";
      break;
    }
  }
  if (log.stop_reason.empty()) log.stop_reason = "iteration budget reached";
  return log;
}

#define RADFIELD_INSTANTIATE(S)                                                                                   \
  template GradientImage measurement_gradient<S>(const Scene&, const DiffField<S>*, const PrimalField<S>*,       \
                                                 GradientMode, int, int, std::uint64_t);                         \
  template void finetune<S>(PrimalField<S>&, DiffField<S>&, const Scene&, int, int, const TrainConfig&,          \
                            nn::Adam<S>&, nn::Adam<S>&, std::int64_t);                                           \
  template RunLog optimize<S>(Scene&, const Objective&, const OptimRun&, PrimalField<S>*, DiffField<S>*);

RADFIELD_INSTANTIATE(float)
RADFIELD_INSTANTIATE(double)

#undef RADFIELD_INSTANTIATE

}  // namespace radfield
