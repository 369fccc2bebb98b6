// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/baselines.hpp"
#include "radfield/fields.hpp"
#include "radfield/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace radfield {

enum class LossKind { l2, l1 };

struct Objective {
  LossKind kind = LossKind::l2;
  Image target;
};

struct ImageLoss {
  double loss = 0.0;
  AdjointImage adjoint;
};

/// L2: mean((y - t)^2), adjoint 2(y - t)/count. L1: mean|y - t|, adjoint
/// sign(y - t)/count with sign(0) = 0. Count is pixels x channels.
ImageLoss image_loss_and_adjoint(const Image& candidate, const Objective& objective);

enum class GradientMode { lhs_query, rhs_eval };
/// Where optimize() takes d(image)/dp from.
enum class GradientSource { field, rb, prb };

/// Per-pixel dI/dp from the differential field at primary hits.
template <class S>
GradientImage measurement_gradient(const Scene& scene, const DiffField<S>* diff, const PrimalField<S>* primal,
                                   GradientMode mode, int spp, int incident, std::uint64_t seed);

/// dz/dp_j = sum over pixels of <adjoint, slice_j>.
ParamGradient chain(const AdjointImage& adjoint, const GradientImage& grad);

struct OptimRun {
  int iterations = 200;
  Eigen::VectorXd lr;  // per scalar parameter
  GradientMode mode = GradientMode::rhs_eval;
  GradientSource source = GradientSource::field;
  int primal_spp = 16;
  int gradient_spp = 4;
  int incident = 4;
  int max_depth = 15;
  int rr_depth = 5;
  int finetune_diff_steps = 0;
  int finetune_primal_steps = 0;
  TrainConfig finetune;
  std::uint64_t seed = 1;
  /// Primal render seed advances by this much per iteration; 0 keeps it fixed.
  std::uint64_t primal_seed_stride = 1;
  std::optional<Eigen::VectorXd> target_params;
  /// Stop once every squared parameter error falls below this (0 disables).
  double stop_sq_err = 0.0;
  double divergence_factor = 10.0;
};

/// Seed of the primal render at iteration `it`.
std::uint64_t primal_render_seed(const OptimRun& run, int it);

struct RunRecord {
  int iter = 0;
  double loss = 0.0;
  double wall_ms_grad = 0.0;
  double wall_ms_total = 0.0;  // since the start of the run
  Eigen::VectorXd params;      // after this iteration's update
  double sq_err = -1.0;        // largest per-scalar squared error, -1 when unknown
};

struct RunLog {
  std::vector<RunRecord> records;
  bool diverged = false;
  std::string stop_reason;

  /// First record whose sq_err is below `threshold`, or -1.
  int first_below(double threshold) const;
};

/// CSV: iter,loss,wall_ms_grad,wall_ms_total,p_0..p_{n-1}[,sq_err].
void write_run_log(const std::filesystem::path& path, const RunLog& log, bool include_wall = true);

/// Runs steps_theta differential then steps_phi primal training steps against
/// the current scene, after rebinding both fields to it.
template <class S>
void finetune(PrimalField<S>& primal, DiffField<S>& diff, const Scene& scene, int steps_theta, int steps_phi,
              const TrainConfig& cfg, nn::Adam<S>& adam_primal, nn::Adam<S>& adam_diff, std::int64_t first_step);

/// The six-step loop: render, image loss, measurement gradient, chain rule,
/// Adam update with clamping, optional fine-tuning. Fields may be null when
/// the gradient source is a baseline.
template <class S>
RunLog optimize(Scene& scene, const Objective& objective, const OptimRun& run, PrimalField<S>* primal,
                DiffField<S>* diff);

}  // namespace radfield
