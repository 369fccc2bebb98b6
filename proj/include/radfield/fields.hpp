// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/brdf.hpp"
#include "radfield/nn/adam.hpp"
#include "radfield/nn/network.hpp"
#include "radfield/rng.hpp"
#include "radfield/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace radfield {

/// Scalar type of production networks; gradient checks instantiate double.
using NetScalar = float;

struct SurfacePoint {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  int shape_id = -1;
  int material_id = -1;
};

SurfacePoint surface_point(const Hit& hit);

/// A field lookup: outgoing radiance at `x` toward `wo`.
struct FieldQuery {
  SurfacePoint x;
  Vec3 wo = Vec3::UnitZ();
};

/// Per-query constant inputs: position, direction, normal, diffuse and
/// specular reflectance. Grid features are appended by the network.
inline constexpr int kConstantWidth = 15;

/// Scene attributes a field encodes, frozen when the field is bound so the
/// network keeps seeing the state it was trained on.
struct FieldBinding {
  Bounds bounds;
  std::vector<Spectrum> diffuse;
  std::vector<Spectrum> specular;
};

FieldBinding bind_scene(const Scene& scene);

/// Position normalized to [0,1]^3 by the bound scene box; `clamped` is set
/// when the point lay outside.
Vec3 normalize_position(const FieldBinding& b, const Vec3& p, bool* clamped = nullptr);

template <class S>
nn::EncodingBatch<S> encode(const FieldBinding& binding, std::span<const FieldQuery> queries,
                            std::int64_t* clamped = nullptr);

/// Network plus scene binding; outputs the non-emissive part of the field.
template <class S>
class RadianceField {
 public:
  RadianceField() = default;
  RadianceField(const nn::NetworkConfig& cfg, int output_width, const Scene& scene, std::uint64_t seed)
      : net_(cfg, kConstantWidth, output_width), binding_(bind_scene(scene)) {
    net_.init(seed);
  }

  void rebind(const Scene& scene) { binding_ = bind_scene(scene); }
  const FieldBinding& binding() const { return binding_; }
  nn::Network<S>& network() { return net_; }
  const nn::Network<S>& network() const { return net_; }
  int output_width() const { return net_.output_width(); }
  std::int64_t clamped_queries() const { return clamped_; }

  /// Untaped network output for each query, output_width x Q, in double.
  Eigen::MatrixXd evaluate(std::span<const FieldQuery> queries) const;

 protected:
  nn::Network<S> net_;
  FieldBinding binding_;
  mutable std::int64_t clamped_ = 0;
};

/// Primal radiance L = N_phi + E.
template <class S>
class PrimalField : public RadianceField<S> {
 public:
  PrimalField() = default;
  PrimalField(const nn::NetworkConfig& cfg, const Scene& scene, std::uint64_t seed)
      : RadianceField<S>(cfg, 3, scene, seed) {}
};

/// Differential radiance dL/dp = N_theta + dE/dp, output channel 3j+c is
/// the RGB channel c of dL/dp_j.
template <class S>
class DiffField : public RadianceField<S> {
 public:
  DiffField() = default;
  DiffField(const nn::NetworkConfig& cfg, const Scene& scene, std::uint64_t seed)
      : RadianceField<S>(cfg, 3 * std::max(scene.param_count(), 1), scene, seed), n_(scene.param_count()) {}

  int param_count() const { return n_; }

 private:
  int n_ = 0;
};

// ---------------------------------------------------------------------------
// Residual batches

/// One incident direction at a residual record.
struct IncidentRecord {
  Vec3 wi = Vec3::UnitZ();
  double pdf = 0.0;
  Spectrum weight = Spectrum::Zero();  // f cos / pdf
  DualSpectrum dweight;                // d(f) cos / pdf, detached pdf
  bool scatter = true;                 // feeds the f * L integral
  bool source = true;                  // feeds the df * L integral
  int query = -1;                      // index of the next-hit lookup, -1 when nothing to query
  Spectrum next_emission = Spectrum::Zero();
  DualSpectrum next_demission;
};

struct ResidualRecord {
  SurfacePoint x;
  Vec3 wo = Vec3::UnitZ();
  double inv_pdf = 1.0;  // 1 / p(x, wo)
  Spectrum emission = Spectrum::Zero();
  DualSpectrum demission;
  int lhs_query = -1;
  int first = 0;
  int count = 0;
  double scatter_norm = 0.0;  // 1 / (#scatter samples)
  double source_norm = 0.0;   // 1 / (#source samples)
};

struct ResidualBatch {
  std::vector<ResidualRecord> records;
  std::vector<IncidentRecord> incident;
  std::vector<FieldQuery> queries;
  std::int64_t discarded = 0;
};

struct BatchOptions {
  int records = 1 << 14;
  int incident = 4;
  bool with_lhs = true;
  /// Draw separate incident sets for the two scattering integrals instead of sharing one.
  bool independent_integrals = false;
};

/// Incident direction from the one-sample mixture of BSDF and emitter-area
/// sampling with the balance-heuristic mixture density.
struct IncidentDirection {
  Vec3 wi = Vec3::UnitZ();
  double pdf = 0.0;
  bool valid = false;
};

IncidentDirection sample_incident_mixture(const Scene& scene, const SurfacePoint& x, const Frame& frame,
                                          const Vec3& wo, Sampler& rng);
/// Density of sample_incident_mixture producing wi.
double incident_mixture_pdf(const Scene& scene, const SurfacePoint& x, const Frame& frame, const Vec3& wi,
                            const Vec3& wo);
/// Solid-angle density of uniform emitter-area sampling producing wi, summed
/// over every emitter point along the ray (occlusion ignored).
double emitter_direction_pdf(const Scene& scene, const Vec3& origin, const Vec3& wi);

/// Residual records at x ~ uniform area, wo ~ uniform (hemi)sphere. Record j
/// draws position from stream (seed, step, j) and incident directions from
/// stream (incident_seed, step, j).
ResidualBatch sample_residual_batch(const Scene& scene, const BatchOptions& opt, std::uint64_t seed,
                                    std::uint64_t step, std::uint64_t incident_seed);

/// Right-hand-side records at given locations (no left-hand-side lookups).
ResidualBatch rhs_batch(const Scene& scene, std::span<const FieldQuery> at, int incident, std::uint64_t seed,
                        std::uint64_t stream);

/// Field values per query excluding emission (the network part).
using QueryFn = std::function<Eigen::MatrixXd(std::span<const FieldQuery>)>;

/// 3 x N left-hand side N(x) + E(x).
Eigen::MatrixXd primal_lhs(const ResidualBatch& b, const Eigen::MatrixXd& primal_out);
/// 3 x N right-hand side E + mean(f cos L(x') / pdf).
Eigen::MatrixXd primal_rhs(const ResidualBatch& b, const Eigen::MatrixXd& primal_out);
/// Left-hand side N_theta(x) + dE(x), one row per differential output channel.
Eigen::MatrixXd diff_lhs(const ResidualBatch& b, const Eigen::MatrixXd& diff_out);
/// Right-hand side dE + mean(f cos dL(x') + df cos L(x')) / pdf.
Eigen::MatrixXd diff_rhs(const ResidualBatch& b, const Eigen::MatrixXd& diff_out, const Eigen::MatrixXd& primal_out);

struct LossAndAdjoint {
  double loss = 0.0;
  /// d loss / d network output at each query (output_width x Q).
  Eigen::MatrixXd adjoint;
};

/// (1/N) sum r^2 / p(x, wo), with gradients through every network lookup.
LossAndAdjoint primal_loss(const ResidualBatch& b, const Eigen::MatrixXd& primal_out, bool relative = false);
/// Differential residual loss summed over all 3n channels; gradients flow
/// only through the differential network lookups.
LossAndAdjoint diff_loss(const ResidualBatch& b, const Eigen::MatrixXd& diff_out, const Eigen::MatrixXd& primal_out,
                         bool relative = false);

struct ResidualStats {
  Eigen::VectorXd mean;       // batch mean residual per channel
  Eigen::VectorXd mean_err;   // its standard error
  double loss = 0.0;          // unbiased estimate of the squared residual norm
  double loss_err = 0.0;
  double plain_loss = 0.0;    // (1/N) sum r^2 / p with a single RHS estimate
};

/// Residual statistics of a candidate primal solution. `loss` multiplies two
/// residuals with independent incident samples, which is unbiased for the
/// squared residual norm even when the RHS estimate is noisy.
ResidualStats primal_residual_stats(const Scene& scene, const QueryFn& primal_net, int records, int incident,
                                    std::uint64_t seed);
ResidualStats diff_residual_stats(const Scene& scene, const QueryFn& diff_net, const QueryFn& primal_net,
                                  int records, int incident, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Point evaluation

template <class S>
Spectrum eval_primal_lhs(const PrimalField<S>& field, const Scene& scene, const SurfacePoint& x, const Vec3& wo);
template <class S>
Spectrum eval_primal_rhs(const PrimalField<S>& field, const Scene& scene, const SurfacePoint& x, const Vec3& wo,
                         std::uint64_t seed, int incident);
/// n x 3 rows of dL/dp_j.
template <class S>
Eigen::MatrixXd eval_diff_lhs(const DiffField<S>& field, const Scene& scene, const SurfacePoint& x, const Vec3& wo);
template <class S>
Eigen::MatrixXd eval_diff_rhs(const DiffField<S>& field, const PrimalField<S>& primal, const Scene& scene,
                              const SurfacePoint& x, const Vec3& wo, std::uint64_t seed, int incident);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int batch = 1 << 14;
  int incident = 4;
  double lr = 5e-4;
  /// Steps over which the learning rate halves; 0 keeps it constant.
  int lr_half_life = 0;
  int steps = 10000;
  bool relative_loss = false;
  std::uint64_t seed = 1;
};

/// Learning rate at global step `step`.
double learning_rate(const TrainConfig& cfg, std::int64_t step);

struct StepStats {
  std::int64_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
  std::int64_t discarded = 0;
};

template <class S>
StepStats primal_train_step(PrimalField<S>& field, const Scene& scene, nn::Adam<S>& adam, const TrainConfig& cfg,
                            std::int64_t step);

template <class S>
StepStats diff_train_step(DiffField<S>& field, const PrimalField<S>& primal, const Scene& scene, nn::Adam<S>& adam,
                          const TrainConfig& cfg, std::int64_t step);

/// Runs cfg.steps steps starting at step index `first_step`.
template <class S>
std::vector<StepStats> train_primal(PrimalField<S>& field, const Scene& scene, nn::Adam<S>& adam,
                                    const TrainConfig& cfg, std::int64_t first_step = 0);
template <class S>
std::vector<StepStats> train_diff(DiffField<S>& field, const PrimalField<S>& primal, const Scene& scene,
                                  nn::Adam<S>& adam, const TrainConfig& cfg, std::int64_t first_step = 0);

/// CSV with columns step,loss,grad_norm,wall_ms,discarded_samples.
void write_train_log(const std::filesystem::path& path, const std::vector<StepStats>& log, bool include_wall = true);

}  // namespace radfield
