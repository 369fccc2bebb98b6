// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/fields.hpp"

#include "radfield/parallel.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>

namespace radfield {

namespace {

constexpr double kMinPdf = 1e-9;

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void add_dual(Eigen::Ref<Eigen::MatrixXd> col, const DualSpectrum& d, double scale, Eigen::Index groups) {
  for (int r = 0; r < d.count; ++r) {
    const int p = d.index[static_cast<std::size_t>(r)];
    if (p >= groups) continue;
    for (int c = 0; c < 3; ++c) col(3 * p + c, 0) += scale * d.jacobian(r, c);
  }
}

DualSpectrum scaled(const DualSpectrum& d, const Spectrum& s) {
  DualSpectrum out = d;
  out.value *= s;
  for (int r = 0; r < d.count; ++r) out.jacobian.row(r).array() *= s.transpose();
  return out;
}

// Incident samples of one record before query compaction.
struct PendingIncident {
  IncidentRecord rec;
  std::optional<FieldQuery> next;
};

void sample_incident_set(const Scene& scene, const SurfacePoint& x, const Vec3& wo, Sampler& rng,
                         PendingIncident* out, int count, bool scatter, bool source, std::int64_t& discarded) {
  const MaterialDesc& m = scene.material(x.material_id);
  const Frame frame = shading_frame(m, x.normal, wo);
  const double eps = scene.geometry().ray_epsilon();
  for (int i = 0; i < count; ++i) {
    PendingIncident& pi = out[i];
    pi = PendingIncident{};
    pi.rec.scatter = scatter;
    pi.rec.source = source;
    const IncidentDirection d = sample_incident_mixture(scene, x, frame, wo, rng);
    if (!d.valid) {
      ++discarded;
      continue;
    }
    pi.rec.wi = d.wi;
    pi.rec.pdf = d.pdf;
    const double cos_i = frame.n.dot(d.wi);
    if (cos_i <= 0.0) continue;
    const DualSpectrum f = eval_dual(m, frame, d.wi, wo);
    if ((f.value == 0.0).all() && f.count == 0) continue;
    const double w = cos_i / d.pdf;
    pi.rec.weight = f.value * w;
    pi.rec.dweight = scaled(f, Spectrum::Constant(w));
    Ray ray{x.point, d.wi, eps};
    const auto hit = scene.geometry().intersect(ray);
    if (!hit) continue;
    FieldQuery q{surface_point(*hit), -d.wi};
    const MaterialDesc& mh = scene.material(hit->material_id);
    pi.rec.next_demission = emission_dual(mh, hit->geom_normal, q.wo);
    pi.rec.next_emission = pi.rec.next_demission.value;
    pi.next = q;
  }
}

ResidualBatch assemble(const Scene& scene, std::span<const FieldQuery> at, const std::vector<double>& inv_pdf,
                       int incident, bool with_lhs, bool independent, std::uint64_t seed, std::uint64_t stream) {
  const std::size_t n = at.size();
  const int slots = independent ? 2 * incident : incident;
  std::vector<PendingIncident> pending(n * static_cast<std::size_t>(slots));
  std::vector<std::int64_t> discarded(n, 0);
  parallel_for(n, [&](std::size_t j) {
    Sampler rng(seed, stream, j);
    PendingIncident* out = pending.data() + j * static_cast<std::size_t>(slots);
    const FieldQuery& q = at[j];
    if (independent) {
      sample_incident_set(scene, q.x, q.wo, rng, out, incident, true, false, discarded[j]);
      sample_incident_set(scene, q.x, q.wo, rng, out + incident, incident, false, true, discarded[j]);
    } else {
      sample_incident_set(scene, q.x, q.wo, rng, out, incident, true, true, discarded[j]);
    }
  });

  ResidualBatch b;
  b.records.resize(n);
  b.incident.reserve(pending.size());
  b.queries.reserve(n * (with_lhs ? 1 : 0) + pending.size());
  for (std::size_t j = 0; j < n; ++j) {
    ResidualRecord& r = b.records[j];
    const FieldQuery& q = at[j];
    r.x = q.x;
    r.wo = q.wo;
    r.inv_pdf = inv_pdf.empty() ? 1.0 : inv_pdf[j];
    r.demission = emission_dual(scene.material(q.x.material_id), q.x.normal, q.wo);
    r.emission = r.demission.value;
    if (with_lhs) {
      r.lhs_query = static_cast<int>(b.queries.size());
      b.queries.push_back(q);
    }
    r.first = static_cast<int>(b.incident.size());
    r.count = slots;
    r.scatter_norm = 1.0 / incident;
    r.source_norm = 1.0 / incident;
    for (int i = 0; i < slots; ++i) {
      PendingIncident& pi = pending[j * static_cast<std::size_t>(slots) + static_cast<std::size_t>(i)];
      if (pi.next) {
        pi.rec.query = static_cast<int>(b.queries.size());
        b.queries.push_back(*pi.next);
      }
      b.incident.push_back(pi.rec);
    }
    b.discarded += discarded[j];
  }
  return b;
}

}  // namespace

SurfacePoint surface_point(const Hit& hit) {
  return {hit.point, hit.geom_normal, hit.shape_id, hit.material_id};
}

FieldBinding bind_scene(const Scene& scene) {
  FieldBinding b;
  b.bounds = scene.bounds();
  for (const MaterialDesc& m : scene.materials()) {
    b.diffuse.push_back(diffuse_reflectance(m));
    b.specular.push_back(specular_reflectance(m));
  }
  return b;
}

Vec3 normalize_position(const FieldBinding& b, const Vec3& p, bool* clamped) {
  const Vec3 ext = b.bounds.extent().cwiseMax(1e-12);
  Vec3 u = (p - b.bounds.lower).cwiseQuotient(ext);
  const Vec3 c = u.cwiseMax(0.0).cwiseMin(1.0);
  if (clamped) *clamped = (c - u).cwiseAbs().maxCoeff() > 1e-9;
  return c;
}

template <class S>
nn::EncodingBatch<S> encode(const FieldBinding& binding, std::span<const FieldQuery> queries,
                            std::int64_t* clamped) {
  const auto n = static_cast<Eigen::Index>(queries.size());
  nn::EncodingBatch<S> out;
  out.constants.resize(kConstantWidth, n);
  out.positions.resize(3, n);
  std::int64_t outside = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const FieldQuery& q = queries[static_cast<std::size_t>(j)];
    bool c = false;
    const Vec3 u = normalize_position(binding, q.x.point, &c);
    outside += c ? 1 : 0;
    const auto mid = static_cast<std::size_t>(q.x.material_id);
    const Spectrum& kd = binding.diffuse.at(mid);
    const Spectrum& ks = binding.specular.at(mid);
    out.positions.col(j) = u;
    auto col = out.constants.col(j);
    for (int a = 0; a < 3; ++a) {
      col(a) = static_cast<S>(u[a]);
      col(3 + a) = static_cast<S>(q.wo[a]);
      col(6 + a) = static_cast<S>(q.x.normal[a]);
      col(9 + a) = static_cast<S>(kd[a]);
      col(12 + a) = static_cast<S>(ks[a]);
    }
  }
  if (clamped) *clamped += outside;
  return out;
}

template <class S>
Eigen::MatrixXd RadianceField<S>::evaluate(std::span<const FieldQuery> queries) const {
  if (queries.empty()) return Eigen::MatrixXd(output_width(), 0);
  std::int64_t c = 0;
  const auto enc = encode<S>(binding_, queries, &c);
  clamped_ += c;
  return net_.forward(enc).template cast<double>();
}

// ---------------------------------------------------------------------------
// Incident sampling

double emitter_direction_pdf(const Scene& scene, const Vec3& origin, const Vec3& wi) {
  const auto& emitters = scene.emitters();
  if (emitters.empty()) return 0.0;
  const double choose = 1.0 / static_cast<double>(emitters.size());
  const Ray ray{origin, wi, scene.geometry().ray_epsilon()};
  double total = 0.0;
  for (int id : emitters) {
    const Shape& s = scene.geometry().shape(id);
    std::array<double, 2> ts{};
    const int k = intersect_shape_all(s, ray, ts);
    for (int i = 0; i < k; ++i) {
      const double t = ts[static_cast<std::size_t>(i)];
      const Vec3 y = origin + t * wi;
      const Vec3 n = s.kind == ShapeKind::sphere ? Vec3((y - s.p0) / s.radius) : s.normal;
      const double cos_y = std::abs(n.dot(wi));
      if (cos_y < 1e-12) continue;
      total += choose * (t * t) / (s.area * cos_y);
    }
  }
  return total;
}

double incident_mixture_pdf(const Scene& scene, const SurfacePoint& x, const Frame& frame, const Vec3& wi,
                            const Vec3& wo) {
  const MaterialDesc& m = scene.material(x.material_id);
  const double pb = pdf(m, frame, wi, wo);
  if (scene.emitters().empty()) return pb;
  return 0.5 * pb + 0.5 * emitter_direction_pdf(scene, x.point, wi);
}

IncidentDirection sample_incident_mixture(const Scene& scene, const SurfacePoint& x, const Frame& frame,
                                          const Vec3& wo, Sampler& rng) {
  IncidentDirection out;
  const MaterialDesc& m = scene.material(x.material_id);
  const auto& emitters = scene.emitters();
  const double pick = rng.next1d();
  const Vec2 u = rng.next2d();
  const double ue = rng.next1d();
  if (emitters.empty() || pick < 0.5) {
    const BsdfSample s = sample(m, frame, wo, u);
    if (!s.valid) return out;
    out.wi = s.wi;
  } else {
    const auto e = std::min(static_cast<std::size_t>(ue * static_cast<double>(emitters.size())), emitters.size() - 1);
    const SurfaceSample y = scene.geometry().shape(emitters[e]).sample(u);
    const Vec3 d = y.point - x.point;
    const double dist = d.norm();
    if (!(dist > 1e-12)) return out;
    out.wi = d / dist;
  }
  out.pdf = incident_mixture_pdf(scene, x, frame, out.wi, wo);
  out.valid = std::isfinite(out.pdf) && out.pdf >= kMinPdf;
  return out;
}

ResidualBatch sample_residual_batch(const Scene& scene, const BatchOptions& opt, std::uint64_t seed,
                                    std::uint64_t step, std::uint64_t incident_seed) {
  if (opt.records <= 0 || opt.incident <= 0) throw std::invalid_argument("residual batch needs N >= 1 and M >= 1");
  const Geometry& geo = scene.geometry();
  const auto n = static_cast<std::size_t>(opt.records);
  std::vector<FieldQuery> at(n);
  std::vector<double> inv_pdf(n);
  for (std::size_t j = 0; j < n; ++j) {
    Sampler rng(seed, step, j);
    const SurfaceSample s = geo.sample_surface_uniform(rng.next2d());
    FieldQuery& q = at[j];
    q.x.point = s.point;
    q.x.normal = s.normal;
    q.x.shape_id = s.shape_id;
    q.x.material_id = geo.shape(s.shape_id).material;
    const bool two_sided = scene.material(q.x.material_id).two_sided;
    const DirectionSample d = two_sided ? sample_sphere_uniform(rng.next2d()) : sample_hemisphere_uniform(s.normal, rng.next2d());
    q.wo = d.direction;
    inv_pdf[j] = 1.0 / (s.pdf_area * d.pdf);
  }
  return assemble(scene, at, inv_pdf, opt.incident, opt.with_lhs, opt.independent_integrals, incident_seed, step);
}

ResidualBatch rhs_batch(const Scene& scene, std::span<const FieldQuery> at, int incident, std::uint64_t seed,
                        std::uint64_t stream) {
  if (incident <= 0) throw std::invalid_argument("RHS evaluation needs M >= 1");
  return assemble(scene, at, {}, incident, false, false, seed, stream);
}

// ---------------------------------------------------------------------------
// Residuals

Eigen::MatrixXd primal_lhs(const ResidualBatch& b, const Eigen::MatrixXd& out) {
  Eigen::MatrixXd lhs(3, static_cast<Eigen::Index>(b.records.size()));
  for (std::size_t j = 0; j < b.records.size(); ++j) {
    const ResidualRecord& r = b.records[j];
    if (r.lhs_query < 0) throw std::logic_error("residual batch has no left-hand-side lookups");
    lhs.col(static_cast<Eigen::Index>(j)) = out.col(r.lhs_query) + r.emission.matrix();
  }
  return lhs;
}

Eigen::MatrixXd primal_rhs(const ResidualBatch& b, const Eigen::MatrixXd& out) {
  Eigen::MatrixXd rhs(3, static_cast<Eigen::Index>(b.records.size()));
  for (std::size_t j = 0; j < b.records.size(); ++j) {
    const ResidualRecord& r = b.records[j];
    Spectrum acc = Spectrum::Zero();
    for (int i = r.first; i < r.first + r.count; ++i) {
      const IncidentRecord& in = b.incident[static_cast<std::size_t>(i)];
      if (!in.scatter) continue;
      Spectrum l = in.next_emission;
      if (in.query >= 0) l += out.col(in.query).array();
      acc += in.weight * l;
    }
    rhs.col(static_cast<Eigen::Index>(j)) = (r.emission + r.scatter_norm * acc).matrix();
  }
  return rhs;
}

Eigen::MatrixXd diff_lhs(const ResidualBatch& b, const Eigen::MatrixXd& diff_out) {
  const Eigen::Index rows = diff_out.rows();
  Eigen::MatrixXd lhs(rows, static_cast<Eigen::Index>(b.records.size()));
  for (std::size_t j = 0; j < b.records.size(); ++j) {
    const ResidualRecord& r = b.records[j];
    if (r.lhs_query < 0) throw std::logic_error("residual batch has no left-hand-side lookups");
    auto col = lhs.col(static_cast<Eigen::Index>(j));
    col = diff_out.col(r.lhs_query);
    add_dual(col, r.demission, 1.0, rows / 3);
  }
  return lhs;
}

Eigen::MatrixXd diff_rhs(const ResidualBatch& b, const Eigen::MatrixXd& diff_out, const Eigen::MatrixXd& primal_out) {
  const Eigen::Index rows = diff_out.rows();
  const Eigen::Index groups = rows / 3;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(b.records.size()));
  Eigen::VectorXd scatter(rows), source(rows);
  for (std::size_t j = 0; j < b.records.size(); ++j) {
    const ResidualRecord& r = b.records[j];
    scatter.setZero();
    source.setZero();
    for (int i = r.first; i < r.first + r.count; ++i) {
      const IncidentRecord& in = b.incident[static_cast<std::size_t>(i)];
      if (in.scatter) {
        // f * dL(x'), with dL = N_theta + dE.
        Eigen::VectorXd dl = Eigen::VectorXd::Zero(rows);
        if (in.query >= 0) dl = diff_out.col(in.query);
        add_dual(dl, in.next_demission, 1.0, groups);
        for (Eigen::Index g = 0; g < groups; ++g) scatter.segment<3>(3 * g) += (in.weight * dl.segment<3>(3 * g).array()).matrix();
      }
      if (in.source && in.dweight.count > 0) {
        Spectrum l = in.next_emission;
        if (in.query >= 0) l += primal_out.col(in.query).array();
        DualSpectrum s = in.dweight;
        for (int q = 0; q < s.count; ++q) s.jacobian.row(q).array() *= l.transpose();
        add_dual(source, s, 1.0, groups);
      }
    }
    auto col = rhs.col(static_cast<Eigen::Index>(j));
    add_dual(col, r.demission, 1.0, groups);
    col += r.scatter_norm * scatter + r.source_norm * source;
  }
  return rhs;
}

namespace {

// Loss over residual columns r = lhs - rhs; `adj_r` receives d loss / d r.
double weighted_loss(const ResidualBatch& b, const Eigen::MatrixXd& res, const Eigen::MatrixXd& lhs, bool relative,
                     Eigen::MatrixXd& adj_r) {
  const double inv_n = 1.0 / static_cast<double>(b.records.size());
  adj_r.resize(res.rows(), res.cols());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < res.cols(); ++j) {
    const double w = b.records[static_cast<std::size_t>(j)].inv_pdf * inv_n;
    for (Eigen::Index c = 0; c < res.rows(); ++c) {
      double wc = w;
      if (relative) wc /= lhs(c, j) * lhs(c, j) + 1e-2;
      loss += wc * res(c, j) * res(c, j);
      adj_r(c, j) = 2.0 * wc * res(c, j);
    }
  }
  return loss;
}

}  // namespace

LossAndAdjoint primal_loss(const ResidualBatch& b, const Eigen::MatrixXd& out, bool relative) {
  const Eigen::MatrixXd lhs = primal_lhs(b, out);
  const Eigen::MatrixXd res = lhs - primal_rhs(b, out);
  Eigen::MatrixXd adj_r;
  LossAndAdjoint la;
  la.loss = weighted_loss(b, res, lhs, relative, adj_r);
  la.adjoint = Eigen::MatrixXd::Zero(out.rows(), out.cols());
  for (std::size_t j = 0; j < b.records.size(); ++j) {
    const ResidualRecord& r = b.records[j];
    const Eigen::Vector3d a = adj_r.col(static_cast<Eigen::Index>(j));
    la.adjoint.col(r.lhs_query) += a;
    for (int i = r.first; i < r.first + r.count; ++i) {
      const IncidentRecord& in = b.incident[static_cast<std::size_t>(i)];
      if (!in.scatter || in.query < 0) continue;
      la.adjoint.col(in.query) -= r.scatter_norm * (in.weight * a.array()).matrix();
    }
  }
  return la;
}

LossAndAdjoint diff_loss(const ResidualBatch& b, const Eigen::MatrixXd& diff_out, const Eigen::MatrixXd& primal_out,
                         bool relative) {
  const Eigen::Index groups = diff_out.rows() / 3;
  const Eigen::MatrixXd lhs = diff_lhs(b, diff_out);
  const Eigen::MatrixXd res = lhs - diff_rhs(b, diff_out, primal_out);
  Eigen::MatrixXd adj_r;
  LossAndAdjoint la;
  la.loss = weighted_loss(b, res, lhs, relative, adj_r);
  la.adjoint = Eigen::MatrixXd::Zero(diff_out.rows(), diff_out.cols());
  for (std::size_t j = 0; j < b.records.size(); ++j) {
    const ResidualRecord& r = b.records[j];
    const auto a = adj_r.col(static_cast<Eigen::Index>(j));
    la.adjoint.col(r.lhs_query) += a;
    for (int i = r.first; i < r.first + r.count; ++i) {
      const IncidentRecord& in = b.incident[static_cast<std::size_t>(i)];
      if (!in.scatter || in.query < 0) continue;
      for (Eigen::Index g = 0; g < groups; ++g) {
        la.adjoint.col(in.query).segment<3>(3 * g) -=
            r.scatter_norm * (in.weight * a.segment<3>(3 * g).array()).matrix();
      }
    }
  }
  return la;
}

namespace {

ResidualStats residual_stats(const ResidualBatch& b1, const ResidualBatch& b2, const Eigen::MatrixXd& r1,
                             const Eigen::MatrixXd& r2) {
  const auto n = static_cast<double>(r1.cols());
  ResidualStats st;
  st.mean = r1.rowwise().mean();
  const Eigen::MatrixXd centered = r1.colwise() - st.mean;
  st.mean_err = (centered.array().square().rowwise().sum() / std::max(n - 1.0, 1.0) / n).sqrt().matrix();
  Eigen::VectorXd prod(r1.cols()), plain(r1.cols());
  for (Eigen::Index j = 0; j < r1.cols(); ++j) {
    const double w = b1.records[static_cast<std::size_t>(j)].inv_pdf;
    prod[j] = w * r1.col(j).dot(r2.col(j));
    plain[j] = w * r1.col(j).squaredNorm();
  }
  (void)b2;
  st.loss = prod.mean();
  st.loss_err = std::sqrt((prod.array() - st.loss).square().sum() / std::max(n - 1.0, 1.0) / n);
  st.plain_loss = plain.mean();
  return st;
}

}  // namespace

ResidualStats primal_residual_stats(const Scene& scene, const QueryFn& primal_net, int records, int incident,
                                    std::uint64_t seed) {
  const BatchOptions opt{records, incident, true, false};
  const ResidualBatch b1 = sample_residual_batch(scene, opt, seed, 0, mix64(seed + 1));
  const ResidualBatch b2 = sample_residual_batch(scene, opt, seed, 0, mix64(seed + 2));
  const Eigen::MatrixXd o1 = primal_net(b1.queries);
  const Eigen::MatrixXd o2 = primal_net(b2.queries);
  const Eigen::MatrixXd lhs = primal_lhs(b1, o1);
  return residual_stats(b1, b2, lhs - primal_rhs(b1, o1), lhs - primal_rhs(b2, o2));
}

ResidualStats diff_residual_stats(const Scene& scene, const QueryFn& diff_net, const QueryFn& primal_net, int records,
                                  int incident, std::uint64_t seed) {
  const BatchOptions opt{records, incident, true, false};
  const ResidualBatch b1 = sample_residual_batch(scene, opt, seed, 0, mix64(seed + 1));
  const ResidualBatch b2 = sample_residual_batch(scene, opt, seed, 0, mix64(seed + 2));
  const Eigen::MatrixXd d1 = diff_net(b1.queries);
  const Eigen::MatrixXd d2 = diff_net(b2.queries);
  const Eigen::MatrixXd lhs = diff_lhs(b1, d1);
  return residual_stats(b1, b2, lhs - diff_rhs(b1, d1, primal_net(b1.queries)),
                        lhs - diff_rhs(b2, d2, primal_net(b2.queries)));
}

// ---------------------------------------------------------------------------
// Point evaluation

template <class S>
Spectrum eval_primal_lhs(const PrimalField<S>& field, const Scene& scene, const SurfacePoint& x, const Vec3& wo) {
  const FieldQuery q{x, wo};
  const Eigen::MatrixXd out = field.evaluate({&q, 1});
  return out.col(0).array() + emission(scene.material(x.material_id), x.normal, wo);
}

template <class S>
Spectrum eval_primal_rhs(const PrimalField<S>& field, const Scene& scene, const SurfacePoint& x, const Vec3& wo,
                         std::uint64_t seed, int incident) {
  const FieldQuery q{x, wo};
  const ResidualBatch b = rhs_batch(scene, {&q, 1}, incident, seed, 0);
  return primal_rhs(b, field.evaluate(b.queries)).col(0).array();
}

template <class S>
Eigen::MatrixXd eval_diff_lhs(const DiffField<S>& field, const Scene& scene, const SurfacePoint& x, const Vec3& wo) {
  const FieldQuery q{x, wo};
  Eigen::MatrixXd col = field.evaluate({&q, 1});
  add_dual(col, emission_dual(scene.material(x.material_id), x.normal, wo), 1.0, col.rows() / 3);
  const int n = field.param_count();
  return col.topRows(3 * n).reshaped(3, n).transpose();
}

template <class S>
Eigen::MatrixXd eval_diff_rhs(const DiffField<S>& field, const PrimalField<S>& primal, const Scene& scene,
                              const SurfacePoint& x, const Vec3& wo, std::uint64_t seed, int incident) {
  const FieldQuery q{x, wo};
  const ResidualBatch b = rhs_batch(scene, {&q, 1}, incident, seed, 0);
  const Eigen::MatrixXd col = diff_rhs(b, field.evaluate(b.queries), primal.evaluate(b.queries));
  const int n = field.param_count();
  return col.topRows(3 * n).reshaped(3, n).transpose();
}

// ---------------------------------------------------------------------------
// Training

namespace {

template <class S>
double grad_norm(nn::Network<S>& net) {
  double s = 0.0;
  for (auto* p : net.parameters()) s += p->grad.template cast<double>().squaredNorm();
  return std::sqrt(s);
}

BatchOptions train_batch_options(const TrainConfig& cfg) {
  BatchOptions opt;
  opt.records = cfg.batch;
  opt.incident = cfg.incident;
  return opt;
}

}  // namespace

double learning_rate(const TrainConfig& cfg, std::int64_t step) {
  if (cfg.lr_half_life <= 0) return cfg.lr;
  return cfg.lr * std::exp2(-static_cast<double>(step) / cfg.lr_half_life);
}

template <class S>
StepStats primal_train_step(PrimalField<S>& field, const Scene& scene, nn::Adam<S>& adam, const TrainConfig& cfg,
                            std::int64_t step) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto k = static_cast<std::uint64_t>(step);
  const ResidualBatch b = sample_residual_batch(scene, train_batch_options(cfg), cfg.seed, k, mix64(cfg.seed ^ 0x70726d));
  nn::Network<S>& net = field.network();
  nn::Tape<S> tape;
  const auto enc = encode<S>(field.binding(), b.queries);
  const int out = net.forward(tape, enc);
  const Eigen::MatrixXd values = tape.value(out).template cast<double>();
  const LossAndAdjoint la = primal_loss(b, values, cfg.relative_loss);
  net.zero_grad();
  tape.backward(out, la.adjoint.cast<S>());
  StepStats st;
  st.step = step;
  st.loss = la.loss;
  st.grad_norm = grad_norm(net);
  st.discarded = b.discarded;
  adam.config().lr = learning_rate(cfg, step);
  adam.step(net.parameters());
  st.wall_ms = elapsed_ms(t0);
  return st;
}

template <class S>
StepStats diff_train_step(DiffField<S>& field, const PrimalField<S>& primal, const Scene& scene, nn::Adam<S>& adam,
                          const TrainConfig& cfg, std::int64_t step) {
  if (primal.network().output_width() != 3) throw std::logic_error("differential training needs a primal field");
  const auto t0 = std::chrono::steady_clock::now();
  const auto k = static_cast<std::uint64_t>(step);
  const ResidualBatch b = sample_residual_batch(scene, train_batch_options(cfg), cfg.seed, k, mix64(cfg.seed ^ 0x646966));
  const Eigen::MatrixXd primal_out = primal.evaluate(b.queries);
  nn::Network<S>& net = field.network();
  nn::Tape<S> tape;
  const auto enc = encode<S>(field.binding(), b.queries);
  const int out = net.forward(tape, enc);
  const Eigen::MatrixXd values = tape.value(out).template cast<double>();
  const LossAndAdjoint la = diff_loss(b, values, primal_out, cfg.relative_loss);
  net.zero_grad();
  tape.backward(out, la.adjoint.cast<S>());
  StepStats st;
  st.step = step;
  st.loss = la.loss;
  st.grad_norm = grad_norm(net);
  st.discarded = b.discarded;
  adam.config().lr = learning_rate(cfg, step);
  adam.step(net.parameters());
  st.wall_ms = elapsed_ms(t0);
  return st;
}

template <class S>
std::vector<StepStats> train_primal(PrimalField<S>& field, const Scene& scene, nn::Adam<S>& adam,
                                    const TrainConfig& cfg, std::int64_t first_step) {
  std::vector<StepStats> log;
  log.reserve(static_cast<std::size_t>(std::max(cfg.steps, 0)));
  for (int i = 0; i < cfg.steps; ++i) log.push_back(primal_train_step(field, scene, adam, cfg, first_step + i));
  return log;
}

template <class S>
std::vector<StepStats> train_diff(DiffField<S>& field, const PrimalField<S>& primal, const Scene& scene,
                                  nn::Adam<S>& adam, const TrainConfig& cfg, std::int64_t first_step) {
  std::vector<StepStats> log;
  log.reserve(static_cast<std::size_t>(std::max(cfg.steps, 0)));
  for (int i = 0; i < cfg.steps; ++i) log.push_back(diff_train_step(field, primal, scene, adam, cfg, first_step + i));
  return log;
}

void write_train_log(const std::filesystem::path& path, const std::vector<StepStats>& log, bool include_wall) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "step,loss,grad_norm,wall_ms,discarded_samples\n";
  for (const StepStats& s : log) {
    out << s.step << ',' << s.loss << ',' << s.grad_norm << ',' << (include_wall ? s.wall_ms : 0.0) << ','
        << s.discarded << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

#define RADFIELD_INSTANTIATE(S)                                                                                     \
  template nn::EncodingBatch<S> encode<S>(const FieldBinding&, std::span<const FieldQuery>, std::int64_t*);        \
  template class RadianceField<S>;                                                                                  \
  template Spectrum eval_primal_lhs<S>(const PrimalField<S>&, const Scene&, const SurfacePoint&, const Vec3&);      \
  template Spectrum eval_primal_rhs<S>(const PrimalField<S>&, const Scene&, const SurfacePoint&, const Vec3&,       \
                                       std::uint64_t, int);                                                         \
  template Eigen::MatrixXd eval_diff_lhs<S>(const DiffField<S>&, const Scene&, const SurfacePoint&, const Vec3&);   \
  template Eigen::MatrixXd eval_diff_rhs<S>(const DiffField<S>&, const PrimalField<S>&, const Scene&,               \
                                            const SurfacePoint&, const Vec3&, std::uint64_t, int);                  \
  template StepStats primal_train_step<S>(PrimalField<S>&, const Scene&, nn::Adam<S>&, const TrainConfig&,          \
                                          std::int64_t);                                                            \
  template StepStats diff_train_step<S>(DiffField<S>&, const PrimalField<S>&, const Scene&, nn::Adam<S>&,           \
                                        const TrainConfig&, std::int64_t);                                          \
  template std::vector<StepStats> train_primal<S>(PrimalField<S>&, const Scene&, nn::Adam<S>&, const TrainConfig&,  \
                                                  std::int64_t);                                                    \
  template std::vector<StepStats> train_diff<S>(DiffField<S>&, const PrimalField<S>&, const Scene&, nn::Adam<S>&,   \
                                                const TrainConfig&, std::int64_t);

RADFIELD_INSTANTIATE(float)
RADFIELD_INSTANTIATE(double)

#undef RADFIELD_INSTANTIATE

}  // namespace radfield
