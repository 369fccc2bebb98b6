// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/analytic.hpp"

#include <cmath>

namespace radfield::analytic {

double polygon_irradiance(const Vec3& x, const Vec3& n, std::span<const Vec3> polygon, double radiance) {
  double sum = 0.0;
  const std::size_t k = polygon.size();
  for (std::size_t i = 0; i < k; ++i) {
    const Vec3 a = (polygon[i] - x).normalized();
    const Vec3 b = (polygon[(i + 1) % k] - x).normalized();
    const Vec3 c = a.cross(b);
    const double s = c.norm();
    if (s == 0.0) continue;
    const double theta = std::atan2(s, a.dot(b));
    sum += theta * n.dot(c / s);
  }
  return 0.5 * radiance * std::abs(sum);
}

std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("quadrature order must be >= 1");
  std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[static_cast<std::size_t>(i)] = 0.5 * (1.0 - z);
    w[static_cast<std::size_t>(i)] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

DirectScene::DirectScene(const Scene& scene) : scene_(&scene) {
  const auto& mats = scene.materials();
  for (std::size_t i = 0; i < mats.size(); ++i) {
    if (mats[i].model == MaterialModel::diffuse && mats[i].albedo_param >= 0) {
      if (receiver_ >= 0) throw SceneError("analytic scene: more than one differentiable receiver");
      receiver_ = static_cast<int>(i);
      albedo_param_ = mats[i].albedo_param;
    }
  }
  if (receiver_ < 0) throw SceneError("analytic scene: no diffuse material with differentiable albedo");
  if (mats[static_cast<std::size_t>(receiver_)].is_emitter()) throw SceneError("analytic scene: receiver emits");
  const auto& shapes = scene.geometry().shapes();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const Shape& s = shapes[i];
    const MaterialDesc& m = scene.material(s.material);
    if (s.material == receiver_) {
      if (receiver_shape_ >= 0 || s.kind != ShapeKind::quad) {
        throw SceneError("analytic scene: the receiver must be a single quad");
      }
      receiver_shape_ = static_cast<int>(i);
    } else if (m.is_emitter()) {
      if (s.kind != ShapeKind::quad || m.model != MaterialModel::diffuse || (m.albedo != 0.0).any()) {
        throw SceneError("analytic scene: emitters must be black quads");
      }
      lights_.push_back({{s.p0, s.p0 + s.e1, s.p0 + s.e1 + s.e2, s.p0 + s.e2}, m.emission});
    } else {
      throw SceneError("analytic scene: shape " + std::to_string(i) + " is neither receiver nor emitter");
    }
  }
  if (receiver_shape_ < 0) throw SceneError("analytic scene: receiver material has no shape");
  const Shape& r = shapes[static_cast<std::size_t>(receiver_shape_)];
  const std::array<Vec3, 4> rc{r.p0, r.p0 + r.e1, r.p0 + r.e1 + r.e2, r.p0 + r.e2};
  for (const Light& l : lights_) {
    for (const Vec3& lc : l.corners) {
      for (const Vec3& c : rc) {
        if (r.normal.dot(lc - c) <= 0.0) throw SceneError("analytic scene: an emitter dips below the receiver plane");
      }
    }
  }
}

Spectrum DirectScene::irradiance(const Vec3& x) const {
  const Vec3& n = scene_->geometry().shape(receiver_shape_).normal;
  Spectrum e = Spectrum::Zero();
  for (const Light& l : lights_) {
    for (int c = 0; c < 3; ++c) e[c] += polygon_irradiance(x, n, l.corners, l.radiance[c]);
  }
  return e;
}

Spectrum DirectScene::albedo_derivative(const SurfacePoint& x, const Vec3& wo) const {
  if (x.material_id != receiver_ || x.normal.dot(wo) <= 0.0) return Spectrum::Zero();
  return irradiance(x.point) * kInvPi;
}

Spectrum DirectScene::radiance(const SurfacePoint& x, const Vec3& wo) const {
  const MaterialDesc& m = scene_->material(x.material_id);
  if (x.material_id == receiver_) return m.albedo * albedo_derivative(x, wo);
  return emission(m, x.normal, wo);
}

namespace {

template <class Fn>
Image quadrature_image(const Scene& scene, int order, Fn&& value) {
  const Camera& cam = scene.camera();
  const auto [nodes, weights] = gauss_legendre(order);
  Image img(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Spectrum acc = Spectrum::Zero();
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (std::size_t j = 0; j < nodes.size(); ++j) {
          const Ray ray = cam.generate_ray(x + nodes[i], y + nodes[j]);
          const auto hit = scene.geometry().intersect(ray);
          if (!hit) continue;
          acc += weights[i] * weights[j] * value(surface_point(*hit), Vec3(-ray.direction));
        }
      }
      img.set(x, y, acc);
    }
  }
  return img;
}

}  // namespace

Image DirectScene::image(int order) const {
  return quadrature_image(*scene_, order, [&](const SurfacePoint& x, const Vec3& wo) { return radiance(x, wo); });
}

Image DirectScene::albedo_derivative_image(int order) const {
  return quadrature_image(*scene_, order,
                          [&](const SurfacePoint& x, const Vec3& wo) { return albedo_derivative(x, wo); });
}

QueryFn DirectScene::primal_solution() const {
  return [this](std::span<const FieldQuery> qs) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(qs.size()));
    for (std::size_t j = 0; j < qs.size(); ++j) {
      const FieldQuery& q = qs[j];
      const Spectrum e = emission(scene_->material(q.x.material_id), q.x.normal, q.wo);
      out.col(static_cast<Eigen::Index>(j)) = (radiance(q.x, q.wo) - e).matrix();
    }
    return out;
  };
}

QueryFn DirectScene::diff_solution() const {
  return [this](std::span<const FieldQuery> qs) {
    const int rows = 3 * std::max(scene_->param_count(), 1);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(qs.size()));
    for (std::size_t j = 0; j < qs.size(); ++j) {
      const Spectrum d = albedo_derivative(qs[j].x, qs[j].wo);
      for (int c = 0; c < 3; ++c) out(3 * (albedo_param_ + c) + c, static_cast<Eigen::Index>(j)) = d[c];
    }
    return out;
  };
}

}  // namespace radfield::analytic
