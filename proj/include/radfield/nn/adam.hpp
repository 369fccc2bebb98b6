// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/nn/parameter.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace radfield::nn {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed list of parameter blocks.
template <class S>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  std::int64_t steps() const { return step_; }
  /// Gradient entries skipped because they were not finite.
  std::int64_t skipped() const { return skipped_; }
  std::vector<Mat<S>>& first_moments() { return m_; }
  std::vector<Mat<S>>& second_moments() { return v_; }
  const std::vector<Mat<S>>& first_moments() const { return m_; }
  const std::vector<Mat<S>>& second_moments() const { return v_; }
  void set_steps(std::int64_t s) { step_ = s; }

  /// One update of every block from its `grad`.
  void step(const std::vector<Parameter<S>*>& params) {
    begin_step(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter<S>& p = *params[i];
      ensure(i, p.value.rows(), p.value.cols());
      update(i, p.value.data(), p.grad.data(), p.value.size(), nullptr);
    }
  }

  /// One update of a single dense vector with optional per-entry learning rates.
  void step(Eigen::Ref<Vec<S>> value, const Vec<S>& grad, const Vec<S>* lr = nullptr) {
    if (grad.size() != value.size()) throw std::invalid_argument("Adam: gradient shape mismatch");
    begin_step(1);
    ensure(0, value.size(), 1);
    update(0, value.data(), grad.data(), value.size(), lr ? lr->data() : nullptr);
  }

 private:
  void begin_step(std::size_t blocks) {
    if (!m_.empty() && m_.size() != blocks) throw std::invalid_argument("Adam: parameter block count changed");
    if (m_.empty()) {
      m_.resize(blocks);
      v_.resize(blocks);
    }
    ++step_;
  }

  void ensure(std::size_t i, Eigen::Index rows, Eigen::Index cols) {
    if (m_[i].size() == 0) {
      m_[i] = Mat<S>::Zero(rows, cols);
      v_[i] = Mat<S>::Zero(rows, cols);
    } else if (m_[i].rows() != rows || m_[i].cols() != cols) {
      throw std::invalid_argument("Adam: parameter shape changed");
    }
  }

  void update(std::size_t i, S* value, const S* grad, Eigen::Index n, const S* lr) {
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    S* m = m_[i].data();
    S* v = v_[i].data();
    for (Eigen::Index j = 0; j < n; ++j) {
      const double g = static_cast<double>(grad[j]);
      if (!std::isfinite(g)) {
        ++skipped_;
        continue;
      }
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<S>(mj);
      v[j] = static_cast<S>(vj);
      const double rate = lr ? static_cast<double>(lr[j]) : cfg_.lr;
      value[j] = static_cast<S>(value[j] - rate * (mj / c1) / (std::sqrt(vj / c2) + cfg_.eps));
    }
  }

  AdamConfig cfg_;
  std::vector<Mat<S>> m_, v_;
  std::int64_t step_ = 0;
  std::int64_t skipped_ = 0;
};

}  // namespace radfield::nn
