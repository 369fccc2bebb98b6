// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/nn/parameter.hpp"
#include "radfield/rng.hpp"

#include <algorithm>
#include <vector>

namespace radfield::nn {

/// Corner indices and trilinear weights for one batch, per level.
template <class S>
struct GridCache {
  std::vector<Eigen::Matrix<int, 8, Eigen::Dynamic>> corners;
  std::vector<Eigen::Matrix<S, 8, Eigen::Dynamic>> weights;
};

/// Dense multi-resolution grids of learnable feature vectors over [0,1]^3.
/// A level of resolution r has r cells and (r+1) vertices per axis; each
/// vertex stores `feature_dim` features. Queries interpolate trilinearly.
template <class S>
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(std::vector<int> resolutions, int feature_dim)
      : resolutions_(std::move(resolutions)), feature_dim_(feature_dim) {
    for (std::size_t l = 0; l < resolutions_.size(); ++l) {
      const Eigen::Index v = vertex_count(resolutions_[l]);
      levels_.emplace_back("grid" + std::to_string(l), feature_dim_, v);
    }
  }

  static Eigen::Index vertex_count(int res) {
    const Eigen::Index n = res + 1;
    return n * n * n;
  }

  void init_uniform(Sampler& rng, double scale) {
    for (auto& level : levels_) {
      for (Eigen::Index i = 0; i < level.value.size(); ++i) {
        level.value.data()[i] = static_cast<S>(scale * (2.0 * rng.next1d() - 1.0));
      }
    }
  }

  int output_width() const { return static_cast<int>(levels_.size()) * feature_dim_; }
  int feature_dim() const { return feature_dim_; }
  const std::vector<int>& resolutions() const { return resolutions_; }
  std::vector<Parameter<S>>& levels() { return levels_; }
  const std::vector<Parameter<S>>& levels() const { return levels_; }

  /// Trilinear weights and vertex ids of a normalized point on one level.
  static void corners_of(int res, const Eigen::Vector3d& p, int* ids, S* w) {
    int cell[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
      const double x = std::clamp(p[a], 0.0, 1.0) * res;
      cell[a] = std::min(static_cast<int>(x), res - 1);
      frac[a] = x - cell[a];
    }
    const int n = res + 1;
    for (int c = 0; c < 8; ++c) {
      const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
      ids[c] = ((cell[2] + dz) * n + (cell[1] + dy)) * n + (cell[0] + dx);
      w[c] = static_cast<S>((dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                            (dz ? frac[2] : 1.0 - frac[2]));
    }
  }

  /// Interpolated features, (levels * feature_dim) x batch.
  Mat<S> encode(const Eigen::Matrix<double, 3, Eigen::Dynamic>& positions, GridCache<S>* cache) const {
    const Eigen::Index batch = positions.cols();
    Mat<S> out(output_width(), batch);
    if (cache) {
      cache->corners.assign(levels_.size(), Eigen::Matrix<int, 8, Eigen::Dynamic>(8, batch));
      cache->weights.assign(levels_.size(), Eigen::Matrix<S, 8, Eigen::Dynamic>(8, batch));
    }
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const Mat<S>& feat = levels_[l].value;
      for (Eigen::Index b = 0; b < batch; ++b) {
        int ids[8];
        S w[8];
        corners_of(resolutions_[l], positions.col(b), ids, w);
        auto dst = out.block(static_cast<Eigen::Index>(l) * feature_dim_, b, feature_dim_, 1);
        dst.setZero();
        for (int c = 0; c < 8; ++c) dst.noalias() += w[c] * feat.col(ids[c]);
        if (cache) {
          for (int c = 0; c < 8; ++c) {
            cache->corners[l](c, b) = ids[c];
            cache->weights[l](c, b) = w[c];
          }
        }
      }
    }
    return out;
  }

  /// Scatters d(out) into the level gradients through the cached corners.
  void backward(const GridCache<S>& cache, const Mat<S>& upstream) {
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      Mat<S>& g = levels_[l].grad;
      const auto rows = upstream.middleRows(static_cast<Eigen::Index>(l) * feature_dim_, feature_dim_);
      for (Eigen::Index b = 0; b < upstream.cols(); ++b) {
        for (int c = 0; c < 8; ++c) {
          g.col(cache.corners[l](c, b)).noalias() += cache.weights[l](c, b) * rows.col(b);
        }
      }
    }
  }

 private:
  std::vector<int> resolutions_;
  int feature_dim_ = 0;
  std::vector<Parameter<S>> levels_;
};

}  // namespace radfield::nn
