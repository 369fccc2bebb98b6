// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/nn/grid.hpp"
#include "radfield/nn/mlp.hpp"
#include "radfield/nn/tape.hpp"

#include <vector>

namespace radfield::nn {

struct NetworkConfig {
  int hidden_width = 128;
  int hidden_layers = 4;
  std::vector<int> grid_resolutions{8, 16, 32};
  int feature_dim = 4;

  bool operator==(const NetworkConfig&) const = default;
};

/// Network inputs for a batch: per-query constant features (surface
/// attributes and direction) plus normalized positions for the grid lookup.
template <class S>
struct EncodingBatch {
  Mat<S> constants;                                  // constant_width x batch
  Eigen::Matrix<double, 3, Eigen::Dynamic> positions;  // normalized to [0,1]^3

  Eigen::Index size() const { return positions.cols(); }
};

/// Feature grids feeding an MLP: out = mlp([constants; grid(positions)]).
template <class S>
class Network {
 public:
  Network() = default;
  Network(const NetworkConfig& cfg, int constant_width, int output_width)
      : config_(cfg), constant_width_(constant_width), grid_(cfg.grid_resolutions, cfg.feature_dim) {
    MlpShape shape;
    shape.input_width = constant_width + grid_.output_width();
    shape.hidden_width = cfg.hidden_width;
    shape.hidden_layers = cfg.hidden_layers;
    shape.output_width = output_width;
    mlp_ = Mlp<S>(shape);
  }

  void init(std::uint64_t seed, double grid_scale = 1e-2) {
    Sampler rng(seed, 0x6e6574);
    mlp_.init(rng, true);
    grid_.init_uniform(rng, grid_scale);
  }

  const NetworkConfig& config() const { return config_; }
  int constant_width() const { return constant_width_; }
  int output_width() const { return mlp_.shape().output_width; }
  Mlp<S>& mlp() { return mlp_; }
  const Mlp<S>& mlp() const { return mlp_; }
  FeatureGrid<S>& grid() { return grid_; }
  const FeatureGrid<S>& grid() const { return grid_; }

  Mat<S> forward(const EncodingBatch<S>& batch) const {
    check(batch);
    Mat<S> x(constant_width_ + grid_.output_width(), batch.size());
    x.topRows(constant_width_) = batch.constants;
    x.bottomRows(grid_.output_width()) = grid_.encode(batch.positions, nullptr);
    return mlp_.forward(x);
  }

  int forward(Tape<S>& tape, const EncodingBatch<S>& batch) {
    check(batch);
    const int c = tape.input(batch.constants);
    const int g = tape.grid_encode(batch.positions, grid_);
    return mlp_.forward(tape, tape.concat({c, g}));
  }

  /// Every learnable block in declaration order: MLP layers, then grid levels.
  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    mlp_.for_each_parameter([&](Parameter<S>& p) { out.push_back(&p); });
    for (auto& level : grid_.levels()) out.push_back(&level);
    return out;
  }

  void zero_grad() {
    for (Parameter<S>* p : parameters()) p->zero_grad();
  }

 private:
  void check(const EncodingBatch<S>& batch) const {
    if (batch.constants.rows() != constant_width_ || batch.constants.cols() != batch.positions.cols()) {
      throw std::invalid_argument("encoding batch does not match network input layout");
    }
  }

  NetworkConfig config_;
  int constant_width_ = 0;
  FeatureGrid<S> grid_;
  Mlp<S> mlp_;
};

}  // namespace radfield::nn
