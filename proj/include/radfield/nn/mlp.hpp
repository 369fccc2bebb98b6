// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/nn/tape.hpp"
#include "radfield/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace radfield::nn {

struct MlpShape {
  int input_width = 0;
  int hidden_width = 128;
  int hidden_layers = 4;
  int output_width = 3;

  bool operator==(const MlpShape&) const = default;
};

/// Fully connected ReLU network with an identity output layer.
template <class S>
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(const MlpShape& shape) : shape_(shape) {
    if (shape.input_width <= 0 || shape.output_width <= 0 || shape.hidden_width <= 0 || shape.hidden_layers < 0) {
      throw std::invalid_argument("invalid MLP shape");
    }
    int in = shape.input_width;
    for (int l = 0; l <= shape.hidden_layers; ++l) {
      const int out = l == shape.hidden_layers ? shape.output_width : shape.hidden_width;
      weights_.emplace_back("layer" + std::to_string(l) + ".weight", out, in);
      biases_.emplace_back("layer" + std::to_string(l) + ".bias", out, 1);
      in = out;
    }
  }

  /// He-uniform weights, zero biases; optionally a zero output layer so a
  /// fresh network evaluates to exactly 0.
  void init(Sampler& rng, bool zero_output_layer) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Mat<S>& w = weights_[l].value;
      const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
      const bool zero = zero_output_layer && l + 1 == weights_.size();
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = zero ? S(0) : static_cast<S>(bound * (2.0 * rng.next1d() - 1.0));
      }
      biases_[l].value.setZero();
    }
  }

  const MlpShape& shape() const { return shape_; }
  std::size_t layer_count() const { return weights_.size(); }
  Parameter<S>& weight(std::size_t l) { return weights_[l]; }
  Parameter<S>& bias(std::size_t l) { return biases_[l]; }
  const Parameter<S>& weight(std::size_t l) const { return weights_[l]; }
  const Parameter<S>& bias(std::size_t l) const { return biases_[l]; }

  /// Untaped evaluation on a batch (input_width x batch).
  Mat<S> forward(const Mat<S>& x) const {
    check_input(x.rows());
    Mat<S> h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Mat<S> next;
      next.noalias() = weights_[l].value * h;
      next.colwise() += biases_[l].value.col(0);
      if (l + 1 < weights_.size()) next = next.cwiseMax(S(0));
      h.swap(next);
    }
    return h;
  }

  /// Taped evaluation starting from node `x`; returns the output node.
  int forward(Tape<S>& tape, int x) {
    check_input(tape.value(x).rows());
    int h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = tape.linear(h, weights_[l], biases_[l]);
      if (l + 1 < weights_.size()) h = tape.relu(h);
    }
    return h;
  }

  template <class Fn>
  void for_each_parameter(Fn&& fn) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      fn(weights_[l]);
      fn(biases_[l]);
    }
  }

 private:
  void check_input(Eigen::Index rows) const {
    if (rows != shape_.input_width) {
      throw std::invalid_argument("MLP input width " + std::to_string(rows) + " does not match configured " +
                                  std::to_string(shape_.input_width));
    }
  }

  MlpShape shape_;
  std::vector<Parameter<S>> weights_;
  std::vector<Parameter<S>> biases_;
};

}  // namespace radfield::nn
