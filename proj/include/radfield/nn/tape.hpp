// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/nn/grid.hpp"
#include "radfield/nn/parameter.hpp"

#include <stdexcept>
#include <vector>

namespace radfield::nn {

enum class OpKind { input, linear, relu, grid_encode, concat };

/// Reverse-mode tape over batched column-major tensors (features x batch).
/// Nodes are appended in evaluation order, so inputs always precede their
/// consumers and backward() is a single reverse sweep.
template <class S>
class Tape {
 public:
  struct Node {
    OpKind kind = OpKind::input;
    std::vector<int> inputs;
    Mat<S> value;
    Mat<S> adjoint;
    bool requires_grad = false;
    Parameter<S>* weight = nullptr;
    Parameter<S>* bias = nullptr;
    FeatureGrid<S>* grid = nullptr;
    GridCache<S> grid_cache;
  };

  int input(Mat<S> value) {
    Node n;
    n.kind = OpKind::input;
    n.value = std::move(value);
    return push(std::move(n));
  }

  /// y = W x + b, batch along columns.
  int linear(int x, Parameter<S>& weight, Parameter<S>& bias) {
    const Mat<S>& in = nodes_.at(static_cast<std::size_t>(x)).value;
    if (in.rows() != weight.value.cols()) {
      throw std::invalid_argument("linear '" + weight.name + "': input width " + std::to_string(in.rows()) +
                                  " does not match " + std::to_string(weight.value.cols()));
    }
    Node n;
    n.kind = OpKind::linear;
    n.inputs = {x};
    n.value.noalias() = weight.value * in;
    n.value.colwise() += bias.value.col(0);
    n.weight = &weight;
    n.bias = &bias;
    n.requires_grad = true;
    return push(std::move(n));
  }

  int relu(int x) {
    Node n;
    n.kind = OpKind::relu;
    n.inputs = {x};
    n.value = nodes_.at(static_cast<std::size_t>(x)).value.cwiseMax(S(0));
    n.requires_grad = nodes_[static_cast<std::size_t>(x)].requires_grad;
    return push(std::move(n));
  }

  int grid_encode(const Eigen::Matrix<double, 3, Eigen::Dynamic>& positions, FeatureGrid<S>& grid) {
    Node n;
    n.kind = OpKind::grid_encode;
    n.grid = &grid;
    n.value = grid.encode(positions, &n.grid_cache);
    n.requires_grad = true;
    return push(std::move(n));
  }

  /// Stacks inputs along the feature (row) axis.
  int concat(const std::vector<int>& parts) {
    Node n;
    n.kind = OpKind::concat;
    n.inputs = parts;
    Eigen::Index rows = 0;
    const Eigen::Index cols = nodes_.at(static_cast<std::size_t>(parts.at(0))).value.cols();
    for (int p : parts) {
      const Node& in = nodes_.at(static_cast<std::size_t>(p));
      if (in.value.cols() != cols) throw std::invalid_argument("concat: batch size mismatch");
      rows += in.value.rows();
      n.requires_grad = n.requires_grad || in.requires_grad;
    }
    n.value.resize(rows, cols);
    Eigen::Index r = 0;
    for (int p : parts) {
      const Mat<S>& v = nodes_[static_cast<std::size_t>(p)].value;
      n.value.middleRows(r, v.rows()) = v;
      r += v.rows();
    }
    return push(std::move(n));
  }

  const Mat<S>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

  /// Accumulates into every reachable parameter's `grad` the gradient of
  /// <value(output), output_adjoint>.
  void backward(int output, const Mat<S>& output_adjoint) {
    if (nodes_.empty()) throw std::logic_error("backward called on an empty tape");
    Node& out = nodes_.at(static_cast<std::size_t>(output));
    if (out.value.rows() != output_adjoint.rows() || out.value.cols() != output_adjoint.cols()) {
      throw std::invalid_argument("backward: adjoint shape does not match output");
    }
    out.adjoint = output_adjoint;
    for (int id = output; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.adjoint.size() == 0 || !n.requires_grad) continue;
      switch (n.kind) {
        case OpKind::input:
          break;
        case OpKind::linear: {
          Node& in = nodes_[static_cast<std::size_t>(n.inputs[0])];
          n.weight->grad.noalias() += n.adjoint * in.value.transpose();
          n.bias->grad.col(0) += n.adjoint.rowwise().sum();
          if (in.requires_grad) accumulate(in, n.weight->value.transpose() * n.adjoint);
          break;
        }
        case OpKind::relu: {
          Node& in = nodes_[static_cast<std::size_t>(n.inputs[0])];
          accumulate(in, (n.value.array() > S(0)).select(n.adjoint, S(0)));
          break;
        }
        case OpKind::grid_encode:
          n.grid->backward(n.grid_cache, n.adjoint);
          break;
        case OpKind::concat: {
          Eigen::Index r = 0;
          for (int p : n.inputs) {
            Node& in = nodes_[static_cast<std::size_t>(p)];
            const Eigen::Index rows = in.value.rows();
            if (in.requires_grad) accumulate(in, n.adjoint.middleRows(r, rows));
            r += rows;
          }
          break;
        }
      }
      n.adjoint.resize(0, 0);
    }
  }

 private:
  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  template <class Expr>
  static void accumulate(Node& n, const Expr& g) {
    if (n.adjoint.size() == 0) {
      n.adjoint = g;
    } else {
      n.adjoint += g;
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace radfield::nn
