// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace flowforge::nnet {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape over dense 2-D matrices.
///
/// Nodes are appended in evaluation order, so a single reverse sweep from
/// the loss visits every node after all of its consumers.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Var constant(Matrix value);
  Var parameter(Matrix value);

  /// Records an op node. `backward(tape, self)` reads `grad(self)` and
  /// accumulates into the parents via `accumulate`.
  Var record(Matrix value, std::vector<std::size_t> parents, Backward backward);

  /// Seeds d(loss)/d(loss) = 1 and sweeps. The loss must be a 1x1 node.
  void backward(Var loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  const Matrix& grad(Var v) const { return grad(v.id()); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  void accumulate(std::size_t id, const Matrix& g);
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
/// Adds a 1 x n row to every row of `a`.
Var add_row(Var a, Var row);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var tanh(Var a);
/// Tanh-approximated GELU.
Var gelu(Var a);
Var concat_cols(std::span<const Var> parts);
/// Row lookup `table[ids[i]]` for each i.
Var gather_rows(Var table, std::span<const int> ids);
/// Per-row squared Euclidean norm, shape (rows, 1).
Var row_sqnorm(Var a);
/// Multiplies row i by the constant weights[i].
Var scale_rows(Var a, std::span<const double> weights);
/// log(1 + exp(x)) elementwise, overflow-safe.
Var softplus(Var a);
/// Sum of all entries, shape (1, 1).
Var sum(Var a);
/// Mean of all entries, shape (1, 1).
Var mean(Var a);

double gelu_value(double x);

}  // namespace flowforge::nnet
