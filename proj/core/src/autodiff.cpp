// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "flowforge/error.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge::nnet {

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<std::size_t> parents, Backward backward) {
  bool needs = false;
  for (std::size_t p : parents) needs = needs || nodes_[p].requires_grad;
  nodes_.push_back(Node{std::move(value), Matrix(), needs, std::move(parents), needs ? std::move(backward) : Backward{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("loss belongs to a different tape");
  const Matrix& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward needs a scalar loss, got " + std::to_string(lv.rows()) + "x" +
                        std::to_string(lv.cols()));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  accumulate(loss.id(), Matrix::Ones(1, 1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, i);
  }
  // Leaves that never received a gradient still report zeros.
  for (Node& n : nodes_) {
    if (n.requires_grad && n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw ContractError("vars live on different tapes");
  return *a.tape();
}

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": operand shapes differ");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row must be 1 x cols");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  const std::size_t ia = a.id(), ir = row.id();
  return t.record(std::move(out), {ia, ir}, [ia, ir](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(ia, g);
    if (tp.requires_grad(ir)) tp.accumulate(ir, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same(a.value(), b.value(), "add");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same(a.value(), b.value(), "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    if (tp.requires_grad(ib)) tp.accumulate(ib, -tp.grad(self));
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same(a.value(), b.value(), "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(a.value() * s, {ia}, [ia, s](Tape& tp, std::size_t self) { tp.accumulate(ia, tp.grad(self) * s); });
}

Var tanh(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().tanh().matrix();
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& y = tp.value(self);
    tp.accumulate(ia, tp.grad(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

double gelu_grad(double x) {
  const double u = kGeluC * (x + kGeluK * x * x * x);
  const double th = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluK * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluK * x * x * x))); }

Var gelu(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr([](double x) { return gelu_value(x); });
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    Matrix d = tp.value(ia).unaryExpr([](double x) { return gelu_grad(x); });
    tp.accumulate(ia, tp.grad(self).cwiseProduct(d));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ContractError("vars live on different tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix out(rows, cols);
  Eigen::Index c0 = 0;
  for (const Var& p : parts) {
    out.middleCols(c0, p.cols()) = p.value();
    c0 += p.cols();
  }
  return t.record(std::move(out), ids, [ids, widths](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Tape& t = *table.tape();
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) throw ContractError("gather_rows: id out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  const std::size_t it = table.id();
  std::vector<int> idx(ids.begin(), ids.end());
  return t.record(std::move(out), {it}, [it, idx](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix acc = Matrix::Zero(tp.value(it).rows(), tp.value(it).cols());
    for (std::size_t i = 0; i < idx.size(); ++i) acc.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    tp.accumulate(it, acc);
  });
}

Var row_sqnorm(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise().squaredNorm();
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);  // rows x 1
    Matrix d = 2.0 * tp.value(ia);
    d.array().colwise() *= g.col(0).array();
    tp.accumulate(ia, d);
  });
}

Var scale_rows(Var a, std::span<const double> weights) {
  Tape& t = *a.tape();
  if (static_cast<Eigen::Index>(weights.size()) != a.rows()) throw ShapeError("scale_rows: one weight per row");
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  Matrix out = a.value();
  out.array().colwise() *= w.array();
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, w](Tape& tp, std::size_t self) {
    Matrix g = tp.grad(self);
    g.array().colwise() *= w.array();
    tp.accumulate(ia, g);
  });
}

Var softplus(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr([](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); });
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    Matrix s = tp.value(ia).unaryExpr([](double x) {
      return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    tp.accumulate(ia, tp.grad(self).cwiseProduct(s));
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  const Matrix& v = a.value();
  Matrix out(1, 1);
  out(0, 0) = pairwise_sum(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& src = tp.value(ia);
    tp.accumulate(ia, Matrix::Constant(src.rows(), src.cols(), tp.grad(self)(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ContractError("mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

}  // namespace flowforge::nnet
