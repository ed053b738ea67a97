// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/flow.hpp"

#include <algorithm>
#include <cmath>

#include "flowforge/error.hpp"

namespace flowforge::flow {

std::string to_string(TimestepDist d) {
  switch (d) {
    case TimestepDist::uniform: return "uniform";
    case TimestepDist::u_shaped_centered: return "u_shaped_centered";
    case TimestepDist::u_shaped_literal: return "u_shaped_literal";
  }
  return "uniform";
}

TimestepDist timestep_dist_from_string(const std::string& name) {
  if (name == "uniform") return TimestepDist::uniform;
  if (name == "u_shaped_centered" || name == "u_shaped") return TimestepDist::u_shaped_centered;
  if (name == "u_shaped_literal") return TimestepDist::u_shaped_literal;
  throw ConfigError("unknown timestep distribution '" + name + "'");
}

void SamplerSpec::validate() const {
  if (!(a > 0) || !std::isfinite(a)) throw ConfigError("sampler sharpness a must be positive");
}

double SamplerSpec::density(double u) const {
  if (u < 0.0 || u > 1.0) return 0.0;
  switch (kind) {
    case TimestepDist::uniform: return 1.0;
    case TimestepDist::u_shaped_centered: return a * std::cosh(a * (2.0 * u - 1.0)) / std::sinh(a);
    case TimestepDist::u_shaped_literal: return a * std::cosh(a * u) / std::sinh(a);
  }
  return 0.0;
}

double SamplerSpec::cdf(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  switch (kind) {
    case TimestepDist::uniform: return u;
    case TimestepDist::u_shaped_centered:
      return (std::sinh(a * (2.0 * u - 1.0)) + std::sinh(a)) / (2.0 * std::sinh(a));
    case TimestepDist::u_shaped_literal: return std::sinh(a * u) / std::sinh(a);
  }
  return u;
}

double SamplerSpec::inverse_cdf(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("inverse_cdf: p must lie in [0, 1]");
  double u = p;
  switch (kind) {
    case TimestepDist::uniform: break;
    case TimestepDist::u_shaped_centered:
      u = 0.5 * (std::asinh((2.0 * p - 1.0) * std::sinh(a)) / a + 1.0);
      break;
    case TimestepDist::u_shaped_literal: u = std::asinh(p * std::sinh(a)) / a; break;
  }
  return std::clamp(u, 0.0, 1.0);
}

std::vector<double> sample_timesteps(const SamplerSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  if (n == 0) throw ContractError("sample_timesteps: n must be at least 1");
  std::vector<double> t(n);
  for (double& v : t) v = spec.inverse_cdf(rng.uniform());
  return t;
}

void GuidanceSpec::validate() const {
  if (!(cfg_max >= 1.0)) throw ConfigError("guidance cfg_max must be >= 1");
  if (!(time_shift >= 1.0)) throw ConfigError("guidance time_shift must be >= 1");
}

double cfg_scale(double t, double cfg_max) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("cfg_scale: t must lie in [0, 1]");
  if (!(cfg_max >= 1.0)) throw DomainError("cfg_scale: cfg_max must be >= 1");
  return std::max(cfg_max - 9.0 * t * (cfg_max - 1.0), 1.0);
}

double shift_time(double t, double s) {
  if (!(s > 0.0)) throw DomainError("time shift must be positive");
  return s * t / (1.0 + (s - 1.0) * t);
}

StepSchedule::StepSchedule(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) throw ContractError("schedule needs at least two timesteps");
  if (times_.front() != 0.0 || times_.back() != 1.0) throw ContractError("schedule must start at 0 and end at 1");
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) throw ContractError("schedule must be strictly increasing");
  }
}

StepSchedule StepSchedule::uniform(std::size_t steps) { return shifted(steps, 1.0); }

StepSchedule StepSchedule::shifted(std::size_t steps, double shift) {
  if (steps == 0) throw ContractError("schedule needs at least one step");
  std::vector<double> t(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(steps);
    t[i] = shift == 1.0 ? u : shift_time(u, shift);
  }
  t.front() = 0.0;
  t.back() = 1.0;
  return StepSchedule(std::move(t));
}

Tensor interpolate(const Tensor& x0, const Tensor& x1, double t) {
  require_same_shape(x0, x1, "interpolate");
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("interpolate: t must lie in [0, 1]");
  Tensor out = x0;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * x0[i] + t * x1[i];
  return out;
}

Tensor velocity_target(const Tensor& x0, const Tensor& x1) {
  require_same_shape(x0, x1, "velocity_target");
  return x1 - x0;
}

VelocityFn velocity_of(const nnet::VectorFieldParams& params) {
  return [&params](const Tensor& x, std::span<const double> t, std::span<const int> y) {
    return nnet::forward_batch(params, x, t, y);
  };
}

void FlowBatch::validate() const {
  if (x0.empty() || size() == 0) throw ContractError("flow batch is empty");
  require_same_shape(x0, x1, "flow batch");
  if (x0.rank() != 2) throw ShapeError("flow batch rows must be (B, D)");
  if (y.size() != size()) throw ShapeError("flow batch needs one condition per row");
}

namespace {

/// Per-row interpolated inputs x_t.
Tensor interpolate_rows(const FlowBatch& b, std::span<const double> t) {
  const std::size_t d = b.x0.dim(1);
  Tensor xt = b.x0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!(t[i] >= 0.0 && t[i] <= 1.0)) throw DomainError("timestep outside [0, 1]");
    for (std::size_t j = 0; j < d; ++j) {
      xt[i * d + j] = (1.0 - t[i]) * b.x0[i * d + j] + t[i] * b.x1[i * d + j];
    }
  }
  return xt;
}

void check_weights(std::span<const double> weights, std::size_t n) {
  if (!weights.empty() && weights.size() != n) throw ShapeError("need one loss weight per row");
}

}  // namespace

double fm_loss_at(const VelocityFn& model, const FlowBatch& batch, std::span<const double> t,
                  std::span<const double> weights) {
  batch.validate();
  if (t.size() != batch.size()) throw ShapeError("fm_loss: need one timestep per row");
  check_weights(weights, batch.size());
  const Tensor xt = interpolate_rows(batch, t);
  const Tensor u = model(xt, t, batch.y);
  require_same_shape(u, xt, "model output");
  const std::size_t d = batch.x0.dim(1);
  std::vector<double> per_row(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double r = u[i * d + j] - (batch.x1[i * d + j] - batch.x0[i * d + j]);
      s += r * r;
    }
    per_row[i] = weights.empty() ? s : weights[i] * s;
  }
  return pairwise_sum(per_row) / static_cast<double>(batch.size());
}

double fm_loss(const VelocityFn& model, const FlowBatch& batch, const SamplerSpec& sampler, Rng& rng) {
  batch.validate();
  const std::vector<double> t = sample_timesteps(sampler, batch.size(), rng);
  return fm_loss_at(model, batch, t);
}

double fm_loss(const nnet::VectorFieldParams& params, const FlowBatch& batch, const SamplerSpec& sampler, Rng& rng) {
  return fm_loss(velocity_of(params), batch, sampler, rng);
}

nnet::Var fm_loss_var(const nnet::VectorFieldParams& params, const nnet::ParamVars& vars, nnet::Tape& tape,
                      const FlowBatch& batch, std::span<const double> t, std::span<const double> weights) {
  batch.validate();
  if (t.size() != batch.size()) throw ShapeError("fm_loss: need one timestep per row");
  check_weights(weights, batch.size());
  const Tensor xt = interpolate_rows(batch, t);
  nnet::Var x = tape.constant(nnet::to_matrix(xt));
  nnet::Var target = tape.constant(nnet::to_matrix(batch.x1 - batch.x0));
  nnet::Var u = nnet::forward(params, vars, x, t, batch.y);
  nnet::Var err = nnet::row_sqnorm(nnet::sub(u, target));
  if (!weights.empty()) err = nnet::scale_rows(err, weights);
  return nnet::mean(err);
}

TrainStepStats fm_train_step(nnet::VectorFieldParams& params, nnet::AdamState& adam, FlowBatch batch,
                             const SamplerSpec& sampler, double cond_dropout, Rng& rng,
                             std::span<const double> weights) {
  batch.validate();
  const std::vector<double> t = sample_timesteps(sampler, batch.size(), rng);
  if (cond_dropout > 0.0) {
    for (int& id : batch.y) {
      if (rng.bernoulli(cond_dropout)) id = params.null_condition();
    }
  }
  const nnet::ValueAndGrad vg = nnet::value_and_grad(params, [&](nnet::Tape& tape, const nnet::ParamVars& vars) {
    return fm_loss_var(params, vars, tape, batch, t, weights);
  });
  nnet::adam_step(params, vg.grads, adam);
  return TrainStepStats{vg.loss};
}

Tensor euler_sample(const VelocityFn& model, const Tensor& x0, const StepSchedule& schedule,
                    const std::optional<GuidanceSpec>& guidance, std::span<const int> y) {
  Tensor x = x0.rank() == 1 ? x0.reshaped({1, x0.size()}) : x0;
  if (x.rank() != 2) throw ShapeError("euler_sample: x0 must be (B, D) or (D)");
  const std::size_t rows = x.dim(0);
  if (y.size() != rows) throw ShapeError("euler_sample: need one condition per row");
  if (guidance) guidance->validate();
  const std::vector<int> null_ids(rows, guidance ? guidance->null_condition : 0);
  const std::span<const double> ts = schedule.times();
  std::vector<double> tcol(rows);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    std::fill(tcol.begin(), tcol.end(), ts[i]);
    const double dt = ts[i + 1] - ts[i];
    Tensor v = model(x, tcol, y);
    require_same_shape(v, x, "model output");
    if (guidance) {
      const Tensor vn = model(x, tcol, null_ids);
      const double w = cfg_scale(ts[i], guidance->cfg_max);
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = vn[k] + w * (v[k] - vn[k]);
    }
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += v[k] * dt;
  }
  return x0.rank() == 1 ? x.reshaped({x0.size()}) : x;
}

Tensor euler_sample(const nnet::VectorFieldParams& params, const Tensor& x0, const StepSchedule& schedule,
                    const std::optional<GuidanceSpec>& guidance, std::span<const int> y) {
  return euler_sample(velocity_of(params), x0, schedule, guidance, y);
}

}  // namespace flowforge::flow
