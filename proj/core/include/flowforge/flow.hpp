// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowforge/nnet.hpp"
#include "flowforge/rng.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge::flow {

// ---------------------------------------------------------------------------
// Timestep distributions

enum class TimestepDist {
  uniform,
  /// p(u) proportional to cosh(a (2u - 1)): symmetric, heavy at both ends.
  u_shaped_centered,
  /// p(u) proportional to exp(a u) + exp(-a u) on [0, 1]: monotone increasing.
  u_shaped_literal,
};

std::string to_string(TimestepDist d);
TimestepDist timestep_dist_from_string(const std::string& name);

struct SamplerSpec {
  TimestepDist kind = TimestepDist::uniform;
  double a = 5.0;

  void validate() const;
  double density(double u) const;
  double cdf(double u) const;
  double inverse_cdf(double p) const;
};

/// n i.i.d. draws in [0, 1] by inverse CDF.
std::vector<double> sample_timesteps(const SamplerSpec& spec, std::size_t n, Rng& rng);

// ---------------------------------------------------------------------------
// Guidance and schedules

struct GuidanceSpec {
  double cfg_max = 1.0;
  double time_shift = 1.0;
  int null_condition = 0;

  void validate() const;
};

/// max(cfg_max - 9 t (cfg_max - 1), 1).
double cfg_scale(double t, double cfg_max);

/// s t / (1 + (s - 1) t); identity for s = 1.
double shift_time(double t, double s);

/// Strictly increasing timesteps from exactly 0 to exactly 1.
class StepSchedule {
 public:
  explicit StepSchedule(std::vector<double> times);

  static StepSchedule uniform(std::size_t steps);
  static StepSchedule shifted(std::size_t steps, double shift);

  std::span<const double> times() const noexcept { return times_; }
  std::size_t steps() const noexcept { return times_.size() - 1; }

 private:
  std::vector<double> times_;
};

// ---------------------------------------------------------------------------
// Path and loss

/// (1 - t) x0 + t x1.
Tensor interpolate(const Tensor& x0, const Tensor& x1, double t);
/// x1 - x0.
Tensor velocity_target(const Tensor& x0, const Tensor& x1);

/// Velocity model over a batch: x is (B, D), one t and one condition per row.
using VelocityFn = std::function<Tensor(const Tensor& x, std::span<const double> t, std::span<const int> y)>;

VelocityFn velocity_of(const nnet::VectorFieldParams& params);

/// Paired noise/data rows with one condition id per row.
struct FlowBatch {
  Tensor x0;  // (B, D)
  Tensor x1;  // (B, D)
  std::vector<int> y;

  std::size_t size() const { return x0.empty() ? 0 : x0.dim(0); }
  void validate() const;
};

/// Mean over rows of |u(x_t, y, t) - (x1 - x0)|^2 at the given per-row times.
double fm_loss_at(const VelocityFn& model, const FlowBatch& batch, std::span<const double> t,
                  std::span<const double> weights = {});

/// fm_loss_at with per-row timesteps drawn from `sampler`.
double fm_loss(const VelocityFn& model, const FlowBatch& batch, const SamplerSpec& sampler, Rng& rng);
double fm_loss(const nnet::VectorFieldParams& params, const FlowBatch& batch, const SamplerSpec& sampler, Rng& rng);

/// The same loss recorded on a tape, for training.
nnet::Var fm_loss_var(const nnet::VectorFieldParams& params, const nnet::ParamVars& vars, nnet::Tape& tape,
                      const FlowBatch& batch, std::span<const double> t, std::span<const double> weights = {});

struct TrainStepStats {
  double loss = 0.0;
};

/// One Adam step on fm_loss. With probability `cond_dropout` a row's
/// condition is replaced by the null id so the unconditional branch trains.
TrainStepStats fm_train_step(nnet::VectorFieldParams& params, nnet::AdamState& adam, FlowBatch batch,
                             const SamplerSpec& sampler, double cond_dropout, Rng& rng,
                             std::span<const double> weights = {});

// ---------------------------------------------------------------------------
// Sampling

/// Explicit Euler from t=0 to t=1. With guidance the velocity is
/// u_null + cfg(t_i) (u_cond - u_null).
Tensor euler_sample(const VelocityFn& model, const Tensor& x0, const StepSchedule& schedule,
                    const std::optional<GuidanceSpec>& guidance, std::span<const int> y);
Tensor euler_sample(const nnet::VectorFieldParams& params, const Tensor& x0, const StepSchedule& schedule,
                    const std::optional<GuidanceSpec>& guidance, std::span<const int> y);

}  // namespace flowforge::flow
