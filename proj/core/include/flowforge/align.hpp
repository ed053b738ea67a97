// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "flowforge/flow.hpp"
#include "flowforge/nnet.hpp"
#include "flowforge/rng.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge::align {

// ---------------------------------------------------------------------------
// Reflow distillation

/// A noise draw and the teacher's ODE endpoint for it.
struct ReflowPair {
  Tensor x0;
  Tensor x1_hat;
  int y = 0;
  int teacher_nfe = 1;
};

/// Draws n noise vectors and conditions, integrates the teacher with `nfe`
/// uniform Euler steps and records (x0, x1_hat, y). Conditions are drawn
/// uniformly over the real (non-null) ids.
std::vector<ReflowPair> generate_reflow_pairs(const nnet::VectorFieldParams& teacher, std::size_t n, int nfe,
                                              const std::optional<flow::GuidanceSpec>& guidance, Rng& rng);

flow::FlowBatch to_batch(std::span<const ReflowPair> pairs);

enum class DistillWeighting {
  /// Plain MSE; emphasis on the ends comes from the U-shaped sampler.
  none,
  /// Literal 1/t^2 weight with t clamped to at least 1e-3.
  inverse_t_squared,
};

constexpr double kMinWeightedTime = 1e-3;

std::vector<double> distill_weights(std::span<const double> t, DistillWeighting weighting);

double distill_loss(const flow::VelocityFn& student, std::span<const ReflowPair> pairs,
                    const flow::SamplerSpec& sampler, Rng& rng,
                    DistillWeighting weighting = DistillWeighting::none);
double distill_loss(const nnet::VectorFieldParams& student, std::span<const ReflowPair> pairs,
                    const flow::SamplerSpec& sampler, Rng& rng,
                    DistillWeighting weighting = DistillWeighting::none);

/// One Adam step of the student on a batch of reflow pairs.
flow::TrainStepStats distill_train_step(nnet::VectorFieldParams& student, nnet::AdamState& adam,
                                        const flow::FlowBatch& batch, const flow::SamplerSpec& sampler,
                                        DistillWeighting weighting, Rng& rng);

// ---------------------------------------------------------------------------
// Flow-matching DPO

/// Preferred and non-preferred samples for one condition, evaluated at a
/// shared noise draw and a shared interior timestep.
struct PreferencePair {
  int y = 0;
  Tensor x_w;
  Tensor x_l;
  Tensor shared_noise;
  double shared_t = 0.5;

  void validate() const;
};

struct DpoConfig {
  double beta = 0.5;
  nnet::AdamConfig adam{.lr = 1e-3};

  void validate() const;
};

/// Velocity error |u(x_t, y, t) - (x - noise)|^2 with x_t on the straight path from noise to x.
double preference_error(const flow::VelocityFn& model, const Tensor& x, const PreferencePair& pair);

/// z = [s_ref(x_w) - s_theta(x_w)] - [s_ref(x_l) - s_theta(x_l)].
double dpo_inner_z(const flow::VelocityFn& theta, const flow::VelocityFn& ref, const PreferencePair& pair);
double dpo_inner_z(const nnet::VectorFieldParams& theta, const nnet::VectorFieldParams& ref,
                   const PreferencePair& pair);

/// -log sigmoid(beta z).
double dpo_loss(double z, double beta);

/// |dL/dz| = beta (1 - sigmoid(beta z)).
double dpo_grad_scale(double z, double beta);

struct DpoDiagnostics {
  std::vector<double> z;
  double loss = 0.0;
};

/// Weighted-mean DPO loss over a batch and its gradient w.r.t. theta.
/// Empty `weights` means every pair has weight 1.
struct DpoEvaluation {
  DpoDiagnostics diagnostics;
  std::vector<Tensor> grads;
};

DpoEvaluation dpo_loss_and_grad(const nnet::VectorFieldParams& theta, const nnet::VectorFieldParams& ref,
                                std::span<const PreferencePair> batch, double beta,
                                std::span<const double> weights = {});

/// One Adam step on the mean DPO loss; `ref` is read-only.
DpoDiagnostics dpo_train_step(nnet::VectorFieldParams& theta, const nnet::VectorFieldParams& ref,
                              std::span<const PreferencePair> batch, const DpoConfig& cfg, nnet::AdamState& adam);

/// Desk-scale preference synthesis: `samples` generated by the model are
/// split into preferred (within `radius` of `target`) and non-preferred
/// rows, and up to `n` pairs are formed with fresh shared noise and an
/// interior timestep per pair.
std::vector<PreferencePair> synthesize_preferences(const Tensor& samples, int y, const Tensor& target,
                                                   double radius, std::size_t n, Rng& rng);

/// Fraction of rows of `samples` within `radius` of `target`.
double fraction_near(const Tensor& samples, const Tensor& target, double radius);

}  // namespace flowforge::align
