// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/align.hpp"

#include <algorithm>
#include <cmath>

#include "flowforge/error.hpp"

namespace flowforge::align {

std::vector<ReflowPair> generate_reflow_pairs(const nnet::VectorFieldParams& teacher, std::size_t n, int nfe,
                                              const std::optional<flow::GuidanceSpec>& guidance, Rng& rng) {
  if (nfe < 1) throw ConfigError("reflow teacher nfe must be >= 1");
  if (n == 0) return {};
  const std::size_t d = teacher.config.data_dim;
  Tensor x0({n, d});
  for (double& v : x0.data()) v = rng.normal();
  std::vector<int> y(n, teacher.null_condition());
  if (teacher.config.num_conditions > 0) {
    for (int& id : y) id = static_cast<int>(rng.uniform_index(teacher.config.num_conditions));
  }
  const Tensor x1 = flow::euler_sample(teacher, x0, flow::StepSchedule::uniform(static_cast<std::size_t>(nfe)),
                                       guidance, y);
  std::vector<ReflowPair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ReflowPair p;
    p.x0 = Tensor({d}, std::vector<double>(x0.data().begin() + i * d, x0.data().begin() + (i + 1) * d));
    p.x1_hat = Tensor({d}, std::vector<double>(x1.data().begin() + i * d, x1.data().begin() + (i + 1) * d));
    p.y = y[i];
    p.teacher_nfe = nfe;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

flow::FlowBatch to_batch(std::span<const ReflowPair> pairs) {
  if (pairs.empty()) throw ContractError("reflow pair set is empty");
  const std::size_t d = pairs.front().x0.size();
  std::vector<double> a, b;
  a.reserve(pairs.size() * d);
  b.reserve(pairs.size() * d);
  flow::FlowBatch batch;
  for (const ReflowPair& p : pairs) {
    require_same_shape(p.x0, p.x1_hat, "reflow pair");
    if (p.x0.size() != d) throw ShapeError("reflow pairs differ in dimension");
    if (p.teacher_nfe < 1) throw ContractError("reflow pair teacher_nfe must be >= 1");
    a.insert(a.end(), p.x0.data().begin(), p.x0.data().end());
    b.insert(b.end(), p.x1_hat.data().begin(), p.x1_hat.data().end());
    batch.y.push_back(p.y);
  }
  batch.x0 = Tensor({pairs.size(), d}, std::move(a));
  batch.x1 = Tensor({pairs.size(), d}, std::move(b));
  return batch;
}

std::vector<double> distill_weights(std::span<const double> t, DistillWeighting weighting) {
  if (weighting == DistillWeighting::none) return {};
  std::vector<double> w(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double tc = std::max(t[i], kMinWeightedTime);
    w[i] = 1.0 / (tc * tc);
  }
  return w;
}

double distill_loss(const flow::VelocityFn& student, std::span<const ReflowPair> pairs,
                    const flow::SamplerSpec& sampler, Rng& rng, DistillWeighting weighting) {
  const flow::FlowBatch batch = to_batch(pairs);
  const std::vector<double> t = flow::sample_timesteps(sampler, batch.size(), rng);
  const std::vector<double> w = distill_weights(t, weighting);
  return flow::fm_loss_at(student, batch, t, w);
}

double distill_loss(const nnet::VectorFieldParams& student, std::span<const ReflowPair> pairs,
                    const flow::SamplerSpec& sampler, Rng& rng, DistillWeighting weighting) {
  return distill_loss(flow::velocity_of(student), pairs, sampler, rng, weighting);
}

flow::TrainStepStats distill_train_step(nnet::VectorFieldParams& student, nnet::AdamState& adam,
                                        const flow::FlowBatch& batch, const flow::SamplerSpec& sampler,
                                        DistillWeighting weighting, Rng& rng) {
  batch.validate();
  const std::vector<double> t = flow::sample_timesteps(sampler, batch.size(), rng);
  const std::vector<double> w = distill_weights(t, weighting);
  const nnet::ValueAndGrad vg = nnet::value_and_grad(student, [&](nnet::Tape& tape, const nnet::ParamVars& vars) {
    return flow::fm_loss_var(student, vars, tape, batch, t, w);
  });
  nnet::adam_step(student, vg.grads, adam);
  return flow::TrainStepStats{vg.loss};
}

void PreferencePair::validate() const {
  require_same_shape(x_w, x_l, "preference pair");
  require_same_shape(x_w, shared_noise, "preference pair noise");
  if (x_w.rank() != 1) throw ShapeError("preference pair samples must be vectors");
  if (!(shared_t > 0.0 && shared_t < 1.0)) throw DomainError("preference pair shared_t must lie in (0, 1)");
}

void DpoConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("dpo beta must be positive");
  if (!(adam.lr > 0.0)) throw ConfigError("dpo learning rate must be positive");
}

double preference_error(const flow::VelocityFn& model, const Tensor& x, const PreferencePair& pair) {
  const Tensor xt = flow::interpolate(pair.shared_noise, x, pair.shared_t);
  const Tensor target = flow::velocity_target(pair.shared_noise, x);
  const double t[] = {pair.shared_t};
  const int y[] = {pair.y};
  const Tensor u = model(xt.reshaped({1, xt.size()}), t, y).reshaped({xt.size()});
  return squared_norm(u - target);
}

double dpo_inner_z(const flow::VelocityFn& theta, const flow::VelocityFn& ref, const PreferencePair& pair) {
  pair.validate();
  const double w = preference_error(ref, pair.x_w, pair) - preference_error(theta, pair.x_w, pair);
  const double l = preference_error(ref, pair.x_l, pair) - preference_error(theta, pair.x_l, pair);
  return w - l;
}

double dpo_inner_z(const nnet::VectorFieldParams& theta, const nnet::VectorFieldParams& ref,
                   const PreferencePair& pair) {
  return dpo_inner_z(flow::velocity_of(theta), flow::velocity_of(ref), pair);
}

double dpo_loss(double z, double beta) {
  if (!(beta > 0.0)) throw ConfigError("dpo beta must be positive");
  const double x = -beta * z;  // softplus(x) = -log sigmoid(beta z)
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double dpo_grad_scale(double z, double beta) {
  if (!(beta > 0.0)) throw ConfigError("dpo beta must be positive");
  const double x = beta * z;
  // 1 - sigmoid(x) = sigmoid(-x)
  const double s = x >= 0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
  return beta * s;
}

namespace {

struct StackedPairs {
  flow::FlowBatch win;
  flow::FlowBatch lose;
  std::vector<double> t;
};

StackedPairs stack(std::span<const PreferencePair> batch) {
  StackedPairs s;
  const std::size_t d = batch.front().x_w.size();
  std::vector<double> noise, xw, xl;
  for (const PreferencePair& p : batch) {
    p.validate();
    if (p.x_w.size() != d) throw ShapeError("preference pairs differ in dimension");
    noise.insert(noise.end(), p.shared_noise.data().begin(), p.shared_noise.data().end());
    xw.insert(xw.end(), p.x_w.data().begin(), p.x_w.data().end());
    xl.insert(xl.end(), p.x_l.data().begin(), p.x_l.data().end());
    s.win.y.push_back(p.y);
    s.t.push_back(p.shared_t);
  }
  const Shape shape{batch.size(), d};
  s.win.x0 = Tensor(shape, noise);
  s.win.x1 = Tensor(shape, std::move(xw));
  s.lose.x0 = Tensor(shape, std::move(noise));
  s.lose.x1 = Tensor(shape, std::move(xl));
  s.lose.y = s.win.y;
  return s;
}

/// Per-row velocity errors for one side of the pairs, recorded on the tape.
nnet::Var side_errors(const nnet::VectorFieldParams& params, const nnet::ParamVars& vars, nnet::Tape& tape,
                      const flow::FlowBatch& side, std::span<const double> t) {
  const std::size_t d = side.x0.dim(1);
  Tensor xt = side.x0;
  for (std::size_t i = 0; i < side.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      xt[i * d + j] = (1.0 - t[i]) * side.x0[i * d + j] + t[i] * side.x1[i * d + j];
    }
  }
  nnet::Var u = nnet::forward(params, vars, tape.constant(nnet::to_matrix(xt)), t, side.y);
  nnet::Var target = tape.constant(nnet::to_matrix(side.x1 - side.x0));
  return nnet::row_sqnorm(nnet::sub(u, target));
}

}  // namespace

DpoEvaluation dpo_loss_and_grad(const nnet::VectorFieldParams& theta, const nnet::VectorFieldParams& ref,
                                std::span<const PreferencePair> batch, double beta, std::span<const double> weights) {
  if (batch.empty()) throw ContractError("dpo batch is empty");
  if (!(beta > 0.0)) throw ConfigError("dpo beta must be positive");
  if (!weights.empty() && weights.size() != batch.size()) throw ShapeError("need one weight per preference pair");
  const StackedPairs s = stack(batch);

  // Reference errors are constants of the objective.
  Eigen::VectorXd ref_gap(static_cast<Eigen::Index>(batch.size()));
  {
    nnet::Tape tape;
    const nnet::ParamVars rv = nnet::bind(tape, ref, false);
    const nnet::Matrix rw = side_errors(ref, rv, tape, s.win, s.t).value();
    const nnet::Matrix rl = side_errors(ref, rv, tape, s.lose, s.t).value();
    ref_gap = (rw - rl).col(0);
  }

  double weight_total = 0.0;
  std::vector<double> w(batch.size(), 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  for (double v : w) {
    if (!(v >= 0.0)) throw ContractError("dpo pair weights must be non-negative");
    weight_total += v;
  }
  if (!(weight_total > 0.0)) throw ContractError("dpo pair weights sum to zero");
  for (double& v : w) v /= weight_total;

  DpoDiagnostics diag;
  const nnet::ValueAndGrad vg = nnet::value_and_grad(theta, [&](nnet::Tape& tape, const nnet::ParamVars& vars) {
    nnet::Var ew = side_errors(theta, vars, tape, s.win, s.t);
    nnet::Var el = side_errors(theta, vars, tape, s.lose, s.t);
    nnet::Matrix gap = ref_gap;
    // z = (ref_w - ref_l) + (theta_l - theta_w)
    nnet::Var z = nnet::add(tape.constant(std::move(gap)), nnet::sub(el, ew));
    const nnet::Matrix& zv = z.value();
    diag.z.assign(zv.data(), zv.data() + zv.size());
    nnet::Var per_pair = nnet::softplus(nnet::scale(z, -beta));
    return nnet::sum(nnet::scale_rows(per_pair, w));
  });
  diag.loss = vg.loss;
  return DpoEvaluation{std::move(diag), vg.grads};
}

DpoDiagnostics dpo_train_step(nnet::VectorFieldParams& theta, const nnet::VectorFieldParams& ref,
                              std::span<const PreferencePair> batch, const DpoConfig& cfg, nnet::AdamState& adam) {
  cfg.validate();
  DpoEvaluation ev = dpo_loss_and_grad(theta, ref, batch, cfg.beta);
  nnet::adam_step(theta, ev.grads, adam);
  return std::move(ev.diagnostics);
}

double fraction_near(const Tensor& samples, const Tensor& target, double radius) {
  if (samples.rank() != 2 || samples.dim(1) != target.size()) throw ShapeError("fraction_near: shape mismatch");
  const std::size_t n = samples.dim(0), d = samples.dim(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double r = samples[i * d + j] - target[j];
      s += r * r;
    }
    if (s <= radius * radius) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<PreferencePair> synthesize_preferences(const Tensor& samples, int y, const Tensor& target,
                                                   double radius, std::size_t n, Rng& rng) {
  if (samples.rank() != 2 || samples.dim(1) != target.size()) throw ShapeError("synthesize_preferences: shape mismatch");
  const std::size_t rows = samples.dim(0), d = samples.dim(1);
  std::vector<Tensor> good, bad;
  for (std::size_t i = 0; i < rows; ++i) {
    Tensor row({d}, std::vector<double>(samples.data().begin() + i * d, samples.data().begin() + (i + 1) * d));
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (row[j] - target[j]) * (row[j] - target[j]);
    (s <= radius * radius ? good : bad).push_back(std::move(row));
  }
  std::vector<PreferencePair> out;
  if (good.empty() || bad.empty()) return out;
  for (std::size_t k = 0; k < n; ++k) {
    PreferencePair p;
    p.y = y;
    p.x_w = good[rng.uniform_index(good.size())];
    p.x_l = bad[rng.uniform_index(bad.size())];
    p.shared_noise = Tensor({d});
    for (double& v : p.shared_noise.data()) v = rng.normal();
    // Interior timestep, bounded away from the endpoints.
    p.shared_t = 0.02 + 0.96 * rng.uniform();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace flowforge::align
