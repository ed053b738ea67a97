// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowforge/autodiff.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge::nnet {

enum class Activation { identity, tanh, gelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Shape of the velocity network u(x, y, t).
///
/// The network input is the concatenation `[x, time_embed(t), cond_embed(y)]`;
/// either embedding may be disabled by giving it width 0.
struct NetConfig {
  std::size_t data_dim = 2;
  std::vector<std::size_t> hidden = {128, 128, 128};
  std::size_t time_embed_dim = 16;
  std::size_t cond_embed_dim = 8;
  /// Real condition ids are 0..num_conditions-1; id num_conditions is the null condition.
  std::size_t num_conditions = 2;
  Activation activation = Activation::gelu;

  std::size_t input_width() const { return data_dim + time_embed_dim + cond_embed_dim; }
  void validate() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

struct DenseLayer {
  Tensor weight;  // (fan_in, fan_out)
  Tensor bias;    // (fan_out)
  Activation activation = Activation::identity;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Parameters of the velocity network plus its fixed time-frequency table.
struct VectorFieldParams {
  NetConfig config;
  std::vector<DenseLayer> layers;
  std::vector<double> frequencies;  // time_embed_dim / 2 entries, strictly increasing
  Tensor cond_table;                // (num_conditions + 1, cond_embed_dim); empty when cond_embed_dim == 0

  int null_condition() const { return static_cast<int>(config.num_conditions); }
  std::size_t parameter_count() const;

  /// Trainable tensors in canonical order: w0, b0, w1, b1, ..., cond_table.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;

  void validate() const;

  friend bool operator==(const VectorFieldParams&, const VectorFieldParams&) = default;
};

/// Frequencies 2*pi*(k+1), k = 0..dim/2-1.
std::vector<double> default_frequencies(std::size_t dim);

/// Interleaved [sin(f0 t), cos(f0 t), sin(f1 t), cos(f1 t), ...].
Tensor time_embed(double t, std::span<const double> frequencies);
Tensor time_embed(double t, std::size_t dim);

/// Glorot-uniform weights and zero biases drawn from the seed's "init" stream.
VectorFieldParams init_params(const NetConfig& config, std::uint64_t seed);
VectorFieldParams zero_params(const NetConfig& config);

/// Tape-bound view of a parameter set; `all` follows VectorFieldParams::tensors() order.
struct ParamVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
  std::optional<Var> cond_table;
  std::vector<Var> all;
};

ParamVars bind(Tape& tape, const VectorFieldParams& params, bool trainable);

/// Tape forward pass for a batch: x is (B, data_dim), one t and one condition per row.
Var forward(const VectorFieldParams& params, const ParamVars& vars, Var x, std::span<const double> t,
            std::span<const int> y);

/// Batched velocity: x is (B, data_dim) or a single (data_dim) vector.
Tensor forward_batch(const VectorFieldParams& params, const Tensor& x, std::span<const double> t,
                     std::span<const int> y);

/// Velocity at a single time for every row of x; no condition means the null condition.
Tensor forward(const VectorFieldParams& params, const Tensor& x, double t, std::optional<int> y = std::nullopt);

using LossFn = std::function<Var(Tape&, const ParamVars&)>;

struct ValueAndGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;  // congruent to params.tensors()
};

/// Exact reverse-mode gradient of a scalar loss built on the tape.
ValueAndGrad value_and_grad(const VectorFieldParams& params, const LossFn& loss);
std::vector<Tensor> grad(const VectorFieldParams& params, const LossFn& loss);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig hp;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState for_params(std::span<const Tensor* const> params, AdamConfig hp);
  static AdamState for_params(const VectorFieldParams& params, AdamConfig hp);
};

/// Bias-corrected Adam update over an arbitrary list of tensors.
void adam_update(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);
void adam_step(VectorFieldParams& params, std::span<const Tensor> grads, AdamState& state);

Matrix to_matrix(const Tensor& t);
Tensor to_tensor(const Matrix& m);

}  // namespace flowforge::nnet
