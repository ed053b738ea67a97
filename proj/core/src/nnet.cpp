// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/nnet.hpp"

#include <cmath>
#include <numbers>

#include "flowforge/error.hpp"
#include "flowforge/rng.hpp"

namespace flowforge::nnet {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::gelu: return "gelu";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "gelu") return Activation::gelu;
  throw ConfigError("unknown activation '" + name + "'");
}

void NetConfig::validate() const {
  if (data_dim == 0) throw ConfigError("net.data_dim must be positive");
  if (time_embed_dim % 2 != 0) throw ConfigError("net.time_embed_dim must be even");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("net.hidden widths must be positive");
  }
}

std::size_t VectorFieldParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

std::vector<Tensor*> VectorFieldParams::tensors() {
  std::vector<Tensor*> out;
  for (DenseLayer& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  if (!cond_table.empty()) out.push_back(&cond_table);
  return out;
}

std::vector<const Tensor*> VectorFieldParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const DenseLayer& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  if (!cond_table.empty()) out.push_back(&cond_table);
  return out;
}

std::vector<std::string> VectorFieldParams::tensor_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.push_back("layer" + std::to_string(i) + ".weight");
    out.push_back("layer" + std::to_string(i) + ".bias");
  }
  if (!cond_table.empty()) out.push_back("cond_table");
  return out;
}

void VectorFieldParams::validate() const {
  config.validate();
  if (layers.size() != config.hidden.size() + 1) throw ShapeError("layer count does not match config");
  std::size_t fan_in = config.input_width();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::size_t fan_out = i + 1 < layers.size() ? config.hidden[i] : config.data_dim;
    const DenseLayer& l = layers[i];
    if (l.weight.shape() != Shape{fan_in, fan_out} || l.bias.shape() != Shape{fan_out}) {
      throw ShapeError("layer " + std::to_string(i) + " shapes do not chain: weight " +
                       shape_to_string(l.weight.shape()) + ", expected (" + std::to_string(fan_in) + ", " +
                       std::to_string(fan_out) + ")");
    }
    fan_in = fan_out;
  }
  if (frequencies.size() * 2 != config.time_embed_dim) throw ShapeError("frequency table size mismatch");
  for (std::size_t i = 1; i < frequencies.size(); ++i) {
    if (!(frequencies[i] > frequencies[i - 1])) throw ConfigError("frequency table must be strictly increasing");
  }
  if (config.cond_embed_dim > 0) {
    if (cond_table.shape() != Shape{config.num_conditions + 1, config.cond_embed_dim}) {
      throw ShapeError("condition table shape mismatch");
    }
  } else if (!cond_table.empty()) {
    throw ShapeError("condition table present but cond_embed_dim is 0");
  }
}

std::vector<double> default_frequencies(std::size_t dim) {
  if (dim % 2 != 0) throw ConfigError("time embedding dim must be even, got " + std::to_string(dim));
  std::vector<double> f(dim / 2);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = 2.0 * std::numbers::pi * static_cast<double>(k + 1);
  return f;
}

Tensor time_embed(double t, std::span<const double> frequencies) {
  if (!std::isfinite(t)) throw DomainError("time_embed: t must be finite");
  if (frequencies.empty()) throw ConfigError("time_embed: empty frequency table");
  Tensor out({frequencies.size() * 2});
  for (std::size_t k = 0; k < frequencies.size(); ++k) {
    out[2 * k] = std::sin(frequencies[k] * t);
    out[2 * k + 1] = std::cos(frequencies[k] * t);
  }
  return out;
}

Tensor time_embed(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("time embedding dim must be even and positive");
  const std::vector<double> f = default_frequencies(dim);
  return time_embed(t, f);
}

namespace {

VectorFieldParams make_params(const NetConfig& config, Rng* rng) {
  config.validate();
  VectorFieldParams p;
  p.config = config;
  p.frequencies = config.time_embed_dim > 0 ? default_frequencies(config.time_embed_dim) : std::vector<double>{};
  std::size_t fan_in = config.input_width();
  for (std::size_t i = 0; i <= config.hidden.size(); ++i) {
    const bool last = i == config.hidden.size();
    const std::size_t fan_out = last ? config.data_dim : config.hidden[i];
    DenseLayer l{Tensor({fan_in, fan_out}), Tensor({fan_out}), last ? Activation::identity : config.activation};
    if (rng != nullptr) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (double& w : l.weight.data()) w = rng->uniform(-limit, limit);
    }
    p.layers.push_back(std::move(l));
    fan_in = fan_out;
  }
  if (config.cond_embed_dim > 0) {
    p.cond_table = Tensor({config.num_conditions + 1, config.cond_embed_dim});
    if (rng != nullptr) {
      for (double& w : p.cond_table.data()) w = rng->normal() * 0.1;
    }
  }
  return p;
}

}  // namespace

VectorFieldParams init_params(const NetConfig& config, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "init");
  return make_params(config, &rng);
}

VectorFieldParams zero_params(const NetConfig& config) { return make_params(config, nullptr); }

Matrix to_matrix(const Tensor& t) {
  if (t.rank() == 1) return Eigen::Map<const Matrix>(t.data().data(), 1, static_cast<Eigen::Index>(t.size()));
  if (t.rank() == 2) {
    return Eigen::Map<const Matrix>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                                    static_cast<Eigen::Index>(t.dim(1)));
  }
  throw ShapeError("to_matrix needs rank 1 or 2, got " + shape_to_string(t.shape()));
}

Tensor to_tensor(const Matrix& m) {
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::vector<double>(m.data(), m.data() + m.size()));
}

ParamVars bind(Tape& tape, const VectorFieldParams& params, bool trainable) {
  ParamVars v;
  auto leaf = [&](const Tensor& t) { return trainable ? tape.parameter(to_matrix(t)) : tape.constant(to_matrix(t)); };
  for (const DenseLayer& l : params.layers) {
    v.weights.push_back(leaf(l.weight));
    v.biases.push_back(leaf(l.bias));
    v.all.push_back(v.weights.back());
    v.all.push_back(v.biases.back());
  }
  if (!params.cond_table.empty()) {
    v.cond_table = leaf(params.cond_table);
    v.all.push_back(*v.cond_table);
  }
  return v;
}

Var forward(const VectorFieldParams& params, const ParamVars& vars, Var x, std::span<const double> t,
            std::span<const int> y) {
  const NetConfig& cfg = params.config;
  Tape& tape = *x.tape();
  const auto batch = static_cast<std::size_t>(x.rows());
  if (static_cast<std::size_t>(x.cols()) != cfg.data_dim) {
    throw ShapeError("forward: x has " + std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(cfg.data_dim));
  }
  if (t.size() != batch) throw ShapeError("forward: need one timestep per row");

  std::vector<Var> parts{x};
  if (cfg.time_embed_dim > 0) {
    Matrix emb(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(cfg.time_embed_dim));
    for (std::size_t i = 0; i < batch; ++i) {
      const Tensor e = time_embed(t[i], params.frequencies);
      for (std::size_t j = 0; j < e.size(); ++j) emb(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e[j];
    }
    parts.push_back(tape.constant(std::move(emb)));
  }
  if (cfg.cond_embed_dim > 0) {
    if (y.size() != batch) throw ShapeError("forward: need one condition per row");
    for (int id : y) {
      if (id < 0 || id > params.null_condition()) throw ContractError("forward: condition id out of range");
    }
    parts.push_back(gather_rows(*vars.cond_table, y));
  }
  Var h = parts.size() == 1 ? x : concat_cols(parts);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    h = add_row(matmul(h, vars.weights[i]), vars.biases[i]);
    switch (params.layers[i].activation) {
      case Activation::identity: break;
      case Activation::tanh: h = tanh(h); break;
      case Activation::gelu: h = gelu(h); break;
    }
  }
  return h;
}

Tensor forward_batch(const VectorFieldParams& params, const Tensor& x, std::span<const double> t,
                     std::span<const int> y) {
  Tape tape;
  const ParamVars vars = bind(tape, params, false);
  Var out = forward(params, vars, tape.constant(to_matrix(x)), t, y);
  Tensor result = to_tensor(out.value());
  return x.rank() == 1 ? result.reshaped({x.size()}) : result;
}

Tensor forward(const VectorFieldParams& params, const Tensor& x, double t, std::optional<int> y) {
  const std::size_t batch = x.rank() == 1 ? 1 : x.dim(0);
  const std::vector<double> ts(batch, t);
  const std::vector<int> ys(batch, y.value_or(params.null_condition()));
  return forward_batch(params, x, ts, ys);
}

ValueAndGrad value_and_grad(const VectorFieldParams& params, const LossFn& loss) {
  Tape tape;
  const ParamVars vars = bind(tape, params, true);
  Var l = loss(tape, vars);
  tape.backward(l);
  ValueAndGrad out;
  out.loss = l.value()(0, 0);
  const std::vector<const Tensor*> ps = params.tensors();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Matrix& g = tape.grad(vars.all[i]);
    out.grads.emplace_back(ps[i]->shape(), std::vector<double>(g.data(), g.data() + g.size()));
  }
  return out;
}

std::vector<Tensor> grad(const VectorFieldParams& params, const LossFn& loss) {
  return value_and_grad(params, loss).grads;
}

AdamState AdamState::for_params(std::span<const Tensor* const> params, AdamConfig hp) {
  if (!(hp.lr > 0) || !(hp.beta1 >= 0 && hp.beta1 < 1) || !(hp.beta2 >= 0 && hp.beta2 < 1) || !(hp.eps > 0)) {
    throw ConfigError("invalid Adam hyper-parameters");
  }
  AdamState s;
  s.hp = hp;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

AdamState AdamState::for_params(const VectorFieldParams& params, AdamConfig hp) {
  const std::vector<const Tensor*> ps = params.tensors();
  return for_params(std::span<const Tensor* const>(ps), hp);
}

void adam_update(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam: parameter, gradient and moment lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], grads[i], "adam gradient");
    require_same_shape(*params[i], state.m[i], "adam moment");
  }
  ++state.step;
  const AdamConfig& hp = state.hp;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp.beta1, step);
  const double c2 = 1.0 - std::pow(hp.beta2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<double> p = params[i]->data();
    std::span<const double> g = grads[i].data();
    std::span<double> m = state.m[i].data();
    std::span<double> v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k];
      v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

void adam_step(VectorFieldParams& params, std::span<const Tensor> grads, AdamState& state) {
  const std::vector<Tensor*> ps = params.tensors();
  adam_update(std::span<Tensor* const>(ps), grads, state);
}

}  // namespace flowforge::nnet
