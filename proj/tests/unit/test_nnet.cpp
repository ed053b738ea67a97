// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowforge/error.hpp"
#include "flowforge/nnet.hpp"
#include "gradcheck.hpp"

using namespace flowforge;
using namespace flowforge::nnet;

namespace {

nlohmann::json load_golden() {
  std::ifstream in(std::string(FLOWFORGE_TEST_DATA_DIR) + "/forward_seed42.json");
  return nlohmann::json::parse(in);
}

NetConfig golden_config(const nlohmann::json& j) {
  NetConfig cfg;
  const auto& c = j.at("config");
  cfg.data_dim = c.at("data_dim");
  cfg.hidden = c.at("hidden").get<std::vector<std::size_t>>();
  cfg.time_embed_dim = c.at("time_embed_dim");
  cfg.cond_embed_dim = c.at("cond_embed_dim");
  cfg.num_conditions = c.at("num_conditions");
  cfg.activation = activation_from_string(c.at("activation"));
  return cfg;
}

NetConfig linear_config(std::size_t dim) {
  NetConfig cfg;
  cfg.data_dim = dim;
  cfg.hidden = {};
  cfg.time_embed_dim = 0;
  cfg.cond_embed_dim = 0;
  cfg.activation = Activation::identity;
  return cfg;
}

}  // namespace

TEST(TimeEmbed, ZeroTime) {
  const Tensor e = time_embed(0.0, 4);
  EXPECT_EQ(e, Tensor::vector({0, 1, 0, 1}));
}

TEST(TimeEmbed, HalfTimeFirstSlotVanishes) {
  const Tensor e = time_embed(0.5, 2);
  EXPECT_NEAR(e[0], 0.0, 1e-12);
  EXPECT_NEAR(e[1], -1.0, 1e-12);
}

TEST(TimeEmbed, QuarterTimeHandValues) {
  const std::vector<double> freqs{2 * std::numbers::pi, 4 * std::numbers::pi};
  const Tensor e = time_embed(0.25, freqs);
  const double expected[] = {1, 0, 0, -1};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(e[i], expected[i], 1e-12);
}

TEST(TimeEmbed, OddDimIsConfigError) {
  EXPECT_THROW(time_embed(0.1, 3), ConfigError);
  NetConfig cfg;
  cfg.time_embed_dim = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TimeEmbed, NonFiniteTimeRejected) { EXPECT_THROW(time_embed(std::nan(""), 4), DomainError); }

TEST(TimeEmbed, DefaultFrequenciesStrictlyIncrease) {
  const auto f = default_frequencies(8);
  ASSERT_EQ(f.size(), 4u);
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_GT(f[i], f[i - 1]);
  EXPECT_DOUBLE_EQ(f[0], 2 * std::numbers::pi);
}

TEST(Params, LayerChainAndParameterCount) {
  NetConfig cfg;
  cfg.hidden = {8, 4};
  const VectorFieldParams p = init_params(cfg, 1);
  ASSERT_EQ(p.layers.size(), 3u);
  EXPECT_EQ(p.layers[0].weight.dim(0), cfg.input_width());
  EXPECT_EQ(p.layers[1].weight.dim(0), p.layers[0].weight.dim(1));
  EXPECT_EQ(p.layers[2].weight.dim(1), cfg.data_dim);
  std::size_t total = 0;
  for (const Tensor* t : p.tensors()) total += t->size();
  EXPECT_EQ(p.parameter_count(), total);
  EXPECT_EQ(p.tensor_names().size(), p.tensors().size());
  EXPECT_NO_THROW(p.validate());
}

TEST(Params, GlorotBoundsAndZeroBias) {
  NetConfig cfg;
  const VectorFieldParams p = init_params(cfg, 9);
  for (const DenseLayer& l : p.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.weight.dim(0) + l.weight.dim(1)));
    for (double w : l.weight.data()) EXPECT_LE(std::abs(w), bound);
    for (double b : l.bias.data()) EXPECT_EQ(b, 0.0);
  }
}

TEST(Params, SameSeedSameParams) {
  NetConfig cfg;
  EXPECT_EQ(init_params(cfg, 3), init_params(cfg, 3));
  EXPECT_NE(init_params(cfg, 3), init_params(cfg, 4));
}

TEST(Params, BrokenChainFailsValidation) {
  VectorFieldParams p = init_params(NetConfig{}, 1);
  p.layers[1].weight = Tensor({3, 3});
  EXPECT_ANY_THROW(p.validate());
  VectorFieldParams q = init_params(NetConfig{}, 1);
  std::swap(q.frequencies[0], q.frequencies[1]);
  EXPECT_THROW(q.validate(), ConfigError);
}

TEST(Forward, ZeroParamsGiveZero) {
  const VectorFieldParams p = zero_params(NetConfig{});
  const Tensor out = forward(p, Tensor::matrix(2, 2, {1, -2, 3.5, 0.25}), 0.7, 1);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityLinearLayer) {
  VectorFieldParams p = zero_params(linear_config(2));
  p.layers[0].weight = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor out = forward(p, Tensor::vector({1, 2}), 0.4);
  EXPECT_EQ(out, Tensor::vector({1, 2}));
}

TEST(Forward, ShapePreserving) {
  const VectorFieldParams p = init_params(NetConfig{}, 5);
  const Tensor x({7, 2}, 0.3);
  EXPECT_EQ(forward(p, x, 0.2, 0).shape(), x.shape());
  EXPECT_EQ(forward(p, Tensor::vector({1, 2}), 0.2).shape(), Shape{2});
}

TEST(Forward, ShapeMismatchIsShapeError) {
  const VectorFieldParams p = init_params(NetConfig{}, 5);
  EXPECT_THROW(forward(p, Tensor({4, 3}), 0.5), ShapeError);
}

TEST(Forward, ConditionOutOfRange) {
  const VectorFieldParams p = init_params(NetConfig{}, 5);
  EXPECT_THROW(forward(p, Tensor({1, 2}), 0.5, 3), ContractError);
}

TEST(Forward, FiniteForFiniteInputs) {
  for (Activation a : {Activation::tanh, Activation::gelu}) {
    NetConfig cfg;
    cfg.activation = a;
    const VectorFieldParams p = init_params(cfg, 11);
    const Tensor out = forward(p, Tensor::matrix(2, 2, {1e6, -1e6, -3, 40}), 1.0, 0);
    EXPECT_TRUE(out.all_finite());
  }
}

TEST(Forward, GoldenSeed42) {
  const nlohmann::json g = load_golden();
  const NetConfig cfg = golden_config(g);
  const VectorFieldParams p = init_params(cfg, g.at("seed").get<std::uint64_t>());

  // Parameters must match the frozen dump exactly.
  ASSERT_EQ(p.layers.size(), g.at("layers").size());
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& lj = g.at("layers")[i];
    EXPECT_EQ(p.layers[i].weight.values(), lj.at("weight").get<std::vector<double>>());
    EXPECT_EQ(p.layers[i].bias.values(), lj.at("bias").get<std::vector<double>>());
  }
  EXPECT_EQ(p.frequencies, g.at("frequencies").get<std::vector<double>>());
  EXPECT_EQ(p.cond_table.values(), g.at("cond_table").get<std::vector<double>>());

  for (const auto& c : g.at("cases")) {
    const auto x = c.at("x").get<std::vector<double>>();
    const auto expected = c.at("expected").get<std::vector<double>>();
    const Tensor out = forward(p, Tensor::vector(x), c.at("t").get<double>(), c.at("y").get<int>());
    ASSERT_EQ(out.size(), expected.size());
    for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_NEAR(out[k], expected[k], 1e-12);
  }
}

TEST(Grad, HalfSquaredNormGivesParams) {
  const VectorFieldParams p = init_params(NetConfig{.hidden = {6}}, 2);
  const auto g = grad(p, [](Tape&, const ParamVars& vars) {
    Var total = scale(sum(mul(vars.all[0], vars.all[0])), 0.5);
    for (std::size_t i = 1; i < vars.all.size(); ++i) {
      total = add(total, scale(sum(mul(vars.all[i], vars.all[i])), 0.5));
    }
    return total;
  });
  const auto ps = p.tensors();
  ASSERT_EQ(g.size(), ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_EQ(g[i], *ps[i]);
}

TEST(Grad, SingleWeightChainRule) {
  VectorFieldParams p = zero_params(linear_config(1));
  p.layers[0].weight = Tensor::matrix(1, 1, {2.0});
  const auto g = grad(p, [&](Tape& tape, const ParamVars& vars) {
    Var x = tape.constant(to_matrix(Tensor::matrix(1, 1, {1.0})));
    Var r = sub(matmul(x, vars.weights[0]), tape.constant(to_matrix(Tensor::matrix(1, 1, {1.0}))));
    return sum(mul(r, r));
  });
  EXPECT_EQ(g[0][0], 2.0);
  EXPECT_EQ(g[1][0], 0.0);
}

TEST(Grad, NonScalarLossIsContractError) {
  const VectorFieldParams p = init_params(NetConfig{}, 1);
  EXPECT_THROW(grad(p, [](Tape&, const ParamVars& vars) { return vars.all[0]; }), ContractError);
}

TEST(Grad, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto problem = testkit::random_grad_problem(seed);
    EXPECT_LT(testkit::max_relative_grad_error(problem), 1e-4) << "seed " << seed;
  }
}

TEST(Grad, SoftplusAndOpsFiniteDifference) {
  // Exercise the ops the network does not use on a tiny hand-built loss.
  VectorFieldParams p = zero_params(linear_config(2));
  p.layers[0].weight = Tensor::matrix(2, 2, {0.3, -1.2, 0.7, 0.4});
  p.layers[0].bias = Tensor::vector({0.1, -0.2});
  const std::vector<double> w{0.5, 2.0};
  const LossFn loss = [&](Tape& tape, const ParamVars& vars) {
    Var x = tape.constant(to_matrix(Tensor::matrix(2, 2, {1, 2, -1, 0.5})));
    Var h = add_row(matmul(x, vars.weights[0]), vars.biases[0]);
    return mean(softplus(scale_rows(row_sqnorm(tanh(h)), w)));
  };
  const auto g = grad(p, loss);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 2; ++i) {
    Tensor* t = p.tensors()[i];
    for (std::size_t k = 0; k < t->size(); ++k) {
      const double saved = (*t)[k];
      (*t)[k] = saved + h;
      const double up = value_and_grad(p, loss).loss;
      (*t)[k] = saved - h;
      const double down = value_and_grad(p, loss).loss;
      (*t)[k] = saved;
      EXPECT_NEAR(g[i][k], (up - down) / (2 * h), 1e-7);
    }
  }
}

TEST(Adam, ZeroGradsLeaveParams) {
  VectorFieldParams p = init_params(NetConfig{.hidden = {4}}, 1);
  const VectorFieldParams before = p;
  AdamState s = AdamState::for_params(p, {});
  std::vector<Tensor> zeros;
  for (const Tensor* t : p.tensors()) zeros.emplace_back(t->shape());
  adam_step(p, zeros, s);
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepIsLr) {
  VectorFieldParams p = zero_params(NetConfig{.hidden = {3}});
  AdamState s = AdamState::for_params(p, {.lr = 0.1, .eps = 1e-300});
  std::vector<Tensor> ones;
  for (const Tensor* t : p.tensors()) ones.emplace_back(t->shape(), 1.0);
  adam_step(p, ones, s);
  for (const Tensor* t : p.tensors()) {
    for (double v : t->data()) EXPECT_NEAR(v, -0.1, 1e-15);
  }
}

TEST(Adam, TwoStepHandTrajectory) {
  // Hand execution: step 1 gives m=0.1, v=0.001, m_hat=1, v_hat=1 so p=0.9.
  // Step 2 gives m=-0.01, v=0.001999, m_hat=-0.01/0.19, v_hat=1 so p=0.9+0.1/19.
  Tensor p = Tensor::vector({1.0});
  Tensor* ptr = &p;
  std::vector<Tensor*> ps{ptr};
  AdamState s = AdamState::for_params(std::span<const Tensor* const>(std::vector<const Tensor*>{ptr}),
                                      {.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-300});
  adam_update(ps, std::vector<Tensor>{Tensor::vector({1.0})}, s);
  EXPECT_NEAR(p[0], 0.9, 1e-15);
  adam_update(ps, std::vector<Tensor>{Tensor::vector({-1.0})}, s);
  EXPECT_NEAR(p[0], 0.905263157894737, 1e-13);
  EXPECT_EQ(s.step, 2u);
  EXPECT_NEAR(s.m[0][0], -0.01, 1e-15);
  EXPECT_NEAR(s.v[0][0], 0.001999, 1e-15);
}

TEST(Adam, ShapeMismatch) {
  VectorFieldParams p = init_params(NetConfig{.hidden = {3}}, 1);
  AdamState s = AdamState::for_params(p, {});
  std::vector<Tensor> bad;
  for (const Tensor* t : p.tensors()) bad.emplace_back(Shape{t->size() + 1});
  EXPECT_THROW(adam_step(p, bad, s), ShapeError);
  EXPECT_EQ(s.step, 0u);
}

TEST(Adam, InvalidHyperParameters) {
  const VectorFieldParams p = init_params(NetConfig{}, 1);
  EXPECT_THROW(AdamState::for_params(p, {.lr = 0}), ConfigError);
  EXPECT_THROW(AdamState::for_params(p, {.beta1 = 1.0}), ConfigError);
}

TEST(Adam, DeterministicTraining) {
  auto run = [] {
    const auto problem = testkit::random_grad_problem(77);
    VectorFieldParams p = problem.params;
    AdamState s = AdamState::for_params(p, {.lr = 1e-2});
    for (int i = 0; i < 25; ++i) {
      testkit::GradProblem cur = problem;
      cur.params = p;
      adam_step(p, grad(cur.params, cur.loss()), s);
    }
    return p;
  };
  EXPECT_EQ(run(), run());
}
