// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <utility>
#include <vector>

#include "flowforge/flow.hpp"
#include "flowforge/metrics.hpp"
#include "flowforge/nnet.hpp"
#include "flowforge/rng.hpp"

using namespace flowforge;

namespace {

Tensor normal(std::size_t n, std::size_t d, Rng& rng) {
  Tensor x({n, d});
  for (double& v : x.data()) v = rng.normal();
  return x;
}

void BM_Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const nnet::VectorFieldParams p = nnet::init_params(nnet::NetConfig{}, 1);
  Rng rng(2);
  const Tensor x = normal(n, 2, rng);
  const std::vector<double> t(n, 0.5);
  const std::vector<int> y(n, 0);
  for (auto _ : state) benchmark::DoNotOptimize(nnet::forward_batch(p, x, t, y));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_Forward)->Arg(256)->Arg(4096);

void BM_FmTrainStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nnet::VectorFieldParams p = nnet::init_params(nnet::NetConfig{}, 1);
  const auto tensors = std::as_const(p).tensors();
  nnet::AdamState adam = nnet::AdamState::for_params(tensors, nnet::AdamConfig{});
  Rng rng(3);
  const flow::SamplerSpec sampler;
  for (auto _ : state) {
    flow::FlowBatch b{normal(n, 2, rng), normal(n, 2, rng), std::vector<int>(n, 0)};
    benchmark::DoNotOptimize(flow::fm_train_step(p, adam, std::move(b), sampler, 0.1, rng));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_FmTrainStep)->Arg(256);

void BM_EulerSample(benchmark::State& state) {
  const auto nfe = static_cast<std::size_t>(state.range(0));
  const nnet::VectorFieldParams p = nnet::init_params(nnet::NetConfig{}, 1);
  Rng rng(4);
  const Tensor x0 = normal(1000, 2, rng);
  const std::vector<int> y(1000, 0);
  const flow::StepSchedule schedule = flow::StepSchedule::uniform(nfe);
  for (auto _ : state) benchmark::DoNotOptimize(flow::euler_sample(p, x0, schedule, std::nullopt, y));
}
BENCHMARK(BM_EulerSample)->Arg(5)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_EnergyDistance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const Tensor a = normal(n, 2, rng), b = normal(n, 2, rng);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::energy_distance(a, b));
}
BENCHMARK(BM_EnergyDistance)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
