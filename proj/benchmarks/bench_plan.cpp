// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "flowforge/plan.hpp"
#include "flowforge/rng.hpp"

using namespace flowforge;

namespace {

void BM_GreedyPad(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  std::vector<double> loads(m);
  for (double& l : loads) l = 1000.0 + 800.0 * rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(plan::greedy_pad(loads, 4 * m, 44.99));
}
BENCHMARK(BM_GreedyPad)->Arg(8)->Arg(1024);

void BM_BruteForceMinMax(benchmark::State& state) {
  const std::vector<double> loads{14, 3, 9, 0, 11, 6};
  for (auto _ : state) benchmark::DoNotOptimize(plan::brute_force_min_max(loads, 8, 2.0));
}
BENCHMARK(BM_BruteForceMinMax);

void BM_FlopsPerSample(benchmark::State& state) {
  const plan::ArchSpec arch = plan::ArchSpec::step_video_30b();
  std::size_t tokens = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(plan::flops_per_sample(arch, tokens, plan::Accounting::fwd_bwd_recompute));
    tokens = tokens % 20000 + 1;
  }
}
BENCHMARK(BM_FlopsPerSample);

}  // namespace

BENCHMARK_MAIN();
