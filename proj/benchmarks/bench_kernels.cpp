// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "flowforge/kernels.hpp"
#include "flowforge/rng.hpp"

using namespace flowforge;
using namespace flowforge::kernels;

namespace {

VideoTensor random_video(std::size_t c, std::size_t t, std::size_t hw, Rng& rng) {
  VideoTensor v(1, c, t, hw, hw);
  for (double& x : v.tensor().data()) x = rng.normal();
  return v;
}

void BM_CausalConv3d(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const VideoTensor x = random_video(8, 8, hw, rng);
  ConvKernel3D k;
  k.weight = Tensor({8, 8, 3, 3, 3});
  for (double& v : k.weight.data()) v = rng.normal();
  k.bias = Tensor({8});
  for (auto _ : state) benchmark::DoNotOptimize(causal_conv3d(x, k));
}
BENCHMARK(BM_CausalConv3d)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_PixelUnshuffle(benchmark::State& state) {
  Rng rng(2);
  const VideoTensor x = random_video(16, 8, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(pixel_unshuffle3d(x, 2, 2));
}
BENCHMARK(BM_PixelUnshuffle);

void BM_Rope3d(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const RopeSpec spec{128, 64, 32, 32};
  Tensor x({tokens, 128});
  for (double& v : x.data()) v = rng.normal();
  std::vector<Position3> pos(tokens);
  for (std::size_t i = 0; i < tokens; ++i) pos[i] = {i / 256, (i / 16) % 16, i % 16};
  for (auto _ : state) benchmark::DoNotOptimize(rope3d(x, pos, spec));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * tokens));
}
BENCHMARK(BM_Rope3d)->Arg(1024)->Arg(6656);

}  // namespace

BENCHMARK_MAIN();
