// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flowforge/align.hpp"
#include "flowforge/cli/config.hpp"
#include "flowforge/cli/toy_data.hpp"
#include "flowforge/flow.hpp"
#include "flowforge/nnet.hpp"
#include "flowforge/plan.hpp"

namespace flowforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// 2 for IoError (including checkpoint corruption), 1 for everything else.
int exit_code_for(const std::exception& e) noexcept;

/// Worker count: hardware concurrency, capped by FLOWFORGE_THREADS when set.
std::size_t thread_budget();

struct CommandContext {
  RunConfig config;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::size_t threads = 1;
  std::ostream* log = nullptr;
};

/// Seed and output directory come from [run] unless overridden.
CommandContext make_context(RunConfig config, std::optional<std::uint64_t> seed = std::nullopt,
                            std::optional<std::filesystem::path> out = std::nullopt);

const std::vector<std::string>& command_names();
/// Runs one command; exceptions propagate to the caller.
int run_command(const std::string& name, const CommandContext& ctx);

int cmd_train_fm(const CommandContext& ctx);
int cmd_sample(const CommandContext& ctx);
int cmd_distill(const CommandContext& ctx);
int cmd_dpo(const CommandContext& ctx);
int cmd_plan(const CommandContext& ctx);
int cmd_balance(const CommandContext& ctx);
int cmd_dynamics(const CommandContext& ctx);
int cmd_kernels_selftest(const CommandContext& ctx);

// ---------------------------------------------------------------------------
// Experiment building blocks shared by the commands

ToyDataset dataset_from(const RunConfig& cfg);
nnet::NetConfig net_config_from(const RunConfig& cfg, std::size_t num_conditions);
flow::SamplerSpec sampler_from(const RunConfig& cfg, const std::string& section);
plan::ArchSpec arch_from(const RunConfig& cfg);
plan::CostModel cost_from(const RunConfig& cfg);
plan::PlannerScenario scenario_from(const RunConfig& cfg);
plan::BalanceInputs balance_inputs_from(const RunConfig& cfg, std::uint64_t seed);

/// (n, d) standard normal draws.
Tensor draw_noise(std::size_t n, std::size_t d, Rng& rng);

struct FmTrainOptions {
  std::size_t steps = 4000;
  std::size_t batch = 256;
  nnet::AdamConfig adam;
  double cond_dropout = 0.1;
  flow::SamplerSpec sampler;
};

/// Trains in place and returns the loss of every step. Data, noise and
/// timesteps come from separate streams of `seed`.
std::vector<double> train_flow_matching(nnet::VectorFieldParams& params, const ToyDataset& data,
                                        const FmTrainOptions& opts, std::uint64_t seed);

struct DistillOptions {
  std::size_t pairs = 4096;
  int teacher_nfe = 50;
  std::size_t steps = 3000;
  std::size_t batch = 256;
  nnet::AdamConfig adam;
  flow::SamplerSpec sampler{flow::TimestepDist::u_shaped_centered, 5.0};
  align::DistillWeighting weighting = align::DistillWeighting::none;
};

struct DistillOutcome {
  nnet::VectorFieldParams student;
  std::vector<align::ReflowPair> pairs;
  std::vector<double> losses;
};

/// 2-rectified flow: the student starts from the teacher and is trained on
/// the teacher's unguided (noise, endpoint) pairs.
DistillOutcome run_distillation(const nnet::VectorFieldParams& teacher, const DistillOptions& opts,
                                std::uint64_t seed);

struct DpoOptions {
  align::DpoConfig dpo;
  std::size_t steps = 300;
  std::size_t batch = 64;
  std::size_t pairs = 1024;
  std::size_t candidates = 2000;
  int nfe = 50;
  /// Condition id for sampling and pairs; empty means the null condition.
  std::optional<int> condition;
  Tensor target = Tensor::vector({2.0, 0.0});
  double radius = 1.5;
};

struct DpoOutcome {
  nnet::VectorFieldParams tuned;
  std::vector<align::PreferencePair> pairs;
  std::vector<double> losses;
  std::vector<double> mean_z;
  double fraction_before = 0.0;
  double fraction_after = 0.0;
};

/// Samples the base model, synthesizes preferences around `target`, runs
/// DPO against the frozen base and re-samples from the same noise.
DpoOutcome run_dpo(const nnet::VectorFieldParams& base, const DpoOptions& opts, std::uint64_t seed);

}  // namespace flowforge::cli
