// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: flowforge <command> [--config PATH] [--seed U64] [--out DIR] [--set section.key=value]...

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowforge/cli/commands.hpp"
#include "flowforge/cli/config.hpp"

namespace {

struct Shortcut {
  std::string flag;
  std::string key;
  std::string help;
};

// Per-command flags that are spelled-out aliases for --set section.key=value.
const std::map<std::string, std::vector<Shortcut>>& shortcuts() {
  static const std::map<std::string, std::vector<Shortcut>> table = {
      {"train-fm", {{"--steps", "train.steps", "Adam steps"}, {"--generator", "data.generator", "toy dataset"}}},
      {"sample",
       {{"--checkpoint", "sample.checkpoint", "model checkpoint"},
        {"--nfe", "sample.nfe", "Euler steps"},
        {"--cfg-max", "sample.cfg_max", "guidance scale at t=0"},
        {"--shift", "sample.shift", "time shift"},
        {"--count", "sample.count", "number of samples"},
        {"--condition", "sample.condition", "random, null or a condition id"}}},
      {"distill", {{"--teacher", "distill.teacher", "teacher checkpoint"}, {"--steps", "distill.steps", "Adam steps"}}},
      {"dpo", {{"--base", "dpo.base", "base checkpoint"}, {"--beta", "dpo.beta", "DPO temperature"}}},
      {"plan", {{"--world-size", "plan.world_size", "device count"}}},
      {"balance", {{"--alpha", "balance.alpha", "normalization factor or auto"}}},
      {"dynamics", {{"--input", "dynamics.input", "loss trajectory CSV"}}},
      {"kernels-selftest", {}},
  };
  return table;
}

const std::map<std::string, std::string>& descriptions() {
  static const std::map<std::string, std::string> table = {
      {"train-fm", "train a flow-matching velocity network on a toy dataset"},
      {"sample", "draw Euler samples from a checkpoint"},
      {"distill", "2-rectified-flow distillation of a teacher checkpoint"},
      {"dpo", "flow-matching DPO on synthesized preferences"},
      {"plan", "rank parallel layouts by estimated MFU"},
      {"balance", "coarse batch sizing and greedy image padding"},
      {"dynamics", "classify loss trajectories and colour selection tiers"},
      {"kernels-selftest", "run the kernel property checks"},
  };
  return table;
}

struct Invocation {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
  std::map<std::string, std::string> shortcut_values;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowforge: flow matching, distillation, DPO, video kernels and training planners"};
  app.require_subcommand(1);
  std::map<std::string, Invocation> invocations;
  for (const std::string& name : flowforge::cli::command_names()) {
    CLI::App* sub = app.add_subcommand(name, descriptions().at(name));
    Invocation& inv = invocations[name];
    sub->add_option("--config", inv.config_path, "INI configuration file");
    sub->add_option("--seed", inv.seed, "global seed");
    sub->add_option("--out", inv.out, "output directory");
    sub->add_option("--set", inv.overrides, "override section.key=value (repeatable)");
    for (const Shortcut& s : shortcuts().at(name)) {
      sub->add_option_function<std::string>(
          s.flag, [&inv, key = s.key](const std::string& v) { inv.shortcut_values[key] = v; }, s.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : flowforge::cli::kExitValidation;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const Invocation& inv = invocations.at(name);
  try {
    flowforge::cli::RunConfig cfg;
    if (!inv.config_path.empty()) cfg = flowforge::cli::RunConfig::from_file(inv.config_path);
    for (const auto& [key, value] : inv.shortcut_values) cfg.set(key, value);
    for (const std::string& o : inv.overrides) cfg.apply_override(o);
    std::optional<std::filesystem::path> out;
    if (inv.out) out = *inv.out;
    const flowforge::cli::CommandContext ctx = flowforge::cli::make_context(std::move(cfg), inv.seed, out);
    return flowforge::cli::run_command(name, ctx);
  } catch (const std::exception& e) {
    std::cerr << "flowforge " << name << ": error: " << e.what() << "\n";
    return flowforge::cli::exit_code_for(e);
  }
}
