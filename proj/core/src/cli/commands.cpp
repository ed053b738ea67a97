// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <iostream>
#include <map>
#include <thread>

#include <nlohmann/json.hpp>

#include "flowforge/cli/checkpoint.hpp"
#include "flowforge/cli/report.hpp"
#include "flowforge/dynamics.hpp"
#include "flowforge/error.hpp"
#include "flowforge/kernels.hpp"
#include "flowforge/metrics.hpp"

namespace flowforge::cli {

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const IoError*>(&e) != nullptr) return kExitIo;
  return kExitValidation;
}

std::size_t thread_budget() {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FLOWFORGE_THREADS"); env != nullptr && *env != '\0') {
    const std::string text = env;
    std::uint64_t cap = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), cap);
    if (ec != std::errc() || p != text.data() + text.size() || cap == 0) {
      throw ConfigError("FLOWFORGE_THREADS must be a positive integer, got '" + text + "'");
    }
    n = std::min<std::size_t>(n, cap);
  }
  return n;
}

CommandContext make_context(RunConfig config, std::optional<std::uint64_t> seed,
                            std::optional<std::filesystem::path> out) {
  if (seed) config.set("run.seed", std::to_string(*seed));
  if (out) config.set("run.out", out->string());
  CommandContext ctx;
  ctx.seed = config.get_u64("run.seed");
  ctx.out = config.get_string("run.out");
  if (ctx.out.empty()) throw ConfigError("config field run.out: output directory must not be empty");
  ctx.threads = thread_budget();
  ctx.config = std::move(config);
  return ctx;
}

namespace {

std::ostream& log_of(const CommandContext& ctx) { return ctx.log != nullptr ? *ctx.log : std::cout; }

void prepare(const CommandContext& ctx, const std::vector<std::string>& sections) {
  std::error_code ec;
  std::filesystem::create_directories(ctx.out, ec);
  if (ec) throw IoError("cannot create output directory " + ctx.out.string() + ": " + ec.message());
  const std::string text = ctx.config.effective(sections);
  write_text(ctx.out / "config.ini", text);
  log_of(ctx) << "# effective configuration\n" << text;
}

std::string require_path(const RunConfig& cfg, const std::string& key) {
  const std::string p = cfg.get_string(key);
  if (p.empty()) throw ConfigError("config field " + key + " is required");
  return p;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

CsvTable samples_table(const Tensor& x, std::span<const int> y) {
  CsvTable t;
  t.header = {"x", "y", "condition"};
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    t.rows.push_back({format_number(x[2 * i]), format_number(x[2 * i + 1]), std::to_string(y[i])});
  }
  return t;
}

CsvTable loss_table(std::span<const double> losses) {
  CsvTable t;
  t.header = {"step", "loss"};
  for (std::size_t i = 0; i < losses.size(); ++i) t.rows.push_back({std::to_string(i), format_number(losses[i])});
  return t;
}

void write_loss(const std::filesystem::path& dir, std::span<const double> losses, const std::string& title) {
  write_csv(dir / "loss.csv", loss_table(losses));
  std::vector<double> steps(losses.size());
  for (std::size_t i = 0; i < steps.size(); ++i) steps[i] = static_cast<double>(i);
  if (!losses.empty()) write_text(dir / "loss.svg", line_svg(title, steps, losses));
}

void write_samples(const std::filesystem::path& dir, const Tensor& x, std::span<const int> y, const std::string& title) {
  write_csv(dir / "samples.csv", samples_table(x, y));
  const auto series = series_by_label(x, y);
  write_text(dir / "samples.svg", scatter_svg(title, series));
}

int parse_condition(const std::string& key, const std::string& text, const nnet::VectorFieldParams& params) {
  if (text == "null") return params.null_condition();
  std::uint64_t id = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw ConfigError("config field " + key + ": expected random, null or a condition id, got '" + text + "'");
  }
  if (id >= params.config.num_conditions) {
    throw ConfigError("config field " + key + ": condition " + text + " out of range (model has " +
                      std::to_string(params.config.num_conditions) + ")");
  }
  return static_cast<int>(id);
}

nnet::VectorFieldParams load_params(const std::string& path) { return params_from_checkpoint(load_checkpoint(path)); }

std::vector<std::pair<std::string, double>> parse_pairs(const RunConfig& cfg, const std::string& key) {
  std::vector<std::pair<std::string, double>> out;
  for (const std::string& item : cfg.get_list(key)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("config field " + key + ": entry '" + item + "' lacks ':'");
    out.emplace_back(plan::ResolutionSpec::parse(item.substr(0, colon)).label(),
                     parse_number(item.substr(colon + 1), "config field " + key));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Builders

ToyDataset dataset_from(const RunConfig& cfg) {
  ToyDataset d;
  d.generator = generator_from_string(cfg.get_string("data.generator"));
  d.separation = cfg.get_double("data.separation");
  d.spread = cfg.get_double("data.spread");
  d.radius = cfg.get_double("data.radius");
  d.modes = cfg.get_size("data.modes");
  d.noise = cfg.get_double("data.noise");
  d.validate();
  return d;
}

nnet::NetConfig net_config_from(const RunConfig& cfg, std::size_t num_conditions) {
  nnet::NetConfig c;
  c.hidden = cfg.get_sizes("net.hidden");
  c.activation = nnet::activation_from_string(cfg.get_string("net.activation"));
  c.time_embed_dim = cfg.get_size("net.time_embed_dim");
  c.cond_embed_dim = cfg.get_size("net.cond_embed_dim");
  c.num_conditions = num_conditions;
  c.validate();
  return c;
}

flow::SamplerSpec sampler_from(const RunConfig& cfg, const std::string& section) {
  flow::SamplerSpec s;
  s.kind = flow::timestep_dist_from_string(cfg.get_string(section + ".timesteps"));
  s.a = cfg.get_double(section + ".a");
  s.validate();
  return s;
}

plan::ArchSpec arch_from(const RunConfig& cfg) {
  plan::ArchSpec a;
  a.layers = cfg.get_size("arch.layers");
  a.hidden = cfg.get_size("arch.hidden");
  a.heads = cfg.get_size("arch.heads");
  a.head_dim = cfg.get_size("arch.head_dim");
  a.ffn_dim = cfg.get_size("arch.ffn_dim");
  a.cross_attn_dim = cfg.get_size("arch.cross_attn_dim");
  a.cross_attn_kv_dim = cfg.get_size("arch.cross_attn_kv_dim");
  a.total_params = cfg.get_double("arch.total_params");
  a.validate();
  return a;
}

plan::CostModel cost_from(const RunConfig& cfg) {
  plan::CostModel m;
  m.mode = plan::accounting_from_string(cfg.get_string("cost.mode"));
  m.bytes_per_param = cfg.get_double("cost.bytes_per_param");
  m.bytes_per_grad = cfg.get_double("cost.bytes_per_grad");
  m.bytes_per_optimizer = cfg.get_double("cost.bytes_per_optimizer");
  m.bytes_per_activation = cfg.get_double("cost.bytes_per_activation");
  m.activation_factor = cfg.get_double("cost.activation_factor");
  m.residual_factor = cfg.get_double("cost.residual_factor");
  m.peak_flops = cfg.get_double("cost.peak_flops");
  m.tp_bandwidth = cfg.get_double("cost.tp_bandwidth");
  m.cp_bandwidth = cfg.get_double("cost.cp_bandwidth");
  m.tp_collectives = cfg.get_double("cost.tp_collectives");
  m.cp_collectives = cfg.get_double("cost.cp_collectives");
  m.comm_overlap = cfg.get_double("cost.comm_overlap");
  m.pipeline_microbatches = cfg.get_double("cost.microbatches");
  m.pipeline_bubble = cfg.get_double("cost.pipeline_bubble");
  m.validate();
  return m;
}

plan::PlannerScenario scenario_from(const RunConfig& cfg) {
  plan::PlannerScenario s;
  s.arch = arch_from(cfg);
  s.cost = cost_from(cfg);
  s.world_size = cfg.get_size("plan.world_size");
  s.device_memory_gb = cfg.get_double("plan.device_memory_gb");
  if (s.world_size == 0) throw ConfigError("config field plan.world_size must be positive");
  if (!(s.device_memory_gb > 0)) throw ConfigError("config field plan.device_memory_gb must be positive");
  for (const auto& [label, weight] : parse_pairs(cfg, "plan.mix")) {
    if (!(weight >= 0)) throw ConfigError("config field plan.mix: weights must be non-negative");
    s.mix.push_back({plan::ResolutionSpec::parse(label), weight});
  }
  if (s.mix.empty()) throw ConfigError("config field plan.mix is empty");
  s.tp_options = cfg.get_sizes("plan.tp_options");
  s.cp_options = cfg.get_sizes("plan.cp_options");
  s.pp_options = cfg.get_sizes("plan.pp_options");
  s.vpp_options = cfg.get_sizes("plan.vpp_options");
  return s;
}

plan::BalanceInputs balance_inputs_from(const RunConfig& cfg, std::uint64_t seed) {
  plan::BalanceInputs in;
  const std::string image_label = plan::ResolutionSpec::parse(cfg.get_string("balance.image_resolution")).label();
  std::optional<double> listed_image;
  const auto listed = parse_pairs(cfg, "balance.flops");
  if (!listed.empty()) {
    for (const auto& [label, f] : listed) {
      if (label == image_label) {
        listed_image = f;
      } else {
        in.flops[label] = f;
      }
    }
  } else {
    const plan::ArchSpec arch = arch_from(cfg);
    const plan::CostModel cost = cost_from(cfg);
    for (const std::string& r : cfg.get_list("balance.resolutions")) {
      const plan::ResolutionSpec res = plan::ResolutionSpec::parse(r);
      in.flops[res.label()] = plan::flops_per_sample(arch, plan::token_count(res), cost);
    }
  }
  if (in.flops.empty()) throw ConfigError("config field balance.flops / balance.resolutions lists no video resolution");

  const std::string target = cfg.get_string("balance.f_target");
  if (target == "max") {
    for (const auto& [label, f] : in.flops) in.f_target = std::max(in.f_target, f);
  } else if (target.find('x') != std::string::npos) {
    const auto it = in.flops.find(plan::ResolutionSpec::parse(target).label());
    if (it == in.flops.end()) throw ConfigError("config field balance.f_target names an unlisted resolution");
    in.f_target = it->second;
  } else {
    in.f_target = cfg.get_double("balance.f_target");
  }

  if (cfg.get_string("balance.alpha") == "auto") {
    in.target_total = cfg.get_size("balance.target_total");
    if (in.target_total == 0) throw ConfigError("config field balance.target_total must be set when alpha = auto");
  } else {
    in.alpha = cfg.get_double("balance.alpha");
  }

  in.sequence = cfg.get_list("balance.sequence");
  for (std::string& s : in.sequence) s = plan::ResolutionSpec::parse(s).label();
  if (in.sequence.empty()) {
    const std::size_t depth = cfg.get_size("balance.cache_depth");
    if (depth == 0) throw ConfigError("config field balance.cache_depth must be positive");
    Rng rng = Rng::stream(seed, "balance");
    std::vector<std::string> labels;
    for (const auto& [label, f] : in.flops) labels.push_back(label);
    for (std::size_t i = 0; i < depth; ++i) in.sequence.push_back(labels[rng.uniform_index(labels.size())]);
  }
  in.image_ratio = cfg.get_double("balance.image_ratio");
  if (cfg.get_string("balance.image_flops") == "auto") {
    if (listed_image) {
      in.image_flops = *listed_image;
    } else {
      in.image_flops = plan::flops_per_sample(arch_from(cfg), plan::token_count(plan::ResolutionSpec::parse(image_label)),
                                              cost_from(cfg));
    }
  } else {
    in.image_flops = cfg.get_double("balance.image_flops");
  }
  return in;
}

Tensor draw_noise(std::size_t n, std::size_t d, Rng& rng) {
  Tensor x({n, d});
  for (double& v : x.data()) v = rng.normal();
  return x;
}

// ---------------------------------------------------------------------------
// Experiments

std::vector<double> train_flow_matching(nnet::VectorFieldParams& params, const ToyDataset& data,
                                        const FmTrainOptions& opts, std::uint64_t seed) {
  if (opts.batch == 0) throw ConfigError("train batch must be positive");
  if (!(opts.cond_dropout >= 0 && opts.cond_dropout <= 1)) throw ConfigError("train cond_dropout must lie in [0, 1]");
  if (params.config.num_conditions != data.num_conditions()) {
    throw ConfigError("model has " + std::to_string(params.config.num_conditions) + " conditions, dataset has " +
                      std::to_string(data.num_conditions()));
  }
  Rng data_rng = Rng::stream(seed, "data");
  Rng noise_rng = Rng::stream(seed, "noise");
  Rng time_rng = Rng::stream(seed, "timesteps");
  nnet::AdamState adam = nnet::AdamState::for_params(params, opts.adam);
  std::vector<double> losses;
  losses.reserve(opts.steps);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    LabeledSamples batch = data.sample(opts.batch, data_rng);
    flow::FlowBatch fb{draw_noise(opts.batch, 2, noise_rng), std::move(batch.x), std::move(batch.y)};
    losses.push_back(flow::fm_train_step(params, adam, std::move(fb), opts.sampler, opts.cond_dropout, time_rng).loss);
  }
  return losses;
}

DistillOutcome run_distillation(const nnet::VectorFieldParams& teacher, const DistillOptions& opts,
                                std::uint64_t seed) {
  if (opts.pairs == 0 || opts.batch == 0) throw ConfigError("distill pairs and batch must be positive");
  DistillOutcome out;
  Rng pair_rng = Rng::stream(seed, "reflow");
  out.pairs = align::generate_reflow_pairs(teacher, opts.pairs, opts.teacher_nfe, std::nullopt, pair_rng);
  out.student = teacher;
  nnet::AdamState adam = nnet::AdamState::for_params(out.student, opts.adam);
  Rng batch_rng = Rng::stream(seed, "batches");
  Rng time_rng = Rng::stream(seed, "timesteps");
  std::vector<align::ReflowPair> batch(opts.batch);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    for (auto& p : batch) p = out.pairs[batch_rng.uniform_index(out.pairs.size())];
    const flow::FlowBatch fb = align::to_batch(batch);
    out.losses.push_back(align::distill_train_step(out.student, adam, fb, opts.sampler, opts.weighting, time_rng).loss);
  }
  return out;
}

DpoOutcome run_dpo(const nnet::VectorFieldParams& base, const DpoOptions& opts, std::uint64_t seed) {
  opts.dpo.validate();
  if (opts.batch == 0 || opts.pairs == 0 || opts.candidates < 2) {
    throw ConfigError("dpo batch and pairs must be positive and candidates at least 2");
  }
  if (opts.nfe < 1) throw ConfigError("dpo nfe must be >= 1");
  const int y = opts.condition.value_or(base.null_condition());
  const std::size_t d = base.config.data_dim;
  if (opts.target.size() != d) throw ConfigError("dpo target must have " + std::to_string(d) + " coordinates");
  const Tensor target = opts.target.reshaped({d});
  const std::vector<int> ys(opts.candidates, y);
  const flow::StepSchedule schedule = flow::StepSchedule::uniform(static_cast<std::size_t>(opts.nfe));

  Rng noise_rng = Rng::stream(seed, "candidates");
  const Tensor x0 = draw_noise(opts.candidates, d, noise_rng);
  const Tensor before = flow::euler_sample(base, x0, schedule, std::nullopt, ys);

  DpoOutcome out;
  out.fraction_before = align::fraction_near(before, target, opts.radius);
  Rng pair_rng = Rng::stream(seed, "pairs");
  out.pairs = align::synthesize_preferences(before, y, target, opts.radius, opts.pairs, pair_rng);
  if (out.pairs.empty()) {
    throw ConfigError("dpo: base samples are all preferred or all non-preferred; adjust dpo.target or dpo.radius");
  }
  out.tuned = base;
  nnet::AdamState adam = nnet::AdamState::for_params(out.tuned, opts.dpo.adam);
  Rng batch_rng = Rng::stream(seed, "batches");
  std::vector<align::PreferencePair> batch(opts.batch);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    for (auto& p : batch) p = out.pairs[batch_rng.uniform_index(out.pairs.size())];
    const align::DpoDiagnostics diag = align::dpo_train_step(out.tuned, base, batch, opts.dpo, adam);
    out.losses.push_back(diag.loss);
    out.mean_z.push_back(pairwise_sum(diag.z) / static_cast<double>(diag.z.size()));
  }
  const Tensor after = flow::euler_sample(out.tuned, x0, schedule, std::nullopt, ys);
  out.fraction_after = align::fraction_near(after, target, opts.radius);
  return out;
}

// ---------------------------------------------------------------------------
// Commands

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"train-fm", "sample",  "distill",  "dpo",
                                                 "plan",     "balance", "dynamics", "kernels-selftest"};
  return names;
}

int run_command(const std::string& name, const CommandContext& ctx) {
  if (name == "train-fm") return cmd_train_fm(ctx);
  if (name == "sample") return cmd_sample(ctx);
  if (name == "distill") return cmd_distill(ctx);
  if (name == "dpo") return cmd_dpo(ctx);
  if (name == "plan") return cmd_plan(ctx);
  if (name == "balance") return cmd_balance(ctx);
  if (name == "dynamics") return cmd_dynamics(ctx);
  if (name == "kernels-selftest") return cmd_kernels_selftest(ctx);
  throw ConfigError("unknown command '" + name + "'");
}

int cmd_train_fm(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const ToyDataset data = dataset_from(cfg);
  const nnet::NetConfig net = net_config_from(cfg, data.num_conditions());
  FmTrainOptions opts;
  opts.steps = cfg.get_size("train.steps");
  opts.batch = cfg.get_size("train.batch");
  opts.adam.lr = cfg.get_double("train.lr");
  opts.cond_dropout = cfg.get_double("train.cond_dropout");
  opts.sampler = sampler_from(cfg, "train");
  const std::size_t count = cfg.get_size("train.sample_count");
  const std::size_t nfe = cfg.get_size("train.sample_nfe");
  if (count < 2 || nfe == 0) throw ConfigError("config fields train.sample_count >= 2 and train.sample_nfe >= 1 required");
  prepare(ctx, {"run", "data", "net", "train"});

  nnet::VectorFieldParams params = nnet::init_params(net, ctx.seed);
  const std::vector<double> losses = train_flow_matching(params, data, opts, ctx.seed);
  const nnet::VectorFieldParams saved = round_to_f32(params);
  save_checkpoint(ctx.out / "model.flwf", params_to_checkpoint(params, ctx.seed, opts.steps));
  write_loss(ctx.out, losses, "flow-matching loss");

  Rng label_rng = Rng::stream(ctx.seed, "sample-labels");
  Rng noise_rng = Rng::stream(ctx.seed, "sample-noise");
  Rng truth_rng = Rng::stream(ctx.seed, "truth");
  std::vector<int> ys(count);
  for (int& y : ys) y = static_cast<int>(label_rng.uniform_index(data.num_conditions()));
  const Tensor x = flow::euler_sample(saved, draw_noise(count, 2, noise_rng), flow::StepSchedule::uniform(nfe),
                                      std::nullopt, ys);
  write_samples(ctx.out, x, ys, "samples after training");
  const double ed = metrics::energy_distance(x, data.sample(count, truth_rng).x);
  nlohmann::json summary = {{"steps", opts.steps},
                            {"final_loss", losses.empty() ? 0.0 : losses.back()},
                            {"sample_nfe", nfe},
                            {"energy_distance", ed}};
  write_json(ctx.out / "summary.json", summary);
  log_of(ctx) << "trained " << opts.steps << " steps, final loss "
              << format_number(losses.empty() ? 0.0 : losses.back()) << ", energy distance " << format_number(ed)
              << "\n";
  return kExitOk;
}

int cmd_sample(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const std::string path = require_path(cfg, "sample.checkpoint");
  const std::size_t nfe = cfg.get_size("sample.nfe");
  const std::size_t count = cfg.get_size("sample.count");
  const double cfg_max = cfg.get_double("sample.cfg_max");
  const double shift = cfg.get_double("sample.shift");
  if (nfe == 0 || count == 0) throw ConfigError("config fields sample.nfe and sample.count must be positive");
  prepare(ctx, {"run", "sample"});
  const nnet::VectorFieldParams params = load_params(path);
  if (params.config.data_dim != 2) throw ConfigError("sample: only 2-D models can be written as scatter output");
  const std::string cond = cfg.get_string("sample.condition");
  std::vector<int> ys(count);
  if (cond == "random") {
    if (params.config.num_conditions == 0) {
      std::fill(ys.begin(), ys.end(), params.null_condition());
    } else {
      Rng label_rng = Rng::stream(ctx.seed, "sample-labels");
      for (int& y : ys) y = static_cast<int>(label_rng.uniform_index(params.config.num_conditions));
    }
  } else {
    std::fill(ys.begin(), ys.end(), parse_condition("sample.condition", cond, params));
  }
  std::optional<flow::GuidanceSpec> guidance;
  if (cfg_max != 1.0) guidance = flow::GuidanceSpec{cfg_max, shift, params.null_condition()};
  const flow::StepSchedule schedule = flow::StepSchedule::shifted(nfe, shift);
  Rng noise_rng = Rng::stream(ctx.seed, "sample-noise");
  const Tensor x = flow::euler_sample(params, draw_noise(count, params.config.data_dim, noise_rng), schedule, guidance, ys);
  write_samples(ctx.out, x, ys, "samples, NFE " + std::to_string(nfe));
  log_of(ctx) << "wrote " << count << " samples\n";
  return kExitOk;
}

int cmd_distill(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const std::string path = require_path(cfg, "distill.teacher");
  DistillOptions opts;
  opts.pairs = cfg.get_size("distill.pairs");
  const std::uint64_t teacher_nfe = cfg.get_u64("distill.teacher_nfe");
  if (teacher_nfe == 0 || teacher_nfe > 100000) throw ConfigError("config field distill.teacher_nfe must lie in [1, 100000]");
  opts.teacher_nfe = static_cast<int>(teacher_nfe);
  opts.steps = cfg.get_size("distill.steps");
  opts.batch = cfg.get_size("distill.batch");
  opts.adam.lr = cfg.get_double("distill.lr");
  opts.sampler = sampler_from(cfg, "distill");
  const std::string weighting = cfg.get_string("distill.weighting");
  if (weighting == "none") {
    opts.weighting = align::DistillWeighting::none;
  } else if (weighting == "inverse_t_squared") {
    opts.weighting = align::DistillWeighting::inverse_t_squared;
  } else {
    throw ConfigError("config field distill.weighting: expected none or inverse_t_squared, got '" + weighting + "'");
  }
  const std::size_t student_nfe = cfg.get_size("distill.student_nfe");
  const std::size_t count = cfg.get_size("distill.sample_count");
  if (student_nfe == 0 || count == 0) throw ConfigError("config fields distill.student_nfe and sample_count must be positive");
  prepare(ctx, {"run", "distill"});

  const nnet::VectorFieldParams teacher = load_params(path);
  const DistillOutcome res = run_distillation(teacher, opts, ctx.seed);
  save_checkpoint(ctx.out / "student.flwf", params_to_checkpoint(res.student, ctx.seed, opts.steps));
  save_checkpoint(ctx.out / "pairs.flwf", reflow_pairs_to_checkpoint(res.pairs, ctx.seed));
  write_loss(ctx.out, res.losses, "distillation loss");

  std::vector<int> ys(count, teacher.null_condition());
  if (teacher.config.num_conditions > 0) {
    Rng label_rng = Rng::stream(ctx.seed, "sample-labels");
    for (int& y : ys) y = static_cast<int>(label_rng.uniform_index(teacher.config.num_conditions));
  }
  Rng noise_rng = Rng::stream(ctx.seed, "sample-noise");
  const Tensor x = flow::euler_sample(round_to_f32(res.student), draw_noise(count, teacher.config.data_dim, noise_rng),
                                      flow::StepSchedule::uniform(student_nfe), std::nullopt, ys);
  write_samples(ctx.out, x, ys, "student samples, NFE " + std::to_string(student_nfe));
  log_of(ctx) << "distilled " << opts.steps << " steps on " << res.pairs.size() << " pairs, final loss "
              << format_number(res.losses.empty() ? 0.0 : res.losses.back()) << "\n";
  return kExitOk;
}

int cmd_dpo(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const std::string path = require_path(cfg, "dpo.base");
  DpoOptions opts;
  opts.dpo.beta = cfg.get_double("dpo.beta");
  opts.dpo.adam.lr = cfg.get_double("dpo.lr");
  opts.dpo.validate();
  opts.steps = cfg.get_size("dpo.steps");
  opts.batch = cfg.get_size("dpo.batch");
  opts.pairs = cfg.get_size("dpo.pairs");
  opts.candidates = cfg.get_size("dpo.candidates");
  const std::uint64_t nfe = cfg.get_u64("dpo.nfe");
  if (nfe == 0 || nfe > 100000) throw ConfigError("config field dpo.nfe must lie in [1, 100000]");
  opts.nfe = static_cast<int>(nfe);
  const std::vector<double> target = cfg.get_doubles("dpo.target");
  opts.target = Tensor::vector(target);
  opts.radius = cfg.get_double("dpo.radius");
  if (!(opts.radius > 0)) throw ConfigError("config field dpo.radius must be positive");
  prepare(ctx, {"run", "dpo"});

  const nnet::VectorFieldParams base = load_params(path);
  opts.condition = parse_condition("dpo.condition", cfg.get_string("dpo.condition"), base);
  const DpoOutcome res = run_dpo(base, opts, ctx.seed);
  save_checkpoint(ctx.out / "tuned.flwf", params_to_checkpoint(res.tuned, ctx.seed, opts.steps));
  save_checkpoint(ctx.out / "preferences.flwf", preference_pairs_to_checkpoint(res.pairs, ctx.seed));
  CsvTable t;
  t.header = {"step", "loss", "mean_z"};
  for (std::size_t i = 0; i < res.losses.size(); ++i) {
    t.rows.push_back({std::to_string(i), format_number(res.losses[i]), format_number(res.mean_z[i])});
  }
  write_csv(ctx.out / "dpo.csv", t);
  write_json(ctx.out / "summary.json", {{"beta", opts.dpo.beta},
                                        {"fraction_before", res.fraction_before},
                                        {"fraction_after", res.fraction_after},
                                        {"pairs", res.pairs.size()}});
  log_of(ctx) << "preferred-region fraction " << format_number(res.fraction_before) << " -> "
              << format_number(res.fraction_after) << "\n";
  return kExitOk;
}

int cmd_plan(const CommandContext& ctx) {
  const plan::PlannerScenario s = scenario_from(ctx.config);
  prepare(ctx, {"run", "arch", "cost", "plan"});
  const std::vector<plan::StrategyEval> ranked = plan::plan_strategies(s, ctx.threads);
  CsvTable t;
  t.header = {"tp", "cp", "pp", "vpp", "ckpt", "mem_gb", "mfu"};
  nlohmann::json j;
  j["accounting"] = plan::to_string(s.cost.mode);
  j["resolutions"] = nlohmann::json::array();
  for (const plan::ResolutionShare& r : s.mix) {
    const std::size_t tokens = plan::token_count(r.res);
    j["resolutions"].push_back({{"resolution", r.res.label()},
                                {"weight", r.weight},
                                {"tokens", tokens},
                                {"tflops", plan::flops_per_sample(s.arch, tokens, s.cost)}});
  }
  j["strategies"] = nlohmann::json::array();
  for (const plan::StrategyEval& e : ranked) {
    t.rows.push_back({std::to_string(e.par.tp), std::to_string(e.par.cp), std::to_string(e.par.pp),
                      std::to_string(e.par.vpp), format_number(e.par.checkpoint_fraction), format_number(e.memory_gb),
                      format_number(e.mfu)});
    j["strategies"].push_back({{"tp", e.par.tp},
                               {"cp", e.par.cp},
                               {"pp", e.par.pp},
                               {"vpp", e.par.vpp},
                               {"dp", e.par.dp()},
                               {"ckpt", e.par.checkpoint_fraction},
                               {"mem_gb", e.memory_gb},
                               {"mfu", e.mfu}});
  }
  write_csv(ctx.out / "strategies.csv", t);
  write_json(ctx.out / "strategies.json", j);
  log_of(ctx) << "accounting mode: " << plan::to_string(s.cost.mode) << "\n";
  const plan::StrategyEval& best = ranked.front();
  log_of(ctx) << ranked.size() << " feasible layouts; best tp=" << best.par.tp << " cp=" << best.par.cp
              << " pp=" << best.par.pp << " vpp=" << best.par.vpp << " ckpt=" << format_number(best.par.checkpoint_fraction)
              << " mfu=" << format_number(best.mfu) << "%\n";
  return kExitOk;
}

int cmd_balance(const CommandContext& ctx) {
  const plan::BalanceInputs in = balance_inputs_from(ctx.config, ctx.seed);
  prepare(ctx, {"run", "arch", "cost", "balance"});
  const plan::BatchPlan bp = plan::plan_batches(in);
  nlohmann::json j;
  j["accounting"] = ctx.config.get_list("balance.flops").empty() ? plan::to_string(cost_from(ctx.config).mode) : "listed";
  j["f_target"] = bp.f_target;
  j["alpha"] = bp.alpha;
  j["alpha_exact"] = bp.alpha_exact;
  j["flops"] = in.flops;
  j["batch_sizes"] = bp.batch_sizes;
  j["slots"] = nlohmann::json::array();
  for (std::size_t i = 0; i < bp.slots.size(); ++i) {
    j["slots"].push_back({{"resolution", bp.slots[i].resolution},
                          {"batch_size", bp.slots[i].batch_size},
                          {"flops", bp.slots[i].flops},
                          {"images", bp.image_allocation[i]},
                          {"load", bp.loads_after[i]}});
  }
  j["images"] = bp.images;
  j["image_flops"] = bp.image_flops;
  j["loads_before"] = bp.loads_before;
  j["loads_after"] = bp.loads_after;
  j["unbalanced_loads"] = bp.unbalanced_loads;
  j["ratio_after"] = plan::max_min_ratio(bp.loads_after);
  j["ratio_unbalanced"] = plan::max_min_ratio(bp.unbalanced_loads);
  write_json(ctx.out / "balance.json", j);
  for (const auto& [label, b] : bp.batch_sizes) log_of(ctx) << "B[" << label << "] = " << b << "\n";
  log_of(ctx) << "max/min load ratio " << format_number(plan::max_min_ratio(bp.loads_after)) << " (unbalanced "
              << format_number(plan::max_min_ratio(bp.unbalanced_loads)) << ")\n";
  return kExitOk;
}

int cmd_dynamics(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const std::string input = require_path(cfg, "dynamics.input");
  dynamics::Thresholds th{cfg.get_double("dynamics.lower"), cfg.get_double("dynamics.upper")};
  th.validate();
  const double q = cfg.get_double("dynamics.fluctuation_quantile");
  if (!(q >= 0 && q <= 1)) throw ConfigError("config field dynamics.fluctuation_quantile must lie in [0, 1]");
  prepare(ctx, {"run", "dynamics"});

  const CsvTable table = read_csv(input);
  if (table.header.size() < 3 || table.header.front() != "unit_id") {
    throw ConfigError("dynamics input needs a header unit_id,ck0,ck1,... with at least two checkpoints");
  }
  std::vector<dynamics::LossTrajectory> trajs;
  for (const auto& row : table.rows) {
    dynamics::LossTrajectory t{row.front(), {}};
    for (std::size_t i = 1; i < row.size(); ++i) t.losses.push_back(parse_number(row[i], "dynamics loss for " + row.front()));
    trajs.push_back(std::move(t));
  }
  if (trajs.empty()) throw ConfigError("dynamics input has no rows");
  const dynamics::CorpusClassification cc = dynamics::classify_corpus(trajs, th);

  std::vector<double> finals, reference;
  for (const auto& t : trajs) finals.push_back(t.losses.back());
  const std::string ref_path = cfg.get_string("dynamics.reference");
  if (ref_path.empty()) {
    reference.assign(finals.size(), cc.l_mean);
  } else {
    const CsvTable ref = read_csv(ref_path);
    std::map<std::string, double> by_id;
    const std::size_t id_col = ref.column("unit_id"), loss_col = ref.column("loss");
    for (const auto& row : ref.rows) by_id[row[id_col]] = parse_number(row[loss_col], "reference loss for " + row[id_col]);
    for (const auto& t : trajs) {
      const auto it = by_id.find(t.unit_id);
      if (it == by_id.end()) throw ConfigError("reference losses lack unit '" + t.unit_id + "'");
      reference.push_back(it->second);
    }
  }
  const std::vector<double> scores = dynamics::excess_loss_scores(finals, reference);
  const std::vector<int> tiers = dynamics::selection_tiers(scores);
  std::vector<double> fluct;
  for (std::size_t i = 0; i < trajs.size(); ++i) fluct.push_back(dynamics::fluctuation_score(trajs[i].losses, cc.fits[i]));
  const std::vector<bool> flags = dynamics::fluctuation_flags(fluct, q);

  std::vector<DynamicsRow> rows;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    rows.push_back({trajs[i].unit_id, cc.fits[i], cc.categories[i], fluct[i], flags[i], scores[i], tiers[i]});
  }
  write_csv(ctx.out / "dynamics.csv", dynamics_table(rows));
  write_text(ctx.out / "report.html", dynamics_html(rows, cc.l_mean, th));
  nlohmann::json freq;
  for (dynamics::Category c : dynamics::kCategories) freq[dynamics::to_string(c)] = cc.count(c);
  write_json(ctx.out / "summary.json", {{"units", rows.size()}, {"l_mean", cc.l_mean}, {"categories", freq}});
  for (dynamics::Category c : dynamics::kCategories) {
    log_of(ctx) << dynamics::to_string(c) << ": " << cc.count(c) << "\n";
  }
  return kExitOk;
}

int cmd_kernels_selftest(const CommandContext& ctx) {
  prepare(ctx, {"run"});
  const std::vector<kernels::SelftestResult> results = kernels::run_selftest(ctx.seed);
  CsvTable t;
  t.header = {"check", "result", "detail"};
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.passed;
    t.rows.push_back({r.name, r.passed ? "PASS" : "FAIL", r.detail});
    log_of(ctx) << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  " << r.detail << "\n";
  }
  write_csv(ctx.out / "selftest.csv", t);
  return ok ? kExitOk : kExitValidation;
}

}  // namespace flowforge::cli
