// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/plan.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <thread>
#include <tuple>

#include "flowforge/error.hpp"

namespace flowforge::plan {

void ResolutionSpec::validate() const {
  if (frames == 0 || height == 0 || width == 0) throw ConfigError("resolution dimensions must be positive");
}

std::string ResolutionSpec::label() const {
  return std::to_string(frames) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

ResolutionSpec ResolutionSpec::parse(const std::string& text) {
  std::array<std::size_t, 3> dims{};
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (std::size_t i = 0; i < 3; ++i) {
    if (i > 0) {
      if (p == end || *p != 'x') throw ConfigError("resolution '" + text + "' is not of the form FRAMESxHEIGHTxWIDTH");
      ++p;
    }
    const auto [next, ec] = std::from_chars(p, end, dims[i]);
    if (ec != std::errc()) throw ConfigError("resolution '" + text + "' is not of the form FRAMESxHEIGHTxWIDTH");
    p = next;
  }
  if (p != end) throw ConfigError("resolution '" + text + "' is not of the form FRAMESxHEIGHTxWIDTH");
  ResolutionSpec r{dims[0], dims[1], dims[2]};
  r.validate();
  return r;
}

void ArchSpec::validate() const {
  if (layers == 0 || hidden == 0 || heads == 0 || head_dim == 0) throw ConfigError("arch dimensions must be positive");
  if (hidden != heads * head_dim) throw ConfigError("arch hidden must equal heads * head_dim");
  if (!(total_params > 0)) throw ConfigError("arch total_params must be positive");
}

ArchSpec ArchSpec::step_video_30b() { return ArchSpec{}; }

std::string to_string(Accounting a) {
  switch (a) {
    case Accounting::forward_only: return "forward_only";
    case Accounting::fwd_bwd: return "fwd_bwd";
    case Accounting::fwd_bwd_recompute: return "fwd_bwd_recompute";
  }
  return "fwd_bwd_recompute";
}

Accounting accounting_from_string(const std::string& name) {
  if (name == "forward_only") return Accounting::forward_only;
  if (name == "fwd_bwd") return Accounting::fwd_bwd;
  if (name == "fwd_bwd_recompute") return Accounting::fwd_bwd_recompute;
  throw ConfigError("unknown accounting mode '" + name + "'");
}

FlopsCoefficients coefficients(Accounting mode) {
  // Forward is 2 FLOPs per parameter-token and 4 per (layer, hidden, token pair)
  // for the QK^T and AV matmuls; backward doubles forward, recompute repeats it.
  switch (mode) {
    case Accounting::forward_only: return {2.0, 4.0};
    case Accounting::fwd_bwd: return {6.0, 12.0};
    case Accounting::fwd_bwd_recompute: return {8.0, 16.0};
  }
  return {8.0, 16.0};
}

void CostModel::validate() const {
  const double positives[] = {bytes_per_param, bytes_per_grad, bytes_per_optimizer, bytes_per_activation,
                              peak_flops,      tp_bandwidth,   cp_bandwidth,        pipeline_microbatches};
  for (double v : positives) {
    if (!(v > 0)) throw ConfigError("cost model byte sizes, bandwidths and peak FLOPs must be positive");
  }
  const double non_negatives[] = {activation_factor, residual_factor, tp_collectives, cp_collectives, pipeline_bubble};
  for (double v : non_negatives) {
    if (!(v >= 0)) throw ConfigError("cost model factors must be non-negative");
  }
  if (!(comm_overlap >= 0 && comm_overlap <= 1)) throw ConfigError("cost.comm_overlap must lie in [0, 1]");
}

std::size_t ParallelismConfig::dp() const { return world_size / (tp * cp * pp); }

void ParallelismConfig::validate() const {
  if (tp == 0 || cp == 0 || pp == 0 || vpp == 0 || world_size == 0) throw ConfigError("parallel degrees must be positive");
  if (!(checkpoint_fraction >= 0.0 && checkpoint_fraction <= 1.0)) {
    throw ConfigError("checkpoint fraction must lie in [0, 1]");
  }
  const std::size_t group = tp * cp * pp;
  if (group > world_size || world_size % group != 0) {
    throw ConfigError("tp*cp*pp = " + std::to_string(group) + " does not divide world size " + std::to_string(world_size));
  }
  if (pp == 1 && vpp != 1) throw ConfigError("vpp > 1 requires pipeline parallelism");
}

std::size_t token_count(const ResolutionSpec& res) {
  res.validate();
  return ((res.frames + 7) / 8) * ((res.height + 15) / 16) * ((res.width + 15) / 16);
}

double flops_per_sample(const ArchSpec& arch, std::size_t tokens, Accounting mode) {
  arch.validate();
  if (tokens == 0) throw DomainError("flops_per_sample: tokens must be at least 1");
  const FlopsCoefficients c = coefficients(mode);
  const double n = static_cast<double>(tokens);
  const double dense = c.dense * arch.total_params * n;
  const double attn = c.attention * static_cast<double>(arch.layers) * static_cast<double>(arch.hidden) * n * n;
  return (dense + attn) / 1e12;
}

double flops_per_sample(const ArchSpec& arch, std::size_t tokens, const CostModel& model) {
  return flops_per_sample(arch, tokens, model.mode);
}

namespace {

constexpr double kGB = 1e9;

double local_layers(const ArchSpec& arch, const ParallelismConfig& par) {
  return std::ceil(static_cast<double>(arch.layers) / static_cast<double>(par.pp));
}

}  // namespace

MemoryBreakdown memory_footprint(const ArchSpec& arch, const ParallelismConfig& par, std::size_t tokens,
                                 const CostModel& model) {
  arch.validate();
  par.validate();
  model.validate();
  const double shard = static_cast<double>(par.tp * par.pp);
  const double seq_shard = static_cast<double>(par.tp * par.cp);
  const double n = arch.total_params;
  const double layers = local_layers(arch, par);
  const double per_layer = static_cast<double>(tokens) * static_cast<double>(arch.hidden) / seq_shard;

  MemoryBreakdown m;
  m.params_gb = n * model.bytes_per_param / shard / kGB;
  m.grads_gb = n * model.bytes_per_grad / shard / kGB;
  m.optimizer_gb = n * model.bytes_per_optimizer / (shard * static_cast<double>(par.dp())) / kGB;
  m.residual_gb = layers * per_layer * model.residual_factor * model.bytes_per_activation / kGB;
  m.recomputable_gb = layers * per_layer * model.activation_factor / kGB * (1.0 - par.checkpoint_fraction);
  m.activations_gb = m.recomputable_gb + m.residual_gb;
  return m;
}

double estimate_mfu(const ArchSpec& arch, const ParallelismConfig& par, std::span<const ResolutionShare> mix,
                    const CostModel& model) {
  arch.validate();
  par.validate();
  model.validate();
  if (mix.empty()) throw ContractError("estimate_mfu: empty resolution mix");
  double weight_total = 0.0;
  for (const ResolutionShare& r : mix) weight_total += r.weight;
  if (!(weight_total > 0)) throw ConfigError("resolution mix weights must sum to a positive value");

  const double devices = static_cast<double>(par.tp * par.cp * par.pp);
  const double layers = local_layers(arch, par);
  const double tp = static_cast<double>(par.tp), cp = static_cast<double>(par.cp);
  double useful = 0.0, recompute = 0.0, stall = 0.0;
  for (const ResolutionShare& r : mix) {
    const double w = r.weight / weight_total;
    const std::size_t tokens = token_count(r.res);
    const double n = static_cast<double>(tokens);
    useful += w * flops_per_sample(arch, tokens, Accounting::fwd_bwd) * 1e12 / devices;
    recompute += w * par.checkpoint_fraction * flops_per_sample(arch, tokens, Accounting::forward_only) * 1e12 / devices;
    const double act = static_cast<double>(arch.hidden) * model.bytes_per_activation;
    const double tp_bytes = layers * model.tp_collectives * (n / cp) * act * (tp - 1.0) / tp;
    const double cp_bytes = layers * model.cp_collectives * n * (2.0 * act / tp) * (cp - 1.0) / cp;
    const double seconds = tp_bytes / model.tp_bandwidth + cp_bytes / model.cp_bandwidth;
    stall += w * (1.0 - model.comm_overlap) * seconds * model.peak_flops;
  }
  const double bubble = model.pipeline_bubble * (static_cast<double>(par.pp) - 1.0) /
                        (static_cast<double>(par.vpp) * model.pipeline_microbatches) * (useful + recompute);
  return 100.0 * useful / (useful + recompute + stall + bubble);
}

std::vector<StrategyEval> rank_strategies(std::vector<StrategyEval> candidates) {
  if (candidates.empty()) throw ContractError("rank_strategies: no candidates");
  std::stable_sort(candidates.begin(), candidates.end(), [](const StrategyEval& a, const StrategyEval& b) {
    if (a.mfu != b.mfu) return a.mfu > b.mfu;
    const auto ka = std::tie(a.par.tp, a.par.cp, a.par.pp, a.par.vpp);
    const auto kb = std::tie(b.par.tp, b.par.cp, b.par.pp, b.par.vpp);
    return ka < kb;
  });
  return candidates;
}

double minimal_checkpoint_fraction(const PlannerScenario& s, ParallelismConfig par) {
  std::size_t longest = 0;
  for (const ResolutionShare& r : s.mix) longest = std::max(longest, token_count(r.res));
  const auto layers = static_cast<std::size_t>(local_layers(s.arch, par));
  for (std::size_t k = 0; k <= layers; ++k) {
    par.checkpoint_fraction = static_cast<double>(k) / static_cast<double>(layers);
    if (memory_footprint(s.arch, par, longest, s.cost).total_gb() <= s.device_memory_gb) return par.checkpoint_fraction;
  }
  return -1.0;
}

std::vector<StrategyEval> plan_strategies(const PlannerScenario& s, std::size_t threads) {
  s.arch.validate();
  s.cost.validate();
  if (s.mix.empty()) throw ConfigError("planner scenario has an empty resolution mix");
  std::vector<ParallelismConfig> layouts;
  for (std::size_t tp : s.tp_options)
    for (std::size_t cp : s.cp_options)
      for (std::size_t pp : s.pp_options)
        for (std::size_t vpp : s.vpp_options) {
          ParallelismConfig par{tp, cp, pp, vpp, 0.0, s.world_size};
          const std::size_t group = tp * cp * pp;
          if (group == 0 || group > s.world_size || s.world_size % group != 0) continue;
          if (s.arch.hidden % tp != 0 || s.arch.heads % tp != 0) continue;
          if (s.arch.layers % pp != 0) continue;
          if (pp == 1 ? vpp != 1 : (s.arch.layers / pp) % vpp != 0) continue;
          layouts.push_back(par);
        }

  std::vector<std::optional<StrategyEval>> slots(layouts.size());
  auto evaluate = [&](std::size_t i) {
    ParallelismConfig par = layouts[i];
    const double ckpt = minimal_checkpoint_fraction(s, par);
    if (ckpt < 0) return;
    par.checkpoint_fraction = ckpt;
    std::size_t longest = 0;
    for (const ResolutionShare& r : s.mix) longest = std::max(longest, token_count(r.res));
    slots[i] = StrategyEval{par, memory_footprint(s.arch, par, longest, s.cost).total_gb(),
                            estimate_mfu(s.arch, par, s.mix, s.cost)};
  };
  threads = std::max<std::size_t>(1, std::min(threads, layouts.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < layouts.size(); ++i) evaluate(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < layouts.size(); i += threads) evaluate(i);
      });
    }
    for (std::thread& t : pool) t.join();
  }
  std::vector<StrategyEval> feasible;
  for (auto& e : slots) {
    if (e) feasible.push_back(*e);
  }
  if (feasible.empty()) throw ConfigError("no parallel layout fits in device memory");
  return rank_strategies(std::move(feasible));
}

std::map<std::string, std::size_t> coarse_batch_sizes(const std::map<std::string, double>& flops, double f_target,
                                                      double alpha) {
  if (!(alpha > 0)) throw ConfigError("alpha must be positive");
  if (!(f_target > 0)) throw ConfigError("F_target must be positive");
  std::map<std::string, std::size_t> out;
  for (const auto& [name, f] : flops) {
    if (!(f > 0)) throw ConfigError("FLOPs for resolution " + name + " must be positive");
    const double q = std::floor(f_target / (alpha * f));
    if (q < 1.0) {
      throw ConfigError("batch size for resolution " + name + " rounds to 0; lower alpha (currently " +
                        std::to_string(alpha) + ")");
    }
    out[name] = static_cast<std::size_t>(q);
  }
  return out;
}

AlphaChoice solve_alpha(const std::map<std::string, double>& flops, double f_target, std::size_t target_total) {
  if (flops.empty()) throw ConfigError("no resolutions to balance");
  if (target_total < flops.size()) {
    throw ConfigError("target batch total " + std::to_string(target_total) + " is below one sample per resolution");
  }
  // The summed batch size only changes where some F_target / (alpha F_r) crosses an integer.
  std::vector<double> candidates;
  for (const auto& [name, f] : flops) {
    if (!(f > 0)) throw ConfigError("FLOPs for resolution " + name + " must be positive");
    for (std::size_t k = 1; k <= target_total; ++k) {
      const double a = f_target / (f * static_cast<double>(k));
      candidates.push_back(a);
      candidates.push_back(std::nextafter(a, std::numeric_limits<double>::infinity()));
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::optional<AlphaChoice> best_exact, best_below;
  for (double a : candidates) {
    std::size_t total = 0;
    bool ok = true;
    for (const auto& [name, f] : flops) {
      const double q = std::floor(f_target / (a * f));
      if (q < 1.0) {
        ok = false;
        break;
      }
      total += static_cast<std::size_t>(q);
    }
    if (!ok) break;  // larger alpha only shrinks batches further
    if (total == target_total && !best_exact) best_exact = AlphaChoice{a, total, true};
    if (total <= target_total && !best_below) best_below = AlphaChoice{a, total, false};
    if (best_exact) break;
  }
  if (best_exact) return *best_exact;
  if (best_below) return *best_below;
  throw ConfigError("no alpha keeps every resolution at batch size >= 1 within the target total");
}

PadResult greedy_pad(std::span<const double> loads, std::size_t n_images, double image_flops) {
  PadResult r{std::vector<double>(loads.begin(), loads.end()), std::vector<std::size_t>(loads.size(), 0)};
  if (n_images == 0) return r;
  if (loads.empty()) throw ContractError("greedy_pad: no batches to pad");
  if (!(image_flops >= 0)) throw ConfigError("image FLOPs must be non-negative");
  for (std::size_t i = 0; i < n_images; ++i) {
    const auto it = std::min_element(r.loads.begin(), r.loads.end());  // first minimum on ties
    const auto idx = static_cast<std::size_t>(it - r.loads.begin());
    r.loads[idx] += image_flops;
    ++r.images[idx];
  }
  return r;
}

namespace {

void enumerate_min_max(std::span<const double> loads, std::size_t batch, std::size_t left, double image_flops,
                       double current_max, double& best) {
  if (batch + 1 == loads.size()) {
    best = std::min(best, std::max(current_max, loads[batch] + static_cast<double>(left) * image_flops));
    return;
  }
  for (std::size_t k = 0; k <= left; ++k) {
    const double m = std::max(current_max, loads[batch] + static_cast<double>(k) * image_flops);
    if (m >= best) continue;
    enumerate_min_max(loads, batch + 1, left - k, image_flops, m, best);
  }
}

}  // namespace

double brute_force_min_max(std::span<const double> loads, std::size_t n_images, double image_flops) {
  if (loads.empty()) throw ContractError("brute_force_min_max: no batches");
  double best = std::numeric_limits<double>::infinity();
  enumerate_min_max(loads, 0, n_images, image_flops, -std::numeric_limits<double>::infinity(), best);
  return best;
}

double max_min_ratio(std::span<const double> loads) {
  if (loads.empty()) throw ContractError("max_min_ratio: no loads");
  const auto [lo, hi] = std::minmax_element(loads.begin(), loads.end());
  if (!(*lo > 0)) throw ContractError("max_min_ratio: loads must be positive");
  return *hi / *lo;
}

BatchPlan plan_batches(const BalanceInputs& in) {
  if (in.flops.empty()) throw ConfigError("balance: no resolutions");
  if (in.sequence.empty()) throw ConfigError("balance: empty batch cache");
  BatchPlan plan;
  plan.f_target = in.f_target;
  if (in.target_total > 0) {
    const AlphaChoice choice = solve_alpha(in.flops, in.f_target, in.target_total);
    plan.alpha = choice.alpha;
    plan.alpha_exact = choice.exact;
  } else {
    plan.alpha = in.alpha;
  }
  plan.batch_sizes = coarse_batch_sizes(in.flops, in.f_target, plan.alpha);
  std::size_t videos = 0;
  for (const std::string& name : in.sequence) {
    const auto it = in.flops.find(name);
    if (it == in.flops.end()) throw ConfigError("balance: cached batch uses unknown resolution '" + name + "'");
    const std::size_t b = plan.batch_sizes.at(name);
    plan.slots.push_back(BatchSlot{name, b, static_cast<double>(b) * it->second});
    plan.loads_before.push_back(static_cast<double>(b) * it->second);
    plan.unbalanced_loads.push_back(it->second);
    videos += b;
  }
  plan.images = image_supplement(videos, in.image_ratio);
  plan.image_flops = in.image_flops;
  const PadResult pad = greedy_pad(plan.loads_before, plan.images, in.image_flops);
  plan.loads_after = pad.loads;
  plan.image_allocation = pad.images;
  for (std::size_t i = 0; i < plan.images; ++i) {
    plan.unbalanced_loads[i % plan.unbalanced_loads.size()] += in.image_flops;
  }
  return plan;
}

std::size_t image_supplement(std::size_t video_samples, double ratio) {
  if (!(ratio >= 0)) throw ConfigError("image ratio must be non-negative");
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(video_samples)));
}

std::string to_string(AspectBucket a) {
  switch (a) {
    case AspectBucket::landscape: return "landscape";
    case AspectBucket::portrait: return "portrait";
    case AspectBucket::square: return "square";
  }
  return "square";
}

Bucket bucketize(std::size_t frames, std::size_t height, std::size_t width) {
  if (frames == 0 || height == 0 || width == 0) throw DomainError("bucketize: dimensions must be positive");
  Bucket b;
  for (std::size_t len : kLengthBuckets) {
    if (len <= frames) b.length = len;
  }
  // Height-to-width targets: 9/16 is wide (landscape), 16/9 is tall (portrait).
  const double r = std::log(static_cast<double>(height) / static_cast<double>(width));
  const double d_square = std::abs(r);
  const double d_land = std::abs(r - std::log(9.0 / 16.0));
  const double d_port = std::abs(r - std::log(16.0 / 9.0));
  b.aspect = AspectBucket::square;
  double best = d_square;
  if (d_land < best) {
    best = d_land;
    b.aspect = AspectBucket::landscape;
  }
  if (d_port < best) b.aspect = AspectBucket::portrait;
  return b;
}

}  // namespace flowforge::plan
