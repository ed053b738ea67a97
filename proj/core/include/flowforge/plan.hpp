// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace flowforge::plan {

struct ResolutionSpec {
  std::size_t frames = 1;
  std::size_t height = 256;
  std::size_t width = 256;

  void validate() const;
  std::string label() const;  // "FxHxW"
  static ResolutionSpec parse(const std::string& text);

  friend auto operator<=>(const ResolutionSpec&, const ResolutionSpec&) = default;
};

struct ArchSpec {
  std::size_t layers = 48;
  std::size_t hidden = 6144;
  std::size_t heads = 48;
  std::size_t head_dim = 128;
  std::size_t ffn_dim = 24576;
  std::size_t cross_attn_dim = 6144;
  std::size_t cross_attn_kv_dim = 1024;
  double total_params = 30e9;

  void validate() const;
  /// 48 layers, 48 heads of 128, FFN 24,576, cross-attention (6,144, 1,024), 30B parameters.
  static ArchSpec step_video_30b();
};

enum class Accounting { forward_only, fwd_bwd, fwd_bwd_recompute };

std::string to_string(Accounting a);
Accounting accounting_from_string(const std::string& name);

/// Multipliers (a, b) of the FLOPs model a*N*tokens + b*L*d*tokens^2.
struct FlopsCoefficients {
  double dense = 0.0;
  double attention = 0.0;
};

FlopsCoefficients coefficients(Accounting mode);

/// Constants of the cost model. The communication entries are calibration
/// knobs, not measurements.
struct CostModel {
  Accounting mode = Accounting::fwd_bwd_recompute;

  double bytes_per_param = 2.0;       // bf16 weights
  double bytes_per_grad = 4.0;        // fp32 gradient accumulation
  double bytes_per_optimizer = 12.0;  // fp32 master weights + two Adam moments
  double bytes_per_activation = 2.0;

  /// Activation bytes per (token, hidden unit, layer) before sharding.
  double activation_factor = 60.0;
  /// Checkpointed layer inputs kept per (token, hidden unit, layer), in units of bytes_per_activation.
  double residual_factor = 1.0;

  double peak_flops = 989e12;      // per device, dense bf16
  double tp_bandwidth = 450e9;     // bytes/s, intra-node
  double cp_bandwidth = 50e9;      // bytes/s, inter-node
  double tp_collectives = 8.0;     // activation-sized collectives per layer (fwd+bwd)
  double cp_collectives = 2.0;     // K/V exchanges per layer (fwd+bwd)
  double comm_overlap = 0.5;       // fraction of communication hidden behind compute
  double pipeline_microbatches = 16.0;
  double pipeline_bubble = 1.0;    // scales the (pp-1)/(vpp*m) bubble term

  void validate() const;
};

struct ParallelismConfig {
  std::size_t tp = 1;
  std::size_t cp = 1;
  std::size_t pp = 1;
  std::size_t vpp = 1;
  double checkpoint_fraction = 0.0;
  std::size_t world_size = 1;

  /// Data-parallel degree world / (tp*cp*pp).
  std::size_t dp() const;
  void validate() const;
};

struct MemoryBreakdown {
  double params_gb = 0.0;
  double grads_gb = 0.0;
  double optimizer_gb = 0.0;
  double activations_gb = 0.0;
  double residual_gb = 0.0;      // part of activations_gb that checkpointing cannot drop
  double recomputable_gb = 0.0;  // the rest, scaled by 1 - checkpoint_fraction

  double total_gb() const { return params_gb + grads_gb + optimizer_gb + activations_gb; }
};

/// ceil(T/8) * ceil(H/16) * ceil(W/16).
std::size_t token_count(const ResolutionSpec& res);

/// TFLOPs per sample: a*N*tokens + b*L*d*tokens^2.
double flops_per_sample(const ArchSpec& arch, std::size_t tokens, const CostModel& model);
double flops_per_sample(const ArchSpec& arch, std::size_t tokens, Accounting mode);

/// Per-device memory in GB (1e9 bytes).
MemoryBreakdown memory_footprint(const ArchSpec& arch, const ParallelismConfig& par, std::size_t tokens,
                                 const CostModel& model);

struct ResolutionShare {
  ResolutionSpec res;
  double weight = 1.0;
};

/// Useful / (useful + recompute + exposed communication + pipeline bubble), in percent.
double estimate_mfu(const ArchSpec& arch, const ParallelismConfig& par, std::span<const ResolutionShare> mix,
                    const CostModel& model);

struct StrategyEval {
  ParallelismConfig par;
  double memory_gb = 0.0;
  double mfu = 0.0;
};

/// Sorted by MFU descending; ties broken by (tp, cp, pp, vpp) ascending.
std::vector<StrategyEval> rank_strategies(std::vector<StrategyEval> candidates);

struct PlannerScenario {
  ArchSpec arch;
  CostModel cost;
  std::size_t world_size = 64;
  double device_memory_gb = 80.0;
  std::vector<ResolutionShare> mix;
  std::vector<std::size_t> tp_options = {1, 2, 4, 8};
  std::vector<std::size_t> cp_options = {1, 2, 4, 8};
  std::vector<std::size_t> pp_options = {1, 2, 4};
  std::vector<std::size_t> vpp_options = {1, 2, 4, 6, 12, 24};
};

/// Smallest checkpoint fraction on a per-layer grid that fits device memory
/// for the longest sequence in the mix; negative when nothing fits.
double minimal_checkpoint_fraction(const PlannerScenario& s, ParallelismConfig par);

/// Enumerates feasible (tp, cp, pp, vpp) layouts, picks the minimal
/// checkpoint fraction for each and ranks them. Evaluation may fan out
/// across `threads` workers; the result does not depend on the count.
std::vector<StrategyEval> plan_strategies(const PlannerScenario& s, std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Load balancing

/// B_r = floor(F_target / (alpha F_r)); throws ConfigError when any B_r is 0.
std::map<std::string, std::size_t> coarse_batch_sizes(const std::map<std::string, double>& flops, double f_target,
                                                      double alpha);

struct AlphaChoice {
  double alpha = 1.0;
  std::size_t total = 0;
  bool exact = false;
};

/// Smallest alpha whose summed batch sizes reach `target_total` exactly, or
/// else the smallest alpha with a sum not above it.
AlphaChoice solve_alpha(const std::map<std::string, double>& flops, double f_target, std::size_t target_total);

struct PadResult {
  std::vector<double> loads;
  std::vector<std::size_t> images;
};

/// Places identical items one at a time on the least-loaded batch (lowest index on ties).
PadResult greedy_pad(std::span<const double> loads, std::size_t n_images, double image_flops);

/// Minimum achievable max load over every distribution of n identical items.
double brute_force_min_max(std::span<const double> loads, std::size_t n_images, double image_flops);

struct BatchSlot {
  std::string resolution;
  std::size_t batch_size = 0;
  double flops = 0.0;
};

struct BatchPlan {
  double alpha = 1.0;
  bool alpha_exact = true;
  double f_target = 0.0;
  std::map<std::string, std::size_t> batch_sizes;
  std::vector<BatchSlot> slots;
  std::size_t images = 0;
  double image_flops = 0.0;
  std::vector<std::size_t> image_allocation;
  std::vector<double> loads_before;
  std::vector<double> loads_after;
  std::vector<double> unbalanced_loads;
};

double max_min_ratio(std::span<const double> loads);

struct BalanceInputs {
  std::map<std::string, double> flops;  // F_r per resolution label
  double f_target = 0.0;
  double alpha = 1.0;
  /// When set, alpha is solved so the batch sizes sum to this value.
  std::size_t target_total = 0;
  /// Resolution of each cached batch, in order.
  std::vector<std::string> sequence;
  double image_ratio = 0.1;
  double image_flops = 0.0;
};

/// Coarse FLOPs alignment of the cached batches followed by greedy image
/// padding. `unbalanced_loads` is the reference without alignment: batch
/// size 1 per cached batch and the same images dealt round-robin.
BatchPlan plan_batches(const BalanceInputs& in);

/// Image count for a cache of video samples at the given images-per-video ratio.
std::size_t image_supplement(std::size_t video_samples, double ratio);

// ---------------------------------------------------------------------------
// Bucketing

enum class AspectBucket { landscape, portrait, square };

std::string to_string(AspectBucket a);

struct Bucket {
  std::size_t length = 1;
  AspectBucket aspect = AspectBucket::square;

  friend bool operator==(const Bucket&, const Bucket&) = default;
};

inline constexpr std::size_t kLengthBuckets[] = {1, 68, 136, 204};

Bucket bucketize(std::size_t frames, std::size_t height, std::size_t width);

}  // namespace flowforge::plan
