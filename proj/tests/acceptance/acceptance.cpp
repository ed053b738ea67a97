// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, then a tally.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "flowforge/align.hpp"
#include "flowforge/cli/checkpoint.hpp"
#include "flowforge/cli/commands.hpp"
#include "flowforge/cli/config.hpp"
#include "flowforge/cli/report.hpp"
#include "flowforge/cli/toy_data.hpp"
#include "flowforge/dynamics.hpp"
#include "flowforge/flow.hpp"
#include "flowforge/kernels.hpp"
#include "flowforge/metrics.hpp"
#include "flowforge/nnet.hpp"
#include "flowforge/plan.hpp"
#include "gradcheck.hpp"

using namespace flowforge;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------

void gradient_correctness(Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    worst = std::max(worst, testkit::max_relative_grad_error(testkit::random_grad_problem(seed)));
  }
  const double secs = seconds_since(start);
  o.detail << "100 nets, max relative error " << num(worst) << ", " << num(secs) << " s";
  o.check(worst < 1e-4, "relative error < 1e-4");
  o.check(secs < 30.0, "runtime < 30 s");
}

void euler_order(Outcome& o) {
  const std::vector<int> y{0};
  const flow::VelocityFn identity = [](const Tensor& x, std::span<const double>, std::span<const int>) { return x; };
  const auto err = [&](std::size_t n) {
    const Tensor out = flow::euler_sample(identity, Tensor::vector({1.0}), flow::StepSchedule::uniform(n), std::nullopt, y);
    return std::abs(out[0] - std::numbers::e);
  };
  const double e1000 = err(1000), e2000 = err(2000);
  o.detail << "error(1000) " << num(e1000) << ", error(2000)/error(1000) " << num(e2000 / e1000);
  o.check(e1000 <= 3e-3, "error(1000) <= 3e-3");
  o.check(e2000 < 0.6 * e1000, "error(2000) < 0.6 error(1000)");

  const auto constant = [](std::vector<double> v0) {
    return flow::VelocityFn([v0](const Tensor& x, std::span<const double>, std::span<const int>) {
      Tensor out(x.shape());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = v0[i % v0.size()];
      return out;
    });
  };
  const bool a = flow::euler_sample(constant({1.0, -3.0}), Tensor::vector({0.0, 2.0}), flow::StepSchedule::uniform(4),
                                    std::nullopt, y) == Tensor::vector({1.0, -1.0});
  const bool b = flow::euler_sample(constant({3.0, 0.5}), Tensor::vector({1.0, 1.0}),
                                    flow::StepSchedule({0.0, 0.125, 0.5, 0.75, 1.0}), std::nullopt, y) ==
                 Tensor::vector({4.0, 1.5});
  o.detail << ", constant-field telescoping " << (a && b ? "bit-exact" : "inexact");
  o.check(a && b, "constant-field cases bit-exact");
}

void cfg_schedule(Outcome& o) {
  for (double c : {1.5, 5.0, 7.5, 10.0}) {
    o.check(flow::cfg_scale(1.0 / 9.0, c) == 1.0, "cfg_t(1/9) == 1 at cfg_max " + num(c));
    o.check(flow::cfg_scale(0.0, c) == c, "cfg_t(0) == cfg_max at " + num(c));
  }
  o.detail << "cfg_max in {1.5, 5, 7.5, 10}: cfg_t(0) = cfg_max, cfg_t(1/9) = 1";
}

// The trained model and its evaluation samples are shared by criteria 4 to 6.
struct ToyRun {
  cli::ToyDataset data;
  nnet::VectorFieldParams teacher;
  Tensor truth;
  Tensor noise;
  std::vector<int> labels;
};

constexpr std::size_t kEvalCount = 10000;

ToyRun& toy_run() {
  static ToyRun run = [] {
    ToyRun r;
    const std::uint64_t seed = 2026;
    cli::FmTrainOptions opts;  // 4000 steps, batch 256
    r.teacher = nnet::init_params(nnet::NetConfig{}, seed);
    cli::train_flow_matching(r.teacher, r.data, opts, seed);
    r.teacher = cli::round_to_f32(r.teacher);
    Rng truth_rng = Rng::stream(seed, "acceptance-truth");
    r.truth = r.data.sample(kEvalCount, truth_rng).x;
    Rng noise_rng = Rng::stream(seed, "acceptance-noise");
    r.noise = cli::draw_noise(kEvalCount, 2, noise_rng);
    Rng label_rng = Rng::stream(seed, "acceptance-labels");
    r.labels.resize(kEvalCount);
    for (int& y : r.labels) y = static_cast<int>(label_rng.uniform_index(r.data.num_conditions()));
    return r;
  }();
  return run;
}

double energy_at(const nnet::VectorFieldParams& p, std::size_t nfe) {
  const ToyRun& r = toy_run();
  const Tensor x = flow::euler_sample(p, r.noise, flow::StepSchedule::uniform(nfe), std::nullopt, r.labels);
  return metrics::energy_distance(x, r.truth);
}

void flow_matching_end_to_end(Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  toy_run();
  const double train_secs = seconds_since(start);
  const double ed = energy_at(toy_run().teacher, 50);
  o.detail << "two_gaussians, 4000 steps in " << num(train_secs) << " s, NFE 50 energy distance " << num(ed)
           << " (threshold 0.05)";
  o.check(ed < 0.05, "energy distance < 0.05");
  o.check(train_secs < 120.0, "training < 2 min");
}

void distillation(Outcome& o) {
  const cli::DistillOptions opts;
  const cli::DistillOutcome res = cli::run_distillation(toy_run().teacher, opts, 2027);
  const double teacher50 = energy_at(toy_run().teacher, 50);
  const double teacher5 = energy_at(toy_run().teacher, 5);
  const double student5 = energy_at(cli::round_to_f32(res.student), 5);
  o.detail << "student NFE 5 " << num(student5) << " vs teacher NFE 50 " << num(teacher50) << " (teacher NFE 5 "
           << num(teacher5) << "), ratio " << num(student5 / teacher50);
  o.check(student5 <= 1.5 * teacher50, "student(5) <= 1.5 teacher(50)");
}

void dpo(Outcome& o) {
  o.check(std::abs(align::dpo_loss(0.0, 0.5) - std::log(2.0)) <= 1e-12, "dpo_loss(0) == log 2");
  double worst = 0.0;
  const double h = 1e-6;
  for (double beta : {0.5, 5.0, 5000.0}) {
    for (int i = 0; i <= 60; ++i) {
      const double z = -3.0 + 0.1 * i;
      const double numeric = -(align::dpo_loss(z + h, beta) - align::dpo_loss(z - h, beta)) / (2 * h);
      const double analytic = align::dpo_grad_scale(z, beta);
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
    }
  }
  o.check(worst <= 1e-8, "grad scale within 1e-8 of d/dz");
  const double explode = align::dpo_grad_scale(-1.0, 5000.0) / align::dpo_grad_scale(-1.0, 0.5);
  o.check(explode > 1000.0, "beta 5000 gradient explodes for z < 0");

  cli::DpoOptions opts;
  const cli::DpoOutcome res = cli::run_dpo(toy_run().teacher, opts, 2028);
  const double gain = res.fraction_after - res.fraction_before;
  o.detail << "grad-scale error " << num(worst) << " (relative beyond 1), scale at z=-1 is " << num(explode)
           << "x larger for beta 5000 than 0.5; preferred fraction " << num(res.fraction_before) << " -> "
           << num(res.fraction_after);
  o.check(gain >= 0.2, "preferred fraction +20 points");
}

void kernel_causality(Outcome& o) {
  using namespace kernels;
  Rng rng(7);
  auto random_video = [&](std::size_t c, std::size_t t, std::size_t h, std::size_t w) {
    VideoTensor v(1, c, t, h, w);
    for (double& x : v.tensor().data()) x = rng.normal();
    return v;
  };
  std::size_t perturbations = 0;
  bool causal = true;
  for (std::size_t T = 1; T <= 8; ++T) {
    for (std::size_t st : {1u, 2u}) {
      const VideoTensor x = random_video(2, T, 3, 3);
      ConvKernel3D k;
      k.weight = Tensor({2, 2, 3, 3, 3});
      for (double& v : k.weight.data()) v = rng.normal();
      k.bias = Tensor::vector({rng.normal(), rng.normal()});
      k.stride_t = st;
      const VideoTensor base = causal_conv3d(x, k);
      for (std::size_t i = 0; i < x.tensor().size(); ++i) {
        VideoTensor xp = x;
        xp.tensor()[i] += 1.0;
        const std::size_t t = (i / 9) % T;
        const VideoTensor yp = causal_conv3d(xp, k);
        ++perturbations;
        // Output frame j reads input frames up to j * st.
        for (std::size_t j = 0; j < base.frames() && j * st < t; ++j) {
          for (std::size_t co = 0; co < 2; ++co)
            for (std::size_t a = 0; a < 3; ++a)
              for (std::size_t b = 0; b < 3; ++b) causal &= yp(0, co, j, a, b) == base(0, co, j, a, b);
        }
      }
    }
  }
  o.check(causal, "bit-zero diffs before the perturbed frame");

  bool shuffle = true;
  for (std::size_t s_t : {1u, 2u}) {
    for (std::size_t s_s : {1u, 2u, 4u}) {
      const VideoTensor x = random_video(3, 4, 8, 8);
      shuffle &= pixel_shuffle3d(pixel_unshuffle3d(x, s_t, s_s), s_t, s_s) == x;
    }
  }
  o.check(shuffle, "shuffle(unshuffle(x)) == x");

  bool grouped = true;
  for (std::size_t g : {1u, 2u, 3u, 4u, 8u}) {
    const VideoTensor z = random_video(4, 2, 3, 3);
    grouped &= grouped_channel_average(grouped_channel_repeat(z, g), 4) == z;
  }
  o.check(grouped, "average(repeat(z)) == z");

  const RopeSpec spec{16, 8, 4, 4};
  double iso = 0.0, rel = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Tensor q({1, 16}), k({1, 16});
    for (double& v : q.data()) v = rng.normal();
    for (double& v : k.data()) v = rng.normal();
    Position3 p1{}, p2{}, d{};
    for (std::size_t a = 0; a < 3; ++a) {
      p1[a] = rng.uniform_index(64);
      p2[a] = rng.uniform_index(64);
      d[a] = rng.uniform_index(64);
    }
    Position3 p1s = p1, p2s = p2;
    for (std::size_t a = 0; a < 3; ++a) {
      p1s[a] += d[a];
      p2s[a] += d[a];
    }
    const Tensor rq = rope3d(q, std::vector{p1}, spec);
    iso = std::max(iso, std::abs(std::sqrt(squared_norm(rq)) - std::sqrt(squared_norm(q))));
    const auto dot = [](const Tensor& a, const Tensor& b) {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      return s;
    };
    const double d1 = dot(rq, rope3d(k, std::vector{p2}, spec));
    const double d2 = dot(rope3d(q, std::vector{p1s}, spec), rope3d(k, std::vector{p2s}, spec));
    rel = std::max(rel, std::abs(d1 - d2));
  }
  o.check(iso <= 1e-9, "RoPE isometry within 1e-9");
  o.check(rel <= 1e-9, "RoPE relative dot product within 1e-9");
  o.detail << perturbations << " single-element perturbations over T <= 8, strides 1 and 2; shuffle round trips "
           << (shuffle ? "bit-exact" : "inexact") << "; RoPE norm error " << num(iso) << ", offset error " << num(rel);
}

void planner(Outcome& o) {
  using namespace plan;
  const std::size_t tokens = token_count({204, 256, 256});
  o.check(tokens == 6656, "token_count(204,256,256) == 6656");

  // Published per-sample TFLOPs; ratios against the 204x256x256 row.
  const std::vector<std::pair<std::string, double>> table = {
      {"204x256x256", 1717.20}, {"204x192x320", 1592.61}, {"136x256x256", 1079.85}, {"136x192x320", 1004.89},
      {"68x256x256", 509.31},   {"68x192x320", 475.87},   {"1x256x256", 44.99}};
  const ArchSpec arch = ArchSpec::step_video_30b();
  const Accounting mode = Accounting::fwd_bwd_recompute;
  const double ref = flops_per_sample(arch, tokens, mode);
  o.detail << "tokens " << tokens << "; accounting " << to_string(mode) << "; ratio error per row:";
  for (const auto& [label, published] : table) {
    const double model = ref / flops_per_sample(arch, token_count(ResolutionSpec::parse(label)), mode);
    const double want = 1717.20 / published;
    const double err = std::abs(model - want) / want;
    o.detail << " " << label << " " << num(100 * err) << "%";
    o.check(err <= 0.15, label + " ratio " + num(model) + " vs table " + num(want));
  }

  const CostModel cost;
  const MemoryBreakdown m1 = memory_footprint(arch, {1, 1, 1, 1, 0.3, 64}, tokens, cost);
  bool tp_exact = true;
  for (std::size_t tp : {2u, 4u, 8u}) {
    const MemoryBreakdown mt = memory_footprint(arch, {tp, 1, 1, 1, 0.3, 64}, tokens, cost);
    const double f = static_cast<double>(tp);
    tp_exact &= mt.params_gb == m1.params_gb / f && mt.grads_gb == m1.grads_gb / f &&
                mt.activations_gb == m1.activations_gb / f && mt.residual_gb == m1.residual_gb / f;
  }
  o.check(tp_exact, "memory TP scaling exact");
  const auto dropped = [&](double f) { return memory_footprint(arch, {8, 2, 1, 1, f, 64}, tokens, cost).recomputable_gb; };
  bool ckpt_exact = true;
  for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) ckpt_exact &= dropped(f) == dropped(0.0) * (1.0 - f);
  o.check(ckpt_exact, "checkpoint fraction proportionality exact");
  o.detail << "; memory scaling " << (tp_exact && ckpt_exact ? "exact" : "inexact");
}

void load_balancer(Outcome& o) {
  const auto cfg = cli::RunConfig::from_file(fs::path(FLOWFORGE_SCENARIO_DIR) / "table_balance.ini");
  const plan::BatchPlan bp = plan::plan_batches(cli::balance_inputs_from(cfg, 1));
  const std::size_t b = bp.batch_sizes.at("68x256x256");
  o.check(b == 3, "B_r for 68x256x256 == 3");

  const auto start = std::chrono::steady_clock::now();
  Rng rng(9);
  std::size_t instances = 0, mismatches = 0;
  for (std::size_t m = 1; m <= 6; ++m) {
    for (std::size_t n = 0; n <= 8; ++n) {
      for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> loads(m);
        for (double& l : loads) l = static_cast<double>(rng.uniform_index(24));
        const double c = 1.0 + static_cast<double>(rng.uniform_index(6));
        const plan::PadResult r = plan::greedy_pad(loads, n, c);
        ++instances;
        mismatches += *std::max_element(r.loads.begin(), r.loads.end()) != plan::brute_force_min_max(loads, n, c);
      }
    }
  }
  const double secs = seconds_since(start);
  o.check(mismatches == 0, "greedy == brute force");
  o.check(secs < 5.0, "exhaustive comparison < 5 s");
  o.detail << "B[68x256x256] = " << b << " at alpha 1; greedy optimal on " << instances - mismatches << "/" << instances
           << " instances (m <= 6, n <= 8) in " << num(secs) << " s";
}

void dynamics_check(Outcome& o) {
  using namespace dynamics;
  const TrendFit f = fit_loss_trend(std::vector<double>{2.0, 1.5, 1.6, 1.0});
  o.check(std::abs(f.slope + 0.29) <= 1e-9 && std::abs(f.intercept - 1.96) <= 1e-9, "OLS a=-0.29, b=1.96");
  o.check(classify(0.2, 1.5, 1.0) == Category::h_to_h && classify(-0.2, 1.5, 1.0) == Category::h_to_h &&
              classify(0.2, 0.5, 1.0) == Category::l_to_l && classify(-0.2, 0.5, 1.0) == Category::l_to_l &&
              classify(std::nextafter(0.2, 1.0), 0.5, 1.0) == Category::l_to_h &&
              classify(std::nextafter(-0.2, -1.0), 1.5, 1.0) == Category::h_to_l,
          "boundaries inclusive in the middle branch");

  Rng rng(10);
  const struct {
    Category c;
    double start, end;
  } shapes[] = {{Category::h_to_h, 4.0, 4.0}, {Category::l_to_h, 1.0, 2.5}, {Category::h_to_l, 3.5, 1.5},
                {Category::l_to_l, 0.5, 0.5}};
  std::vector<LossTrajectory> corpus;
  std::vector<Category> planted;
  for (int u = 0; u < 400; ++u) {
    const auto& s = shapes[u % 4];
    LossTrajectory t{"u" + std::to_string(u), {}};
    for (int i = 0; i <= 20; ++i) t.losses.push_back(s.start + (s.end - s.start) * i / 20.0 + 0.1 * (rng.uniform() - 0.5));
    corpus.push_back(std::move(t));
    planted.push_back(s.c);
  }
  const CorpusClassification cc = classify_corpus(corpus);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < planted.size(); ++i) hits += cc.categories[i] == planted[i];
  o.check(hits == planted.size(), "planted corpus recovered");
  o.detail << "a " << num(f.slope) << ", b " << num(f.intercept) << "; planted labels recovered " << hits << "/"
           << planted.size();
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void reproducibility(Outcome& o) {
  const fs::path dir = fs::temp_directory_path() / "flowforge_acceptance";
  fs::remove_all(dir);
  std::ostringstream log;
  const auto run = [&](const std::string& command, cli::RunConfig cfg, const fs::path& out) {
    cli::CommandContext ctx = cli::make_context(std::move(cfg), 31u, out);
    ctx.log = &log;
    return cli::run_command(command, ctx);
  };
  cli::RunConfig train;
  train.set("net.hidden", "32,32");
  train.set("train.steps", "200");
  train.set("train.sample_count", "500");
  std::size_t files = 0;
  bool identical = true;
  for (const char* tag : {"a", "b"}) run("train-fm", train, dir / tag / "train");
  cli::RunConfig sample;
  sample.set("sample.cfg_max", "4");
  sample.set("sample.nfe", "10");
  for (const char* tag : {"a", "b"}) {
    sample.set("sample.checkpoint", (dir / "a" / "train" / "model.flwf").string());
    run("sample", sample, dir / tag / "sample");
  }
  for (const char* tag : {"a", "b"}) {
    run("balance", cli::RunConfig::from_file(fs::path(FLOWFORGE_SCENARIO_DIR) / "table_balance.ini"), dir / tag / "balance");
  }
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file() || entry.path().filename() == "config.ini") continue;
    ++files;
    identical &= read_bytes(entry.path()) == read_bytes(dir / "b" / fs::relative(entry.path(), dir / "a"));
  }
  o.check(identical && files > 0, "fixed-seed outputs byte-identical");

  const nnet::VectorFieldParams p = nnet::init_params(nnet::NetConfig{}, 31);
  const std::vector<std::uint8_t> good = cli::encode_checkpoint(cli::params_to_checkpoint(p, 31, 0));
  const bool round_trip = cli::params_from_checkpoint(cli::decode_checkpoint(good)) == cli::round_to_f32(p) &&
                          cli::encode_checkpoint(cli::decode_checkpoint(good)) == good;
  o.check(round_trip, "checkpoint round trip bit-exact");

  std::map<cli::CheckpointErrorKind, bool> seen;
  const auto corrupt = [&](std::vector<std::uint8_t> bytes) {
    try {
      cli::params_from_checkpoint(cli::decode_checkpoint(bytes));
    } catch (const cli::CheckpointError& e) {
      seen[e.kind()] = true;
    }
  };
  auto bytes = good;
  bytes[1] ^= 1;
  corrupt(bytes);
  bytes = good;
  bytes[4] = 9;
  corrupt(bytes);
  corrupt({good.begin(), good.begin() + 20});
  bytes = good;
  bytes[13] = '}';
  corrupt(bytes);
  corrupt({good.begin(), good.end() - 4});
  cli::Checkpoint transposed = cli::decode_checkpoint(good);
  std::swap(transposed.tensors[0].shape[0], transposed.tensors[0].shape[1]);
  corrupt(cli::encode_checkpoint(transposed));
  o.check(seen.size() == 6, "all 6 checkpoint error variants triggered");
  o.detail << files << " output files byte-identical across two runs; checkpoint round trip "
           << (round_trip ? "bit-exact" : "inexact") << "; corruption matrix hit " << seen.size() << "/6 variants";
  fs::remove_all(dir);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"Euler order and telescoping", euler_order},
      {"guidance schedule", cfg_schedule},
      {"flow matching end to end", flow_matching_end_to_end},
      {"few-step distillation", distillation},
      {"preference optimization", dpo},
      {"kernel causality and identities", kernel_causality},
      {"planner", planner},
      {"load balancer", load_balancer},
      {"loss dynamics", dynamics_check},
      {"reproducibility and persistence", reproducibility},
  };
  int passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    passed += o.pass;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", passed, criteria.size());
  return 0;
}
