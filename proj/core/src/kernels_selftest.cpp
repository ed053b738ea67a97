// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowforge/kernels.hpp"
#include "flowforge/rng.hpp"

namespace flowforge::kernels {

namespace {

VideoTensor random_video(Rng& rng, std::size_t b, std::size_t c, std::size_t t, std::size_t h, std::size_t w) {
  VideoTensor v(b, c, t, h, w);
  for (double& x : v.tensor().data()) x = rng.normal();
  return v;
}

ConvKernel3D random_conv(Rng& rng, std::size_t c_out, std::size_t c_in, std::size_t kt, std::size_t k, std::size_t st,
                         std::size_t ss) {
  ConvKernel3D conv{Tensor({c_out, c_in, kt, k, k}), Tensor({c_out}), st, ss};
  for (double& x : conv.weight.data()) x = rng.normal();
  for (double& x : conv.bias.data()) x = rng.normal();
  return conv;
}

SelftestResult check_causality(Rng& rng) {
  std::size_t cases = 0;
  for (std::size_t frames = 1; frames <= 8; ++frames) {
    for (std::size_t kt = 1; kt <= 3; ++kt) {
      for (std::size_t st = 1; st <= 2; ++st) {
        const VideoTensor x = random_video(rng, 1, 2, frames, 3, 3);
        const ConvKernel3D conv = random_conv(rng, 2, 2, kt, 3, st, 1);
        const VideoTensor base = causal_conv3d(x, conv);
        for (std::size_t tp = 0; tp < frames; ++tp) {
          VideoTensor bumped = x;
          for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t h = 0; h < 3; ++h)
              for (std::size_t w = 0; w < 3; ++w) bumped(0, c, tp, h, w) += 1.0 + rng.uniform();
          const VideoTensor out = causal_conv3d(bumped, conv);
          ++cases;
          for (std::size_t j = 0; j < base.frames(); ++j) {
            if (j * st >= tp) continue;
            for (std::size_t o = 0; o < base.channels(); ++o)
              for (std::size_t h = 0; h < base.height(); ++h)
                for (std::size_t w = 0; w < base.width(); ++w) {
                  if (out(0, o, j, h, w) != base(0, o, j, h, w)) {
                    std::ostringstream os;
                    os << "frame " << j << " changed after perturbing frame " << tp << " (T=" << frames
                       << ", k_t=" << kt << ", s_t=" << st << ")";
                    return {"causal_conv3d causality", false, os.str()};
                  }
                }
          }
        }
      }
    }
  }
  return {"causal_conv3d causality", true, std::to_string(cases) + " perturbations, earlier frames bit-identical"};
}

SelftestResult check_shuffle_roundtrip(Rng& rng) {
  std::size_t cases = 0;
  for (std::size_t b = 1; b <= 2; ++b)
    for (std::size_t st = 1; st <= 2; ++st)
      for (std::size_t ss = 1; ss <= 2; ++ss) {
        const VideoTensor x = random_video(rng, b, 3, 4, 4, 6);
        if (pixel_shuffle3d(pixel_unshuffle3d(x, st, ss), st, ss) != x) {
          return {"pixel shuffle/unshuffle bijection", false,
                  "round trip differs at s_t=" + std::to_string(st) + ", s_s=" + std::to_string(ss)};
        }
        ++cases;
      }
  return {"pixel shuffle/unshuffle bijection", true, std::to_string(cases) + " stride combos bit-exact"};
}

SelftestResult check_average_repeat(Rng& rng) {
  for (std::size_t g : {1u, 2u, 4u, 8u}) {
    const VideoTensor z = random_video(rng, 1, 3, 2, 2, 2);
    if (grouped_channel_average(grouped_channel_repeat(z, g), 3) != z) {
      return {"grouped average o repeat identity", false, "mismatch at G=" + std::to_string(g)};
    }
  }
  return {"grouped average o repeat identity", true, "exact for G in {1,2,4,8}"};
}

SelftestResult check_rope(Rng& rng) {
  const RopeSpec spec{16, 4, 6, 6, 10000.0};
  double worst_norm = 0.0, worst_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor qk({2, 16});
    for (double& v : qk.data()) v = rng.normal();
    const Position3 p1{rng.uniform_index(64), rng.uniform_index(64), rng.uniform_index(64)};
    const Position3 p2{rng.uniform_index(64), rng.uniform_index(64), rng.uniform_index(64)};
    const Position3 shift{rng.uniform_index(64), rng.uniform_index(64), rng.uniform_index(64)};
    const Position3 pos[] = {p1, p2};
    const Position3 shifted[] = {{p1[0] + shift[0], p1[1] + shift[1], p1[2] + shift[2]},
                                 {p2[0] + shift[0], p2[1] + shift[1], p2[2] + shift[2]}};
    const Tensor r = rope3d(qk, pos, spec);
    const Tensor rs = rope3d(qk, shifted, spec);
    worst_norm = std::max(worst_norm, std::abs(std::sqrt(squared_norm(r)) - std::sqrt(squared_norm(qk))));
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      d0 += r[j] * r[16 + j];
      d1 += rs[j] * rs[16 + j];
    }
    worst_rel = std::max(worst_rel, std::abs(d0 - d1));
  }
  const bool ok = worst_norm <= 1e-9 && worst_rel <= 1e-9;
  std::ostringstream os;
  os << "max norm drift " << worst_norm << ", max relative-dot drift " << worst_rel;
  return {"rope3d isometry and relative positions", ok, os.str()};
}

SelftestResult check_dual_path_linearity(Rng& rng) {
  ConvKernel3D conv = random_conv(rng, 1, 8, 3, 3, 1, 1);
  std::fill(conv.bias.data().begin(), conv.bias.data().end(), 0.0);
  const VideoTensor x = random_video(rng, 1, 8, 4, 4, 4);
  const VideoTensor y = random_video(rng, 1, 8, 4, 4, 4);
  const double a = 0.7, b = -1.3;
  const VideoTensor lhs = dual_path_encode(VideoTensor(a * x.tensor() + b * y.tensor()), conv, 8);
  const Tensor rhs = a * dual_path_encode(x, conv, 8).tensor() + b * dual_path_encode(y, conv, 8).tensor();
  const double err = max_abs_diff(lhs.tensor(), rhs);
  return {"dual_path_encode linearity", err <= 1e-9, "max deviation " + std::to_string(err)};
}

SelftestResult check_qk_bound(Rng& rng) {
  const double gq[] = {1.5}, gk[] = {0.5};
  for (int trial = 0; trial < 10000; ++trial) {
    Tensor q({8}), k({8});
    for (double& v : q.data()) v = rng.normal() * 100.0;
    for (double& v : k.data()) v = rng.normal();
    const auto [qn, kn] = qk_norm(q, k, gq, gk);
    if (std::abs(dot(qn, kn)) > 8.0 * 1.5 * 0.5 * (1.0 + 1e-12)) {
      return {"qk_norm dot-product bound", false, "bound exceeded at trial " + std::to_string(trial)};
    }
  }
  return {"qk_norm dot-product bound", true, "10000 draws within d*|g_q g_k|"};
}

}  // namespace

std::vector<SelftestResult> run_selftest(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "kernels-selftest");
  return {check_causality(rng),          check_shuffle_roundtrip(rng), check_average_repeat(rng),
          check_rope(rng),               check_dual_path_linearity(rng), check_qk_bound(rng)};
}

}  // namespace flowforge::kernels
