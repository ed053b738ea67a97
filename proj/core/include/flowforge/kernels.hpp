// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowforge/tensor.hpp"

namespace flowforge::kernels {

/// Rank-5 tensor laid out as (B, C, T, H, W).
class VideoTensor {
 public:
  VideoTensor() = default;
  explicit VideoTensor(Tensor t);
  VideoTensor(std::size_t b, std::size_t c, std::size_t t, std::size_t h, std::size_t w, double fill = 0.0);

  std::size_t batch() const { return tensor_.dim(0); }
  std::size_t channels() const { return tensor_.dim(1); }
  std::size_t frames() const { return tensor_.dim(2); }
  std::size_t height() const { return tensor_.dim(3); }
  std::size_t width() const { return tensor_.dim(4); }

  std::size_t index(std::size_t b, std::size_t c, std::size_t t, std::size_t h, std::size_t w) const {
    return (((b * channels() + c) * frames() + t) * height() + h) * width() + w;
  }
  double& operator()(std::size_t b, std::size_t c, std::size_t t, std::size_t h, std::size_t w) {
    return tensor_[index(b, c, t, h, w)];
  }
  double operator()(std::size_t b, std::size_t c, std::size_t t, std::size_t h, std::size_t w) const {
    return tensor_[index(b, c, t, h, w)];
  }

  const Tensor& tensor() const noexcept { return tensor_; }
  Tensor& tensor() noexcept { return tensor_; }
  const Shape& shape() const noexcept { return tensor_.shape(); }

  friend bool operator==(const VideoTensor&, const VideoTensor&) = default;

 private:
  Tensor tensor_;
};

/// 3-D convolution weights (C_out, C_in, k_t, k_h, k_w) with per-output bias.
struct ConvKernel3D {
  Tensor weight;
  Tensor bias;
  std::size_t stride_t = 1;
  std::size_t stride_s = 1;

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kt() const { return weight.dim(2); }
  std::size_t kh() const { return weight.dim(3); }
  std::size_t kw() const { return weight.dim(4); }

  void validate() const;
};

/// Temporally causal 3-D convolution: k_t - 1 zero frames are padded on the
/// left before striding, and spatial dims use symmetric same-padding. Output
/// frame j reads input frames j*s_t - (k_t - 1) .. j*s_t.
VideoTensor causal_conv3d(const VideoTensor& x, const ConvKernel3D& k);

/// Space/time-to-channel reindexing. Output channel
/// `c * (s_t*s_s*s_s) + (dt*s_s + dh)*s_s + dw` at (t, h, w) holds input
/// (c, t*s_t + dt, h*s_s + dh, w*s_s + dw).
VideoTensor pixel_unshuffle3d(const VideoTensor& x, std::size_t s_t, std::size_t s_s);
VideoTensor pixel_shuffle3d(const VideoTensor& x, std::size_t s_t, std::size_t s_s);

/// Mean over G = C / c_z contiguous channel groups:
/// out[c] = (1/G) sum_k u[k*c_z + c].
VideoTensor grouped_channel_average(const VideoTensor& u, std::size_t c_z);

/// Tiles the channels G times: out[k*C + c] = z[c].
VideoTensor grouped_channel_repeat(const VideoTensor& z, std::size_t groups);

/// Z = unshuffle(causal_conv(x)) + grouped_channel_average(unshuffle(x), c_z).
/// The conv must have stride 1 and c_z = conv.out_channels * s_t * s_s^2.
VideoTensor dual_path_encode(const VideoTensor& x, const ConvKernel3D& conv, std::size_t c_z, std::size_t s_t = 2,
                             std::size_t s_s = 2);

// ---------------------------------------------------------------------------
// Positional encoding and attention pre-processing

struct RopeSpec {
  std::size_t head_dim = 0;
  std::size_t frame_dim = 0;
  std::size_t height_dim = 0;
  std::size_t width_dim = 0;
  double base = 10000.0;

  void validate() const;
  std::array<std::size_t, 3> axis_dims() const { return {frame_dim, height_dim, width_dim}; }
};

using Position3 = std::array<std::size_t, 3>;

/// Angular frequency of channel pair i within an axis group of width d_axis.
double rope_frequency(std::size_t pair, std::size_t d_axis, double base);

/// Rotates adjacent channel pairs (2i, 2i+1) of each axis group by pos * rope_frequency(i).
/// x is (tokens, head_dim) with one position per token.
Tensor rope1d(const Tensor& x, std::span<const std::size_t> positions, double base);
Tensor rope3d(const Tensor& x, std::span<const Position3> positions, const RopeSpec& spec);

/// RMS-normalizes each head vector of q and k (last axis) and scales by the
/// per-head gain. Heads are indexed by the second-to-last axis; a gain list
/// of length 1 applies to every head. Zero vectors map to zero.
std::pair<Tensor, Tensor> qk_norm(const Tensor& q, const Tensor& k, std::span<const double> gain_q,
                                  std::span<const double> gain_k);

// ---------------------------------------------------------------------------

struct LatentShape {
  std::size_t frames;
  std::size_t height;
  std::size_t width;

  friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

/// (ceil(T/8), ceil(H/16), ceil(W/16)).
LatentShape latent_shape(std::size_t t, std::size_t h, std::size_t w);

// ---------------------------------------------------------------------------

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Runs the kernel property checks (causality, bijections, identities,
/// isometry) on small seeded instances.
std::vector<SelftestResult> run_selftest(std::uint64_t seed);

}  // namespace flowforge::kernels
