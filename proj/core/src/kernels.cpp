// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/kernels.hpp"

#include <cmath>

#include "flowforge/error.hpp"

namespace flowforge::kernels {

VideoTensor::VideoTensor(Tensor t) : tensor_(std::move(t)) {
  if (tensor_.rank() != 5) throw ShapeError("video tensor must be rank 5 (B, C, T, H, W), got " + shape_to_string(tensor_.shape()));
}

VideoTensor::VideoTensor(std::size_t b, std::size_t c, std::size_t t, std::size_t h, std::size_t w, double fill)
    : tensor_(Shape{b, c, t, h, w}, fill) {}

void ConvKernel3D::validate() const {
  if (weight.rank() != 5) throw ShapeError("conv weight must be (C_out, C_in, k_t, k_h, k_w)");
  if (bias.shape() != Shape{out_channels()}) throw ShapeError("conv bias must have C_out entries");
  if (kh() % 2 == 0 || kw() % 2 == 0) throw ShapeError("spatial kernel sizes must be odd");
  if (stride_t == 0 || stride_s == 0) throw ShapeError("conv strides must be positive");
}

VideoTensor causal_conv3d(const VideoTensor& x, const ConvKernel3D& k) {
  k.validate();
  if (x.channels() != k.in_channels()) {
    throw ShapeError("causal_conv3d: input has " + std::to_string(x.channels()) + " channels, kernel expects " +
                     std::to_string(k.in_channels()));
  }
  const std::size_t kt = k.kt(), kh = k.kh(), kw = k.kw();
  const std::size_t st = k.stride_t, ss = k.stride_s;
  const std::size_t t_out = (x.frames() - 1) / st + 1;
  const std::size_t h_out = (x.height() - 1) / ss + 1;
  const std::size_t w_out = (x.width() - 1) / ss + 1;
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto T = static_cast<std::ptrdiff_t>(x.frames());
  const auto H = static_cast<std::ptrdiff_t>(x.height());
  const auto W = static_cast<std::ptrdiff_t>(x.width());

  VideoTensor out(x.batch(), k.out_channels(), t_out, h_out, w_out);
  const Tensor& w = k.weight;
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t o = 0; o < k.out_channels(); ++o) {
      for (std::size_t j = 0; j < t_out; ++j) {
        for (std::size_t yy = 0; yy < h_out; ++yy) {
          for (std::size_t xx = 0; xx < w_out; ++xx) {
            double acc = k.bias[o];
            for (std::size_t c = 0; c < x.channels(); ++c) {
              for (std::size_t dt = 0; dt < kt; ++dt) {
                const auto ti = static_cast<std::ptrdiff_t>(j * st + dt) - static_cast<std::ptrdiff_t>(kt - 1);
                if (ti < 0 || ti >= T) continue;
                for (std::size_t dh = 0; dh < kh; ++dh) {
                  const auto hi = static_cast<std::ptrdiff_t>(yy * ss + dh) - ph;
                  if (hi < 0 || hi >= H) continue;
                  for (std::size_t dw = 0; dw < kw; ++dw) {
                    const auto wi = static_cast<std::ptrdiff_t>(xx * ss + dw) - pw;
                    if (wi < 0 || wi >= W) continue;
                    const std::size_t widx = (((o * x.channels() + c) * kt + dt) * kh + dh) * kw + dw;
                    acc += w[widx] * x(b, c, static_cast<std::size_t>(ti), static_cast<std::size_t>(hi),
                                       static_cast<std::size_t>(wi));
                  }
                }
              }
            }
            out(b, o, j, yy, xx) = acc;
          }
        }
      }
    }
  }
  return out;
}

VideoTensor pixel_unshuffle3d(const VideoTensor& x, std::size_t s_t, std::size_t s_s) {
  if (s_t == 0 || s_s == 0) throw ShapeError("pixel_unshuffle3d: strides must be positive");
  if (x.frames() % s_t != 0 || x.height() % s_s != 0 || x.width() % s_s != 0) {
    throw ShapeError("pixel_unshuffle3d: " + shape_to_string(x.shape()) + " not divisible by strides (" +
                     std::to_string(s_t) + ", " + std::to_string(s_s) + ", " + std::to_string(s_s) + ")");
  }
  const std::size_t g = s_t * s_s * s_s;
  const std::size_t T = x.frames() / s_t, H = x.height() / s_s, W = x.width() / s_s;
  VideoTensor out(x.batch(), x.channels() * g, T, H, W);
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t dt = 0; dt < s_t; ++dt)
        for (std::size_t dh = 0; dh < s_s; ++dh)
          for (std::size_t dw = 0; dw < s_s; ++dw) {
            const std::size_t oc = c * g + (dt * s_s + dh) * s_s + dw;
            for (std::size_t t = 0; t < T; ++t)
              for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                  out(b, oc, t, h, w) = x(b, c, t * s_t + dt, h * s_s + dh, w * s_s + dw);
                }
          }
  return out;
}

VideoTensor pixel_shuffle3d(const VideoTensor& x, std::size_t s_t, std::size_t s_s) {
  if (s_t == 0 || s_s == 0) throw ShapeError("pixel_shuffle3d: strides must be positive");
  const std::size_t g = s_t * s_s * s_s;
  if (x.channels() % g != 0) {
    throw ShapeError("pixel_shuffle3d: " + std::to_string(x.channels()) + " channels not divisible by " +
                     std::to_string(g));
  }
  const std::size_t C = x.channels() / g;
  VideoTensor out(x.batch(), C, x.frames() * s_t, x.height() * s_s, x.width() * s_s);
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t dt = 0; dt < s_t; ++dt)
        for (std::size_t dh = 0; dh < s_s; ++dh)
          for (std::size_t dw = 0; dw < s_s; ++dw) {
            const std::size_t ic = c * g + (dt * s_s + dh) * s_s + dw;
            for (std::size_t t = 0; t < x.frames(); ++t)
              for (std::size_t h = 0; h < x.height(); ++h)
                for (std::size_t w = 0; w < x.width(); ++w) {
                  out(b, c, t * s_t + dt, h * s_s + dh, w * s_s + dw) = x(b, ic, t, h, w);
                }
          }
  return out;
}

VideoTensor grouped_channel_average(const VideoTensor& u, std::size_t c_z) {
  if (c_z == 0 || u.channels() % c_z != 0) {
    throw ShapeError("grouped_channel_average: " + std::to_string(u.channels()) + " channels not divisible into groups of " +
                     std::to_string(c_z));
  }
  const std::size_t groups = u.channels() / c_z;
  const std::size_t plane = u.frames() * u.height() * u.width();
  VideoTensor out(u.batch(), c_z, u.frames(), u.height(), u.width());
  for (std::size_t b = 0; b < u.batch(); ++b)
    for (std::size_t c = 0; c < c_z; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        // Running mean: identical copies average back to themselves exactly for any group count.
        double mean = 0.0;
        for (std::size_t k = 0; k < groups; ++k) {
          mean += (u.tensor()[(b * u.channels() + k * c_z + c) * plane + p] - mean) / static_cast<double>(k + 1);
        }
        out.tensor()[(b * c_z + c) * plane + p] = mean;
      }
  return out;
}

VideoTensor grouped_channel_repeat(const VideoTensor& z, std::size_t groups) {
  if (groups == 0) throw ShapeError("grouped_channel_repeat: group count must be positive");
  const std::size_t C = z.channels();
  const std::size_t plane = z.frames() * z.height() * z.width();
  VideoTensor out(z.batch(), C * groups, z.frames(), z.height(), z.width());
  for (std::size_t b = 0; b < z.batch(); ++b)
    for (std::size_t k = 0; k < groups; ++k)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < plane; ++p) {
          out.tensor()[(b * C * groups + k * C + c) * plane + p] = z.tensor()[(b * C + c) * plane + p];
        }
  return out;
}

VideoTensor dual_path_encode(const VideoTensor& x, const ConvKernel3D& conv, std::size_t c_z, std::size_t s_t,
                             std::size_t s_s) {
  conv.validate();
  if (conv.stride_t != 1 || conv.stride_s != 1) {
    throw ShapeError("dual_path_encode: downsampling comes from the unshuffle, conv strides must be 1");
  }
  const std::size_t g = s_t * s_s * s_s;
  if (conv.out_channels() * g != c_z) {
    throw ShapeError("dual_path_encode: conv path yields " + std::to_string(conv.out_channels() * g) +
                     " channels after unshuffle, latent expects " + std::to_string(c_z));
  }
  const VideoTensor h_conv = pixel_unshuffle3d(causal_conv3d(x, conv), s_t, s_s);
  const VideoTensor h_avg = grouped_channel_average(pixel_unshuffle3d(x, s_t, s_s), c_z);
  if (h_conv.shape() != h_avg.shape()) throw ShapeError("dual_path_encode: path shapes differ after composition");
  return VideoTensor(h_conv.tensor() + h_avg.tensor());
}

void RopeSpec::validate() const {
  if (head_dim == 0 || head_dim % 2 != 0) throw ShapeError("rope head_dim must be even and positive");
  for (std::size_t d : axis_dims()) {
    if (d % 2 != 0) throw ShapeError("rope axis widths must be even");
  }
  if (frame_dim + height_dim + width_dim != head_dim) throw ShapeError("rope axis widths must sum to head_dim");
  if (!(base > 1.0)) throw ShapeError("rope base must exceed 1");
}

double rope_frequency(std::size_t pair, std::size_t d_axis, double base) {
  return std::pow(base, -2.0 * static_cast<double>(pair) / static_cast<double>(d_axis));
}

namespace {

void rotate_group(Tensor& out, std::size_t row, std::size_t width, std::size_t offset, std::size_t d_axis,
                  double pos, double base) {
  for (std::size_t i = 0; i < d_axis / 2; ++i) {
    const double angle = pos * rope_frequency(i, d_axis, base);
    const double c = std::cos(angle), s = std::sin(angle);
    double& a = out[row * width + offset + 2 * i];
    double& b = out[row * width + offset + 2 * i + 1];
    const double x0 = a, x1 = b;
    a = x0 * c - x1 * s;
    b = x0 * s + x1 * c;
  }
}

}  // namespace

Tensor rope1d(const Tensor& x, std::span<const std::size_t> positions, double base) {
  if (x.rank() != 2 || x.dim(1) % 2 != 0) throw ShapeError("rope1d: x must be (tokens, even dim)");
  if (positions.size() != x.dim(0)) throw ShapeError("rope1d: need one position per token");
  Tensor out = x;
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    rotate_group(out, r, x.dim(1), 0, x.dim(1), static_cast<double>(positions[r]), base);
  }
  return out;
}

Tensor rope3d(const Tensor& x, std::span<const Position3> positions, const RopeSpec& spec) {
  spec.validate();
  if (x.rank() != 2 || x.dim(1) != spec.head_dim) {
    throw ShapeError("rope3d: x must be (tokens, " + std::to_string(spec.head_dim) + ")");
  }
  if (positions.size() != x.dim(0)) throw ShapeError("rope3d: need one position per token");
  Tensor out = x;
  const auto dims = spec.axis_dims();
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    std::size_t offset = 0;
    for (std::size_t axis = 0; axis < 3; ++axis) {
      if (dims[axis] > 0) {
        rotate_group(out, r, spec.head_dim, offset, dims[axis], static_cast<double>(positions[r][axis]), spec.base);
      }
      offset += dims[axis];
    }
  }
  return out;
}

namespace {

Tensor rms_normalize(const Tensor& x, std::span<const double> gains, const char* which) {
  if (x.rank() == 0) throw ShapeError("qk_norm: empty input");
  const std::size_t d = x.shape().back();
  const std::size_t heads = x.rank() >= 2 ? x.shape()[x.rank() - 2] : 1;
  if (gains.size() != 1 && gains.size() != heads) {
    throw ShapeError(std::string("qk_norm: ") + which + " gains must have 1 or " + std::to_string(heads) + " entries");
  }
  Tensor out = x;
  const std::size_t vectors = x.size() / d;
  for (std::size_t v = 0; v < vectors; ++v) {
    const std::size_t head = v % heads;
    const double g = gains.size() == 1 ? gains[0] : gains[head];
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += x[v * d + j] * x[v * d + j];
    const double rms = std::sqrt(ss / static_cast<double>(d));
    for (std::size_t j = 0; j < d; ++j) out[v * d + j] = rms > 0.0 ? g * x[v * d + j] / rms : 0.0;
  }
  return out;
}

}  // namespace

std::pair<Tensor, Tensor> qk_norm(const Tensor& q, const Tensor& k, std::span<const double> gain_q,
                                  std::span<const double> gain_k) {
  if (q.empty() || k.empty()) throw ShapeError("qk_norm: empty input");
  if (q.shape().back() != k.shape().back()) throw ShapeError("qk_norm: q and k head dims differ");
  return {rms_normalize(q, gain_q, "q"), rms_normalize(k, gain_k, "k")};
}

LatentShape latent_shape(std::size_t t, std::size_t h, std::size_t w) {
  if (t == 0 || h == 0 || w == 0) throw DomainError("latent_shape: dimensions must be positive");
  return {(t + 7) / 8, (h + 15) / 16, (w + 15) / 16};
}

}  // namespace flowforge::kernels
