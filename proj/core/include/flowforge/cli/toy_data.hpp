// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "flowforge/rng.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge::cli {

enum class Generator { two_gaussians, two_moons, ring };

std::string to_string(Generator g);
Generator generator_from_string(const std::string& name);

struct LabeledSamples {
  Tensor x;  // (N, 2)
  std::vector<int> y;
};

/// Two-dimensional synthetic data with one condition label per mode.
///
/// two_gaussians: modes at (-separation/2, 0) and (+separation/2, 0) with
/// isotropic std `spread`, labels 0 and 1. two_moons: the interleaved half
/// circles with Gaussian `noise`, labels 0 (upper) and 1 (lower). ring:
/// `modes` Gaussians of std `spread` evenly spaced on a circle of `radius`,
/// label = mode index.
struct ToyDataset {
  Generator generator = Generator::two_gaussians;
  double separation = 4.0;
  double spread = 0.5;
  double radius = 3.0;
  std::size_t modes = 8;
  double noise = 0.1;

  void validate() const;
  std::size_t num_conditions() const;
  /// Mode centre for a label (the moon's arc midpoint for two_moons).
  Tensor mode_center(int label) const;
  /// One draw for the given label.
  void sample_one(int label, Rng& rng, double* out) const;
  /// n draws with labels uniform over the conditions.
  LabeledSamples sample(std::size_t n, Rng& rng) const;
  /// n draws with the given labels.
  Tensor sample_labels(const std::vector<int>& labels, Rng& rng) const;
};

}  // namespace flowforge::cli
