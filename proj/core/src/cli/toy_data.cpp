// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/cli/toy_data.hpp"

#include <cmath>
#include <numbers>

#include "flowforge/error.hpp"

namespace flowforge::cli {

std::string to_string(Generator g) {
  switch (g) {
    case Generator::two_gaussians: return "two_gaussians";
    case Generator::two_moons: return "two_moons";
    case Generator::ring: return "ring";
  }
  return "two_gaussians";
}

Generator generator_from_string(const std::string& name) {
  if (name == "two_gaussians") return Generator::two_gaussians;
  if (name == "two_moons") return Generator::two_moons;
  if (name == "ring") return Generator::ring;
  throw ConfigError("unknown data generator '" + name + "'");
}

void ToyDataset::validate() const {
  if (!(spread >= 0) || !(noise >= 0)) throw ConfigError("data spread and noise must be non-negative");
  if (!(separation >= 0) || !(radius > 0)) throw ConfigError("data separation must be >= 0 and radius > 0");
  if (generator == Generator::ring && modes < 2) throw ConfigError("ring needs at least 2 modes");
}

std::size_t ToyDataset::num_conditions() const { return generator == Generator::ring ? modes : 2; }

Tensor ToyDataset::mode_center(int label) const {
  if (label < 0 || static_cast<std::size_t>(label) >= num_conditions()) {
    throw ConfigError("label " + std::to_string(label) + " out of range");
  }
  switch (generator) {
    case Generator::two_gaussians: return Tensor::vector({label == 0 ? -separation / 2 : separation / 2, 0.0});
    case Generator::two_moons: return label == 0 ? Tensor::vector({0.0, 1.0}) : Tensor::vector({1.0, -0.5});
    case Generator::ring: {
      const double angle = 2.0 * std::numbers::pi * label / static_cast<double>(modes);
      return Tensor::vector({radius * std::cos(angle), radius * std::sin(angle)});
    }
  }
  return Tensor({2});
}

void ToyDataset::sample_one(int label, Rng& rng, double* out) const {
  if (generator == Generator::two_moons) {
    const double theta = std::numbers::pi * rng.uniform();
    if (label == 0) {
      out[0] = std::cos(theta);
      out[1] = std::sin(theta);
    } else {
      out[0] = 1.0 - std::cos(theta);
      out[1] = 0.5 - std::sin(theta);
    }
    out[0] += noise * rng.normal();
    out[1] += noise * rng.normal();
    return;
  }
  const Tensor c = mode_center(label);
  out[0] = c[0] + spread * rng.normal();
  out[1] = c[1] + spread * rng.normal();
}

LabeledSamples ToyDataset::sample(std::size_t n, Rng& rng) const {
  validate();
  std::vector<int> labels(n);
  for (int& y : labels) y = static_cast<int>(rng.uniform_index(num_conditions()));
  Tensor x = sample_labels(labels, rng);
  return {std::move(x), std::move(labels)};
}

Tensor ToyDataset::sample_labels(const std::vector<int>& labels, Rng& rng) const {
  validate();
  if (labels.empty()) throw ContractError("toy dataset: zero samples requested");
  Tensor x({labels.size(), 2});
  for (std::size_t i = 0; i < labels.size(); ++i) sample_one(labels[i], rng, &x[2 * i]);
  return x;
}

}  // namespace flowforge::cli
