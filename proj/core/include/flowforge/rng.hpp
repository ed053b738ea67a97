// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace flowforge {

/// Counter-based 64-bit generator.
///
/// Output `i` of a stream is a pure function of `(key, i)`, so draws are
/// reproducible across platforms and streams can be split by name without
/// perturbing one another: `Rng::stream(seed, "init")` and
/// `Rng::stream(seed, "data")` never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t key = 0, std::uint64_t counter = 0) noexcept : key_(key), counter_(counter) {}

  static Rng stream(std::uint64_t seed, std::string_view purpose) noexcept;

  /// Child stream derived from this stream's key and a purpose tag.
  Rng split(std::string_view purpose) const noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller; always consumes two words.
  double normal() noexcept;

  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

/// SplitMix64 finalizer; a bijective avalanche mix.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace flowforge
