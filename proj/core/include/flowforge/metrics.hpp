// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>

#include "flowforge/tensor.hpp"

namespace flowforge::metrics {

/// Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| between the row sets of two
/// (N, D) tensors. Within-sample terms exclude the diagonal.
double energy_distance(const Tensor& x, const Tensor& y);

/// sup |F_n(u) - F(u)| for the empirical CDF of `samples` against `cdf`.
double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

/// Asymptotic one-sample Kolmogorov-Smirnov critical value at level 1% (1.628 / sqrt(n)).
double ks_critical_1pct(std::size_t n);

/// Column means of an (N, D) tensor.
Tensor column_mean(const Tensor& x);

}  // namespace flowforge::metrics
