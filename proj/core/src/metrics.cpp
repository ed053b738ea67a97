// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowforge/error.hpp"

namespace flowforge::metrics {

namespace {

double row_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = a[i * d + k] - b[j * d + k];
    s += diff * diff;
  }
  return std::sqrt(s);
}

double mean_distance(const Tensor& a, const Tensor& b, bool same) {
  const std::size_t na = a.dim(0), nb = b.dim(0), d = a.dim(1);
  std::vector<double> rows(na);
  for (std::size_t i = 0; i < na; ++i) {
    double s = 0.0;
    for (std::size_t j = same ? i + 1 : 0; j < nb; ++j) s += row_distance(a, i, b, j, d);
    rows[i] = s;
  }
  const double pairs = same ? static_cast<double>(na) * static_cast<double>(na - 1) / 2.0
                            : static_cast<double>(na) * static_cast<double>(nb);
  return pairwise_sum(rows) / pairs;
}

}  // namespace

double energy_distance(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1)) {
    throw ShapeError("energy_distance: expected (N, D) tensors with equal D, got " + shape_to_string(x.shape()) +
                     " and " + shape_to_string(y.shape()));
  }
  if (x.dim(0) < 2 || y.dim(0) < 2) throw ContractError("energy_distance: need at least 2 rows per sample");
  return 2.0 * mean_distance(x, y, false) - mean_distance(x, x, true) - mean_distance(y, y, true);
}

double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ContractError("ks_statistic: no samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

Tensor column_mean(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("column_mean: expected an (N, D) tensor");
  const std::size_t n = x.dim(0), d = x.dim(1);
  Tensor out({d});
  std::vector<double> col(n);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < n; ++i) col[i] = x[i * d + k];
    out[k] = pairwise_sum(col) / static_cast<double>(n);
  }
  return out;
}

}  // namespace flowforge::metrics
