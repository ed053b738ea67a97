// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "flowforge/error.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge::dynamics {

void LossTrajectory::validate() const {
  if (losses.size() < 2) throw ContractError("trajectory '" + unit_id + "' needs at least 2 checkpoints");
  for (double l : losses) {
    if (!std::isfinite(l) || l < 0) throw ContractError("trajectory '" + unit_id + "' has a negative or non-finite loss");
  }
}

std::string to_string(Category c) {
  switch (c) {
    case Category::h_to_h: return "H->H";
    case Category::l_to_h: return "L->H";
    case Category::h_to_l: return "H->L";
    case Category::l_to_l: return "L->L";
  }
  return "H->H";
}

Category category_from_string(const std::string& name) {
  for (Category c : kCategories) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown category '" + name + "'");
}

void Thresholds::validate() const {
  if (!std::isfinite(lower) || !std::isfinite(upper) || lower > upper) {
    throw ConfigError("dynamics thresholds must be finite with lower <= upper");
  }
}

TrendFit fit_loss_trend(std::span<const double> losses) {
  if (losses.size() < 2) throw ContractError("fit_loss_trend: need at least 2 points");
  const std::size_t count = losses.size();
  const double n = static_cast<double>(count - 1);
  const double x_mean = n / 2.0;
  const double l_mean = pairwise_sum(losses) / static_cast<double>(count);
  std::vector<double> sxy(count), sxx(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double dx = static_cast<double>(i) - x_mean;
    sxy[i] = dx * (losses[i] - l_mean);
    sxx[i] = dx * dx;
  }
  TrendFit fit;
  fit.slope = pairwise_sum(sxy) / pairwise_sum(sxx);
  fit.intercept = l_mean - fit.slope * x_mean;
  fit.delta_l = fit.slope * n;
  std::vector<double> sq(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double r = losses[i] - (fit.slope * static_cast<double>(i) + fit.intercept);
    sq[i] = r * r;
  }
  fit.sse = pairwise_sum(sq);
  fit.residual_variance = fit.sse / static_cast<double>(count);
  return fit;
}

TrendFit fit_loss_trend(const LossTrajectory& traj) {
  traj.validate();
  return fit_loss_trend(traj.losses);
}

Category classify(double delta_l, double l_n, double l_mean, const Thresholds& th) {
  if (delta_l < th.lower) return Category::h_to_l;
  if (delta_l > th.upper) return Category::l_to_h;
  return l_n <= l_mean ? Category::l_to_l : Category::h_to_h;
}

std::size_t CorpusClassification::count(Category c) const {
  return frequencies[static_cast<std::size_t>(std::find(kCategories.begin(), kCategories.end(), c) - kCategories.begin())];
}

CorpusClassification classify_corpus(std::span<const LossTrajectory> trajectories, const Thresholds& th) {
  th.validate();
  if (trajectories.empty()) throw ContractError("classify_corpus: empty corpus");
  const std::size_t len = trajectories.front().losses.size();
  std::vector<double> finals;
  finals.reserve(trajectories.size());
  for (const LossTrajectory& t : trajectories) {
    t.validate();
    if (t.losses.size() != len) throw ContractError("classify_corpus: trajectory '" + t.unit_id + "' has a different length");
    finals.push_back(t.losses.back());
  }
  CorpusClassification out;
  out.l_mean = pairwise_sum(finals) / static_cast<double>(finals.size());
  for (const LossTrajectory& t : trajectories) {
    const TrendFit fit = fit_loss_trend(t.losses);
    const Category c = classify(fit.delta_l, t.losses.back(), out.l_mean, th);
    out.fits.push_back(fit);
    out.categories.push_back(c);
    ++out.frequencies[static_cast<std::size_t>(std::find(kCategories.begin(), kCategories.end(), c) - kCategories.begin())];
  }
  return out;
}

double fluctuation_score(std::span<const double> losses, const TrendFit& fit) {
  if (losses.empty()) throw ContractError("fluctuation_score: empty trajectory");
  std::vector<double> sq(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const double r = losses[i] - (fit.slope * static_cast<double>(i) + fit.intercept);
    sq[i] = r * r;
  }
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(losses.size()));
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw ContractError("quantile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile: q must lie in [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<bool> fluctuation_flags(std::span<const double> scores, double q) {
  const double cut = quantile(scores, q);
  std::vector<bool> flags(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) flags[i] = scores[i] > cut;
  return flags;
}

std::vector<int> selection_tiers(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("selection_tiers: no scores");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = scores.size();
  std::vector<int> tiers(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto less = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), scores[i]) - sorted.begin());
    tiers[i] = 5 - static_cast<int>(5 * less / n);
  }
  return tiers;
}

std::vector<double> excess_loss_scores(std::span<const double> current, std::span<const double> reference) {
  if (current.size() != reference.size()) {
    throw ShapeError("excess_loss_scores: " + std::to_string(current.size()) + " current losses vs " +
                     std::to_string(reference.size()) + " reference losses");
  }
  std::vector<double> out(current.size());
  for (std::size_t i = 0; i < current.size(); ++i) out[i] = current[i] - reference[i];
  return out;
}

}  // namespace flowforge::dynamics
