// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flowforge::dynamics {

/// Losses of one unit (token or sample) at checkpoints 0..n.
struct LossTrajectory {
  std::string unit_id;
  std::vector<double> losses;

  std::size_t n() const { return losses.empty() ? 0 : losses.size() - 1; }
  void validate() const;
};

/// Least-squares line l_i ~ a*i + b.
struct TrendFit {
  double slope = 0.0;
  double intercept = 0.0;
  double delta_l = 0.0;  // a * n
  double sse = 0.0;
  double residual_variance = 0.0;  // sse / (n + 1)
};

enum class Category { h_to_h, l_to_h, h_to_l, l_to_l };

inline constexpr std::array<Category, 4> kCategories = {Category::h_to_h, Category::l_to_h, Category::h_to_l,
                                                        Category::l_to_l};

/// "H->H", "L->H", "H->L", "L->L".
std::string to_string(Category c);
Category category_from_string(const std::string& name);

struct Thresholds {
  double lower = -0.2;
  double upper = 0.2;

  void validate() const;
};

TrendFit fit_loss_trend(std::span<const double> losses);
TrendFit fit_loss_trend(const LossTrajectory& traj);

/// dL < lower -> H->L; dL > upper -> L->H; otherwise L->L when l_n <= l_mean, else H->H.
Category classify(double delta_l, double l_n, double l_mean, const Thresholds& th = {});

struct CorpusClassification {
  double l_mean = 0.0;
  std::vector<TrendFit> fits;
  std::vector<Category> categories;
  std::array<std::size_t, 4> frequencies{};  // indexed like kCategories

  std::size_t count(Category c) const;
};

/// L_mean is the mean final loss over the corpus; every trajectory must have the same length.
CorpusClassification classify_corpus(std::span<const LossTrajectory> trajectories, const Thresholds& th = {});

/// Root-mean-square residual of the fit.
double fluctuation_score(std::span<const double> losses, const TrendFit& fit);

/// Linear-interpolated empirical quantile, q in [0, 1].
double quantile(std::span<const double> values, double q);

/// Units whose score is strictly above the q-quantile of the corpus.
std::vector<bool> fluctuation_flags(std::span<const double> scores, double q = 0.95);

/// Tier 1 holds the highest scores, tier 5 the lowest. A unit's tier is
/// 5 - floor(5 * less / N), where `less` counts scores strictly below it,
/// so equal scores share a tier.
std::vector<int> selection_tiers(std::span<const double> scores);

/// current - reference, elementwise.
std::vector<double> excess_loss_scores(std::span<const double> current, std::span<const double> reference);

}  // namespace flowforge::dynamics
