// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "flowforge/dynamics.hpp"
#include "flowforge/error.hpp"

namespace flowforge::dynamics {
namespace {

// Normal equations with raw sums, independent of the centered implementation.
struct Line {
  double a, b;
};

Line normal_equations(const std::vector<double>& l) {
  const double m = static_cast<double>(l.size());
  double sx = 0, sxx = 0, sy = 0, sxy = 0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double x = static_cast<double>(i);
    sx += x;
    sxx += x * x;
    sy += l[i];
    sxy += x * l[i];
  }
  const double a = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return {a, (sy - a * sx) / m};
}

double sse(const std::vector<double>& l, double a, double b) {
  double s = 0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double r = l[i] - (a * static_cast<double>(i) + b);
    s += r * r;
  }
  return s;
}

std::vector<double> random_losses(std::mt19937_64& rng, std::size_t len) {
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::vector<double> l(len);
  for (double& v : l) v = u(rng);
  return l;
}

TEST(Fit, Constant) {
  const TrendFit f = fit_loss_trend(std::vector<double>{1, 1, 1});
  EXPECT_DOUBLE_EQ(f.slope, 0.0);
  EXPECT_DOUBLE_EQ(f.intercept, 1.0);
  EXPECT_DOUBLE_EQ(f.delta_l, 0.0);
}

TEST(Fit, ExactLine) {
  const TrendFit f = fit_loss_trend(std::vector<double>{3, 2, 1});
  EXPECT_DOUBLE_EQ(f.slope, -1.0);
  EXPECT_DOUBLE_EQ(f.intercept, 3.0);
  EXPECT_DOUBLE_EQ(f.delta_l, -2.0);
  EXPECT_NEAR(f.sse, 0.0, 1e-24);
}

TEST(Fit, HandExample) {
  const std::vector<double> l{2.0, 1.5, 1.6, 1.0};
  const Line ref = normal_equations(l);
  EXPECT_NEAR(ref.a, (4 * 7.7 - 6 * 6.1) / (4 * 14 - 36), 1e-12);
  const TrendFit f = fit_loss_trend(l);
  EXPECT_NEAR(f.slope, -0.29, 1e-9);
  EXPECT_NEAR(f.intercept, 1.96, 1e-9);
  EXPECT_NEAR(f.delta_l, -0.87, 1e-9);
  EXPECT_NEAR(f.slope, ref.a, 1e-12);
  EXPECT_NEAR(f.intercept, ref.b, 1e-12);
}

TEST(Fit, TooShortIsContractError) {
  EXPECT_THROW(fit_loss_trend(std::vector<double>{1.0}), ContractError);
  EXPECT_THROW(fit_loss_trend(std::vector<double>{}), ContractError);
  EXPECT_THROW(fit_loss_trend(LossTrajectory{"u", {1.0}}), ContractError);
}

TEST(Fit, TrajectoryValidation) {
  EXPECT_THROW(fit_loss_trend(LossTrajectory{"neg", {1.0, -0.1}}), ContractError);
  EXPECT_THROW(fit_loss_trend(LossTrajectory{"nan", {1.0, std::nan("")}}), ContractError);
  EXPECT_NO_THROW(fit_loss_trend(LossTrajectory{"ok", {0.0, 0.0}}));
}

TEST(Fit, MatchesNormalEquationsOnRandomTrajectories) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto l = random_losses(rng, 2 + trial % 30);
    const Line ref = normal_equations(l);
    const TrendFit f = fit_loss_trend(l);
    EXPECT_NEAR(f.slope, ref.a, 1e-10);
    EXPECT_NEAR(f.intercept, ref.b, 1e-10);
    EXPECT_NEAR(f.delta_l, ref.a * static_cast<double>(l.size() - 1), 1e-9);
    EXPECT_NEAR(f.sse, sse(l, ref.a, ref.b), 1e-9);
    EXPECT_NEAR(f.residual_variance, f.sse / static_cast<double>(l.size()), 1e-15);
  }
}

TEST(Fit, LeastSquaresOptimalOnGrid) {
  std::mt19937_64 rng(12);
  const double eps = 1e-3;
  for (int trial = 0; trial < 300; ++trial) {
    const auto l = random_losses(rng, 2 + trial % 20);
    const TrendFit f = fit_loss_trend(l);
    const double best = sse(l, f.slope, f.intercept);
    for (int da = -1; da <= 1; ++da) {
      for (int db = -1; db <= 1; ++db) {
        if (da == 0 && db == 0) continue;
        EXPECT_LE(best, sse(l, f.slope + da * eps, f.intercept + db * eps)) << "trial " << trial;
      }
    }
  }
}

TEST(Fit, AffineShiftMovesInterceptOnly) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> shift(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto l = random_losses(rng, 2 + trial % 15);
    const TrendFit f0 = fit_loss_trend(l);
    const double c = shift(rng);
    for (double& v : l) v += c;
    const TrendFit f1 = fit_loss_trend(l);
    EXPECT_NEAR(f1.slope, f0.slope, 1e-12);
    EXPECT_NEAR(f1.delta_l, f0.delta_l, 1e-12);
    EXPECT_NEAR(f1.intercept, f0.intercept + c, 1e-12);
  }
}

TEST(Classify, Examples) {
  EXPECT_EQ(classify(-0.5, 1.0, 1.0), Category::h_to_l);
  EXPECT_EQ(classify(0.5, 1.0, 1.0), Category::l_to_h);
  EXPECT_EQ(classify(0.0, 0.8, 1.0), Category::l_to_l);
  EXPECT_EQ(classify(0.0, 1.2, 1.0), Category::h_to_h);
}

TEST(Classify, BoundariesAreInclusiveInMiddleBranch) {
  EXPECT_EQ(classify(0.2, 1.5, 1.0), Category::h_to_h);
  EXPECT_EQ(classify(-0.2, 1.5, 1.0), Category::h_to_h);
  EXPECT_EQ(classify(0.2, 0.5, 1.0), Category::l_to_l);
  EXPECT_EQ(classify(-0.2, 0.5, 1.0), Category::l_to_l);
  EXPECT_EQ(classify(0.0, 1.0, 1.0), Category::l_to_l);
  EXPECT_EQ(classify(std::nextafter(0.2, 1.0), 0.5, 1.0), Category::l_to_h);
  EXPECT_EQ(classify(std::nextafter(-0.2, -1.0), 1.5, 1.0), Category::h_to_l);
}

TEST(Classify, CustomThresholds) {
  const Thresholds th{-1.0, 0.5};
  EXPECT_EQ(classify(-0.9, 2.0, 1.0, th), Category::h_to_h);
  EXPECT_EQ(classify(0.6, 2.0, 1.0, th), Category::l_to_h);
  EXPECT_THROW((Thresholds{0.3, -0.3}.validate()), ConfigError);
}

TEST(Classify, ExhaustiveAndExclusiveSweep) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> d(-1.0, 1.0), l(0.0, 2.0);
  std::uniform_int_distribution<int> pick(0, 5);
  const double specials[] = {-0.2, 0.2, 0.0, std::nextafter(0.2, 1.0), std::nextafter(-0.2, -1.0)};
  for (int i = 0; i < 100000; ++i) {
    const int p = pick(rng);
    const double dl = p < 5 ? specials[p] : d(rng);
    const double ln = l(rng);
    const double mean = (i % 7 == 0) ? ln : l(rng);
    const Category c = classify(dl, ln, mean);
    int matches = 0;
    matches += (dl < -0.2) && c == Category::h_to_l;
    matches += (dl > 0.2) && c == Category::l_to_h;
    matches += (dl >= -0.2 && dl <= 0.2 && ln <= mean) && c == Category::l_to_l;
    matches += (dl >= -0.2 && dl <= 0.2 && ln > mean) && c == Category::h_to_h;
    ASSERT_EQ(matches, 1) << "dl=" << dl << " ln=" << ln << " mean=" << mean;
    ASSERT_EQ(classify(dl, ln, mean), c);
  }
}

TEST(Category, StringRoundTrip) {
  for (Category c : kCategories) EXPECT_EQ(category_from_string(to_string(c)), c);
  EXPECT_EQ(to_string(Category::l_to_h), "L->H");
  EXPECT_THROW(category_from_string("X->Y"), ConfigError);
}

TEST(Corpus, SingleConstantTrajectoryIsLowToLow) {
  const std::vector<LossTrajectory> corpus{{"u", {1.3, 1.3, 1.3}}};
  const auto r = classify_corpus(corpus);
  EXPECT_DOUBLE_EQ(r.l_mean, 1.3);
  EXPECT_EQ(r.categories.at(0), Category::l_to_l);
}

TEST(Corpus, PlantedLinesRecovered) {
  // One line per category, slopes and final levels at least 0.3 from every threshold.
  const std::size_t n = 10;
  auto line = [&](double start, double end) {
    std::vector<double> l(n + 1);
    for (std::size_t i = 0; i <= n; ++i) l[i] = start + (end - start) * static_cast<double>(i) / static_cast<double>(n);
    return l;
  };
  std::vector<LossTrajectory> corpus{{"hh", line(3.0, 3.0)},
                                     {"lh", line(1.0, 2.0)},
                                     {"hl", line(3.0, 1.5)},
                                     {"ll", line(0.5, 0.5)}};
  const auto r = classify_corpus(corpus);
  EXPECT_DOUBLE_EQ(r.l_mean, (3.0 + 2.0 + 1.5 + 0.5) / 4.0);
  EXPECT_EQ(r.categories[0], Category::h_to_h);
  EXPECT_EQ(r.categories[1], Category::l_to_h);
  EXPECT_EQ(r.categories[2], Category::h_to_l);
  EXPECT_EQ(r.categories[3], Category::l_to_l);
  for (Category c : kCategories) EXPECT_EQ(r.count(c), 1u);
}

TEST(Corpus, NoisyPlantedCorpusRecoveredExactly) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  const std::size_t n = 20;
  std::vector<LossTrajectory> corpus;
  std::vector<Category> planted;
  // Final means: H->H at 4, L->L at 0.5, movers balanced around the mean.
  const struct {
    Category c;
    double start, end;
  } shapes[] = {{Category::h_to_h, 4.0, 4.0}, {Category::l_to_l, 0.5, 0.5}, {Category::l_to_h, 1.0, 2.5},
                {Category::h_to_l, 3.5, 1.5}};
  for (int u = 0; u < 200; ++u) {
    const auto& s = shapes[u % 4];
    std::vector<double> l(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      l[i] = s.start + (s.end - s.start) * static_cast<double>(i) / static_cast<double>(n) + noise(rng);
    }
    corpus.push_back({"u" + std::to_string(u), l});
    planted.push_back(s.c);
  }
  const auto r = classify_corpus(corpus);
  EXPECT_EQ(r.categories, planted);
  for (Category c : kCategories) EXPECT_EQ(r.count(c), 50u);
}

TEST(Corpus, FrequenciesSumToCorpusSize) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LossTrajectory> corpus;
    const std::size_t len = 2 + trial % 9;
    for (int u = 0; u < 1 + trial; ++u) corpus.push_back({"u", random_losses(rng, len)});
    const auto r = classify_corpus(corpus);
    std::size_t total = 0;
    for (std::size_t f : r.frequencies) total += f;
    EXPECT_EQ(total, corpus.size());
    EXPECT_EQ(r.categories.size(), corpus.size());
  }
}

TEST(Corpus, RaggedIsContractError) {
  const std::vector<LossTrajectory> corpus{{"a", {1, 2, 3}}, {"b", {1, 2}}};
  EXPECT_THROW(classify_corpus(corpus), ContractError);
  EXPECT_THROW(classify_corpus(std::vector<LossTrajectory>{}), ContractError);
}

TEST(Fluctuation, ExactLineIsZero) {
  const std::vector<double> l{3, 2, 1};
  EXPECT_NEAR(fluctuation_score(l, fit_loss_trend(l)), 0.0, 1e-15);
}

TEST(Fluctuation, HandRms) {
  const std::vector<double> l{1, 2, 1, 2};
  const Line ref = normal_equations(l);
  EXPECT_NEAR(ref.a, 0.2, 1e-15);
  EXPECT_NEAR(ref.b, 1.2, 1e-15);
  const double rms = std::sqrt(sse(l, ref.a, ref.b) / 4.0);
  EXPECT_NEAR(rms, std::sqrt(0.2), 1e-12);
  EXPECT_NEAR(fluctuation_score(l, fit_loss_trend(l)), rms, 1e-12);
}

TEST(Fluctuation, MonotoneInResidualMagnitude) {
  const std::vector<double> big{1, 2, 1, 2}, small{1, 1.1, 1, 1.1};
  EXPECT_GT(fluctuation_score(big, fit_loss_trend(big)), fluctuation_score(small, fit_loss_trend(small)));
}

TEST(Fluctuation, ScaleCovariant) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    auto l = random_losses(rng, 3 + trial % 10);
    const double s0 = fluctuation_score(l, fit_loss_trend(l));
    const double c = 0.5 + trial * 0.05;
    for (double& v : l) v *= c;
    EXPECT_NEAR(fluctuation_score(l, fit_loss_trend(l)), c * s0, 1e-10 * (1 + c * s0));
  }
}

TEST(Quantile, LinearInterpolation) {
  const std::vector<double> v{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0 / 3.0), 2.0);
  EXPECT_THROW(quantile(v, 1.5), DomainError);
  EXPECT_THROW(quantile(std::vector<double>{}, 0.5), ContractError);
}

TEST(Quantile, FlagsAboveNinetyFifth) {
  std::vector<double> scores(100);
  std::iota(scores.begin(), scores.end(), 1.0);
  const auto flags = fluctuation_flags(scores);
  // Cut is 1 + 0.95 * 99 = 95.05.
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(flags[i], scores[i] > 95.05) << i;
  EXPECT_EQ(std::count(flags.begin(), flags.end(), true), 5);
}

TEST(Tiers, FiveDistinctOnePerTier) {
  const std::vector<double> s{0.3, 0.9, 0.1, 0.7, 0.5};
  EXPECT_EQ(selection_tiers(s), (std::vector<int>{4, 1, 5, 2, 3}));
}

TEST(Tiers, AllEqualAreTierFive) {
  const std::vector<double> s(17, 2.5);
  for (int t : selection_tiers(s)) EXPECT_EQ(t, 5);
}

TEST(Tiers, OneToHundred) {
  std::vector<double> s(100);
  std::iota(s.begin(), s.end(), 1.0);
  const auto tiers = selection_tiers(s);
  for (std::size_t i = 0; i < 100; ++i) {
    const int expected = 5 - static_cast<int>(i / 20);
    EXPECT_EQ(tiers[i], expected) << "score " << s[i];
  }
}

TEST(Tiers, PermutationEquivariant) {
  std::mt19937_64 rng(18);
  std::uniform_int_distribution<int> coarse(0, 9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(5 + trial);
    for (double& v : s) v = coarse(rng);
    std::vector<std::size_t> perm(s.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> shuffled(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) shuffled[i] = s[perm[i]];
    const auto t = selection_tiers(s), ts = selection_tiers(shuffled);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(ts[i], t[perm[i]]);
  }
}

TEST(Tiers, HigherScoreNeverWorseTier) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> s(257);
  for (double& v : s) v = u(rng);
  const auto t = selection_tiers(s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[i] > s[j]) EXPECT_LE(t[i], t[j]);
    }
  }
  EXPECT_THROW(selection_tiers(std::vector<double>{}), ContractError);
}

TEST(ExcessLoss, Examples) {
  const std::vector<double> a{2, 1}, b{1, 1};
  EXPECT_EQ(excess_loss_scores(a, b), (std::vector<double>{1, 0}));
  EXPECT_EQ(excess_loss_scores(b, a), (std::vector<double>{-1, 0}));
  EXPECT_EQ(excess_loss_scores(a, a), (std::vector<double>{0, 0}));
  EXPECT_THROW(excess_loss_scores(a, std::vector<double>{1}), ShapeError);
}

}  // namespace
}  // namespace flowforge::dynamics
