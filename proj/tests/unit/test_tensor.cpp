// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "flowforge/error.hpp"
#include "flowforge/rng.hpp"
#include "flowforge/tensor.hpp"

using namespace flowforge;

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.at({1, 2}), 1.5);
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
}

TEST(Tensor, RowMajorOffsets) {
  Tensor t = Tensor::matrix(2, 3, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.offset({1, 0}), 3u);
  EXPECT_EQ(t.at({1, 2}), 5.0);
  EXPECT_THROW(t.at({2, 0}), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t = Tensor::vector({1, 2, 3, 4});
  Tensor r = t.reshaped({2, 2});
  EXPECT_EQ(r.at({1, 0}), 3.0);
  EXPECT_THROW(t.reshaped({3}), ShapeError);
}

TEST(Tensor, ArithmeticRequiresMatchingShapes) {
  Tensor a = Tensor::vector({1, 2});
  Tensor b = Tensor::vector({3, 5});
  EXPECT_EQ((b - a), Tensor::vector({2, 3}));
  EXPECT_EQ((a + b), Tensor::vector({4, 7}));
  EXPECT_EQ((2.0 * a), Tensor::vector({2, 4}));
  EXPECT_EQ(dot(a, b), 13.0);
  EXPECT_THROW(a + Tensor::vector({1, 2, 3}), ShapeError);
}

TEST(Tensor, PairwiseSumIsOrderFixed) {
  std::vector<double> v;
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) v.push_back(rng.normal());
  const double s = pairwise_sum(v);
  EXPECT_EQ(s, pairwise_sum(v));
  double naive = 0.0;
  for (double x : v) naive += x;
  EXPECT_NEAR(s, naive, 1e-10);
  EXPECT_EQ(pairwise_sum({}), 0.0);
}

TEST(Tensor, PairwiseMeanOfIdenticalCopiesIsExact) {
  for (std::size_t n : {1u, 2u, 4u, 8u, 16u}) {
    const std::vector<double> v(n, 0.1);
    EXPECT_EQ(pairwise_sum(v) / static_cast<double>(n), 0.1);
  }
}

TEST(Rng, StreamsAreReproducibleAndIndependent) {
  Rng a = Rng::stream(42, "init");
  Rng b = Rng::stream(42, "init");
  Rng c = Rng::stream(42, "data");
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
    seen.insert(x);
  }
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Rng, OutputIsAFunctionOfKeyAndCounter) {
  Rng a(5, 0);
  for (int i = 0; i < 10; ++i) a.next_u64();
  Rng b(5, 10);
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformAndNormalMoments) {
  Rng rng = Rng::stream(1, "moments");
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.015);
}

TEST(Rng, UniformIndexStaysInRange) {
  Rng rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}
