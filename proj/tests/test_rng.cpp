#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "memedit/rng.hpp"

using namespace memedit;

TEST(SplitMix64, MatchesReferenceOutputForSeedZero) {
  SplitMix64 sm(0);
  EXPECT_EQ(sm.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(sm.next(), 0x6e789e6aa1b965f4ULL);
}

TEST(Xoshiro256, SameSeedSameStream) {
  Xoshiro256 a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next();
    EXPECT_EQ(va, b.next());
    differs |= va != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Xoshiro256, UniformAndBelowStayInRange) {
  Xoshiro256 rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(7), 7u);
  }
}

TEST(Xoshiro256, NormalHasUnitMoments) {
  Xoshiro256 rng(5);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Permutation, IsAPermutationAndSeedDependent) {
  Xoshiro256 a(1), b(2);
  auto p = permutation(100, a);
  auto q = permutation(100, b);
  EXPECT_NE(p, q);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
}

TEST(SampleWithoutReplacement, DistinctIndices) {
  Xoshiro256 rng(3);
  const auto s = sample_without_replacement(50, 20, rng);
  ASSERT_EQ(s.size(), 20u);
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 20u);
  for (auto i : s) EXPECT_LT(i, 50u);
}

TEST(DeriveSeed, TagsSeparateStreams) {
  EXPECT_NE(derive_seed(7, 1), derive_seed(7, 2));
  EXPECT_EQ(derive_seed(7, 1), derive_seed(7, 1));
}
