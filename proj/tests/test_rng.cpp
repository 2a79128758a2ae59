#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "accpred/rng.hpp"

using accpred::SplitMix64;

// Vectors published in docs/rng.md.
TEST(Rng, RawOutputMatchesPublishedVectors) {
  SplitMix64 a(0);
  EXPECT_EQ(a.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(a.next(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(a.next(), 0x06c45d188009454fULL);
  SplitMix64 b(7);
  EXPECT_EQ(b.next(), 0x63cbe1e459320dd7ULL);
  EXPECT_EQ(b.next(), 0x044c3cd7f43c661cULL);
  EXPECT_EQ(b.next(), 0xe6984080bab12a02ULL);
}

TEST(Rng, DerivedDrawsMatchPublishedVectors) {
  SplitMix64 u(7);
  EXPECT_EQ(u.uniform(), 0.3898297483912715);
  EXPECT_EQ(u.uniform(), 0.01678829452815611);
  EXPECT_EQ(u.uniform(), 0.9007606806068834);

  SplitMix64 k(7);
  const std::vector<std::uint64_t> below{7, 4, 6, 3, 4};
  for (auto want : below) EXPECT_EQ(k.below(10), want);

  SplitMix64 n(7);
  EXPECT_NEAR(n.normal(), 0.9884743323187353, 1e-15);
  EXPECT_NEAR(n.normal(), -1.8642558067312274, 1e-15);

  EXPECT_EQ(accpred::derive_seed(7, 0), 0x0349e02b958f63afULL);
  EXPECT_EQ(accpred::derive_seed(7, 1), 0xb3f2e391ee2ab8a6ULL);
}

TEST(Rng, CounterBasedState) {
  SplitMix64 r(123);
  for (int i = 0; i < 5; ++i) r.next();
  EXPECT_EQ(r.state(), 123 + 5 * SplitMix64::kGamma);
}

TEST(Rng, UniformStaysInHalfOpenUnitInterval) {
  SplitMix64 r(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowCoversRangeEvenly) {
  SplitMix64 r(99);
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[r.below(6)];
  for (int c : counts) EXPECT_NEAR(c, n / 6, 5 * std::sqrt(n / 6.0));
  EXPECT_EQ(r.below(1), 0u);
}

TEST(Rng, NormalMoments) {
  SplitMix64 r(5);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(accpred::derive_seed(1, 0), accpred::derive_seed(1, 1));
  EXPECT_NE(accpred::derive_seed(1, 0), accpred::derive_seed(2, 0));
  SplitMix64 a(3);
  SplitMix64 child = a.split();
  SplitMix64 b(3);
  EXPECT_EQ(child.state(), b.next());
}
