#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "diflow/errors.hpp"
#include "diflow/rng.hpp"

using diflow::RngStream;

TEST(Rng, SameSeedSameSequence) {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentSeedsDiffer) {
  RngStream a(1), b(2);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += a.next_u64() == b.next_u64();
  EXPECT_EQ(equal, 0);
}

TEST(Rng, DrawIsPureFunctionOfCounter) {
  RngStream a(7);
  for (int i = 0; i < 10; ++i) a.next_u64();
  const auto tenth = a.next_u64();
  RngStream b(7, 10);
  EXPECT_EQ(b.next_u64(), tenth);
}

TEST(Rng, DeriveDoesNotAdvanceParent) {
  RngStream a(3);
  const RngStream before = a;
  RngStream child = a.derive(9);
  child.next_u64();
  EXPECT_EQ(a.counter(), before.counter());
  EXPECT_EQ(a.derive(9).next_u64(), RngStream(3).derive(9).next_u64());
  EXPECT_NE(a.derive(9).next_u64(), a.derive(10).next_u64());
}

TEST(Rng, UniformInUnitInterval) {
  RngStream r(11);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // Mean 1/2, sd of the mean sqrt(1/12/n).
  EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(Rng, UniformIntCoversInclusiveRangeEvenly) {
  RngStream r(5);
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    const auto x = r.uniform_int(-2, 3);
    ASSERT_GE(x, -2);
    ASSERT_LE(x, 3);
    ++counts[static_cast<std::size_t>(x + 2)];
  }
  const double p = 1.0 / 6.0;
  const double sd = std::sqrt(n * p * (1 - p));
  for (int c : counts) EXPECT_NEAR(c, n * p, 4.0 * sd);
}

TEST(Rng, NormalMoments) {
  RngStream r(13);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal(1.0, 2.0);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 1.0, 4.0 * 2.0 / std::sqrt(n));
  EXPECT_NEAR(var, 4.0, 0.1);
}

TEST(Rng, CategoricalFollowsWeights) {
  RngStream r(17);
  const std::vector<double> w = {1.0, 0.0, 3.0};
  std::vector<int> counts(3, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[r.categorical(w)];
  EXPECT_EQ(counts[1], 0);
  const double sd = std::sqrt(n * 0.25 * 0.75);
  EXPECT_NEAR(counts[0], n * 0.25, 4.0 * sd);
}

TEST(Rng, CategoricalRejectsEmptyMass) {
  RngStream r(1);
  const std::vector<double> w = {0.0, 0.0};
  EXPECT_THROW(r.categorical(w), diflow::Error);
}
