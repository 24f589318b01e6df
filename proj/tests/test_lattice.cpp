#include <lpids/lattice_sums.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lpids;

TEST(LatticeSum, SpecExamples) {
  EXPECT_NEAR(lattice_sum_closed(2.0, 1.0, 0.0), 3.0, 1e-15);
  EXPECT_NEAR(lattice_sum_closed(2.0, 2.0, 1.0), 4.0 / 3.0, 1e-15);
  const double e = std::exp(1.0);
  EXPECT_NEAR(lattice_sum_closed(e, 3.0, 0.7), lattice_sum_bruteforce(e, 3.0, 0.7, 200), 1e-14);
}

TEST(LatticeSum, RejectsBadArguments) {
  EXPECT_THROW(lattice_sum_closed(1.0, 1.0, 0.0), PreconditionError);
  EXPECT_THROW(lattice_sum_closed(1.0 + 1e-10, 1.0, 0.0), PreconditionError);
  EXPECT_THROW(lattice_sum_closed(0.5, 1.0, 0.0), PreconditionError);
  EXPECT_THROW(lattice_sum_closed(2.0, 0.0, 0.0), PreconditionError);
  EXPECT_THROW(lattice_sum_closed(2.0, -1.0, 0.0), PreconditionError);
  EXPECT_THROW(lattice_sum_bruteforce(2.0, 1.0, 0.0, 0), PreconditionError);
  EXPECT_NO_THROW(lattice_sum_closed(1.0 + 2e-9, 1.0, 0.0));
}

TEST(LatticeSum, BruteForceExamplesAndMonotonicity) {
  EXPECT_NEAR(lattice_sum_bruteforce(2.0, 1.0, 0.0, 60), 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(lattice_sum_bruteforce(2.0, 1.0, 0.0, 1), 2.0);
  double prev = 0.0;
  for (int j = 1; j <= 40; ++j) {
    const double v = lattice_sum_bruteforce(1.7, 0.9, 0.3, j);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(LatticeSum, ClosedVsBruteForceWithinTailBound) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> ud(1.1, 10.0), udelta(0.25, 8.0), ux(-20.0, 20.0);
  for (int i = 0; i < 100; ++i) {
    const double d = ud(rng), delta = udelta(rng), x = ux(rng);
    const std::int64_t radius = 64;
    const double closed = lattice_sum_closed(d, delta, x);
    const double brute = lattice_sum_bruteforce(d, delta, x, radius);
    const double bound = lattice_truncation_bound(d, delta, x, radius);
    EXPECT_LE(std::abs(closed - brute), bound + 1e-13 * closed)
        << "d=" << d << " delta=" << delta << " x=" << x;
  }
}

TEST(LatticeSum, PeriodicAndEven) {
  for (double x : {-7.3, -0.2, 0.0, 0.4, 1.9, 12.25}) {
    const double a = lattice_sum_closed(2.5, 1.5, x);
    EXPECT_NEAR(lattice_sum_closed(2.5, 1.5, x + 1.5) / a, 1.0, 1e-13);
    EXPECT_NEAR(lattice_sum_closed(2.5, 1.5, -x) / a, 1.0, 1e-13);
  }
}

TEST(LatticeDistance, FlooredModulus) {
  EXPECT_DOUBLE_EQ(lattice_distance(-0.25, 1.0), 0.25);
  EXPECT_DOUBLE_EQ(lattice_distance(-0.75, 1.0), 0.25);
  EXPECT_DOUBLE_EQ(lattice_distance(3.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(lattice_distance(5.0, 4.0), 1.0);
}

TEST(Average, SpecExamples) {
  EXPECT_NEAR(average_limit_closed(2.0, 1), 1.5, 1e-15);
  EXPECT_NEAR(average_bruteforce(2.0, 1, 0, 1 << 16), 1.5, 1e-12);
  EXPECT_NEAR(average_limit_closed(3.0, 4), 0.125, 1e-15);
  EXPECT_NEAR(average_bruteforce(2.0, 1, 0, 2), 1.5, 1e-15);
  EXPECT_NEAR(average_bruteforce(2.0, 3, 0, 1 << 10), average_limit_closed(2.0, 3), 1e-10);
  const double n = (1 << 10) + 1;
  EXPECT_LE(std::abs(average_bruteforce(2.0, 3, 0, (1 << 10) + 1) - average_limit_closed(2.0, 3)),
            std::ldexp(1.0, -3) * 6.0 / n);
  EXPECT_THROW(average_limit_closed(1.0, 3), PreconditionError);
}

TEST(Average, IndependentOfShift) {
  const std::int64_t n = 1 << 16;
  for (int m : {1, 3, 5}) {
    const double a0 = average_bruteforce(2.0, m, 0, n);
    const double a5 = average_bruteforce(2.0, m, 5, n);
    EXPECT_LE(std::abs(a0 - a5), std::ldexp(1.0, -m) * 40.0 / static_cast<double>(n));
  }
}

TEST(Average, ExactOnWholePeriods) {
  for (int m = 1; m <= 10; ++m)
    for (double d : {1.5, 2.0, 4.0}) {
      const double limit = average_limit_closed(d, m);
      for (std::int64_t q : {1, 3}) {
        const double avg = average_bruteforce(d, m, 0, q << m);
        EXPECT_NEAR(avg / limit, 1.0, 1e-12) << "m=" << m << " d=" << d;
      }
      EXPECT_NEAR(period_sum(d, m) / ((1 + 1 / d) / (1 - 1 / d)), 1.0, 1e-12);
    }
}

TEST(DecayProfileType, Invariants) {
  EXPECT_THROW(DecayProfile(1.0, 1.0), PreconditionError);
  EXPECT_THROW(DecayProfile(0.0, 2.0), PreconditionError);
  EXPECT_DOUBLE_EQ(DecayProfile(1.0, 3.0).geometric_factor(), 2.0);
}
