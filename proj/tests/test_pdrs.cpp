#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "relax_mprk/relax_mprk.hpp"
#include "test_support.hpp"

using namespace relax_mprk;
using namespace relax_mprk::test_util;

TEST(EvalRhs, LotkaVolterraAtInitialState) {
  const auto p = lotka_volterra();
  const Vector f = eval_rhs(p.sys, 0.0, Vector{2.0, 2.0});
  EXPECT_DOUBLE_EQ(f[0], 0.0);
  EXPECT_DOUBLE_EQ(f[1], 2.0);
}

TEST(EvalRhs, ZeroRatesGiveZero) {
  const Vector f = eval_rhs(zero_system(3), 0.0, Vector{0.3, 2.0, 7.0});
  for (double x : f) EXPECT_EQ(x, 0.0);
}

TEST(EvalRhs, LinearExchange) {
  const Vector f = eval_rhs(linear_exchange(), 0.0, Vector{1.0, 1.0});
  EXPECT_DOUBLE_EQ(f[0], -1.0);
  EXPECT_DOUBLE_EQ(f[1], 1.0);
}

TEST(EvalRhs, RejectsNonPositiveStateNamingIndex) {
  try {
    eval_rhs(linear_exchange(), 0.0, Vector{1.0, 0.0});
    FAIL() << "expected a domain error";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("component 1"), std::string::npos);
  }
  EXPECT_THROW(eval_rhs(linear_exchange(), 0.0, Vector{-1.0, 1.0}), DomainError);
  EXPECT_THROW(eval_rhs(linear_exchange(), 0.0, Vector{std::nan(""), 1.0}), DomainError);
}

TEST(EvalRhs, RejectsDimensionMismatch) {
  EXPECT_THROW(eval_rhs(linear_exchange(), 0.0, Vector{1.0, 1.0, 1.0}), std::invalid_argument);
}

TEST(EvalRhs, NegativeRateIsReported) {
  PdrsSystem s = linear_exchange();
  s.prod = [](std::size_t, std::size_t, double, StateView) { return -1.0; };
  EXPECT_THROW(eval_rhs(s, 0.0, Vector{1.0, 1.0}), DomainError);
}

TEST(EvalRhs, ExplicitDestructionCallbackMatchesTransposeDefault) {
  std::mt19937_64 rng(7);
  auto r = random_pds(rng, 4, false);
  PdrsSystem with_dest = r.sys;
  const auto prod = r.sys.prod;
  with_dest.dest = [prod](std::size_t k, std::size_t nu, double t, StateView u) {
    return prod(nu, k, t, u);
  };
  for (int i = 0; i < 20; ++i) {
    const Vector u = random_positive(rng, 4);
    const Vector a = eval_rhs(r.sys, 0.0, u);
    const Vector b = eval_rhs(with_dest, 0.0, u);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(a[k], b[k], 1e-13 * (1.0 + std::abs(a[k])));
  }
}

TEST(SplitRhs, LinearExchange) {
  const PdrsSplit s = split_rhs(linear_exchange(), 0.0, Vector{1.0, 1.0});
  EXPECT_DOUBLE_EQ(s.pd(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(s.pd(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(s.pd(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(s.pd(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(s.rest[0], 0.0);
  EXPECT_DOUBLE_EQ(s.rest[1], 0.0);
}

TEST(SplitRhs, ZeroRates) {
  const PdrsSplit s = split_rhs(zero_system(2), 0.0, Vector{1.0, 3.0});
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t nu = 0; nu < 2; ++nu) EXPECT_EQ(s.pd(k, nu), 0.0);
    EXPECT_EQ(s.rest[k], 0.0);
  }
}

TEST(SplitRhs, LotkaVolterraRestTerms) {
  const PdrsSplit s = split_rhs(lotka_volterra().sys, 0.0, Vector{2.0, 2.0});
  EXPECT_DOUBLE_EQ(s.rest[0], 4.0);
  EXPECT_DOUBLE_EQ(s.rest[1], 0.0);
  // column 2: destruction of u2 through r^D_2 = u2
  EXPECT_DOUBLE_EQ(s.pd(1, 1), -2.0);
  EXPECT_DOUBLE_EQ(s.pd(1, 0), 4.0);
  EXPECT_DOUBLE_EQ(s.pd(0, 0), -4.0);
}

TEST(SplitRhs, AddendsSumToRhsOnRandomSamples) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = random_pds(rng, 1 + trial % 6, trial % 2 == 0);
    const Vector u = random_positive(rng, r.dim);
    const Vector f = eval_rhs(r.sys, 0.0, u);
    const Vector g = split_rhs(r.sys, 0.0, u).sum();
    for (std::size_t k = 0; k < r.dim; ++k) {
      EXPECT_NEAR(g[k], f[k], 1e-14 * (1.0 + std::abs(f[k]))) << "trial " << trial;
    }
  }
}

TEST(Conservative, RandomPdsHasZeroTotalRhs) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    auto r = random_pds(rng, 2 + trial % 5, false);
    const Vector u = random_positive(rng, r.dim);
    const Vector f = eval_rhs(r.sys, 0.0, u);
    double mag = 0.0;
    for (double x : f) mag += std::abs(x);
    EXPECT_LE(std::abs(sum(f)), 1e-13 * (1.0 + mag));
  }
}

TEST(CheckLinearInvariant, Examples) {
  const Vector ones{1.0, 1.0};
  EXPECT_TRUE(check_linear_invariant(ones, Vector{1.0, 1.0}, Vector{0.4, 1.6}, 1e-12));
  EXPECT_TRUE(check_linear_invariant(ones, Vector{1.0, 1.0}, Vector{1.0, 1.0}, 1e-12));
  EXPECT_FALSE(check_linear_invariant(Vector{0.0, 1.0}, Vector{1.0, 1.0}, Vector{0.4, 1.6}, 1e-12));
}

TEST(CheckLinearInvariant, DimensionMismatchThrows) {
  EXPECT_THROW(check_linear_invariant(Vector{1.0, 1.0, 1.0}, Vector{1.0}, Vector{1.0}, 1e-12),
               std::invalid_argument);
}

TEST(EnsurePositive, LiftsUnderflowButRejectsNegative) {
  Vector u{0.0, 1e-320, 2.0};
  ensure_positive(u, 3, "test");
  EXPECT_EQ(u[0], DBL_MIN);
  EXPECT_EQ(u[1], DBL_MIN);
  EXPECT_EQ(u[2], 2.0);
  Vector bad{1.0, -1e-300};
  EXPECT_THROW(ensure_positive(bad, 2, "test"), DomainError);
}
