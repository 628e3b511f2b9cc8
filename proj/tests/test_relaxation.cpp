#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "relax_mprk/relax_mprk.hpp"
#include "test_support.hpp"

using namespace relax_mprk;
using namespace relax_mprk::test_util;

namespace {

const MpScheme kMprk22 = build_scheme(SchemeKind::MPRK22, 1.0);

StepRecord exchange_step() {
  return step(linear_exchange(), kMprk22, 0.0, Vector{1.0, 1.0}, 1.0);
}

// 1/2 |u - c|^2: the classical residual along the exchange step direction has
// roots at 0 and -2 d.(u_n - c)/|d|^2.
EntropyFunctional shifted_square(Vector c) {
  EntropyFunctional e;
  e.name = "shifted_square";
  e.eval = [c](StateView u) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += 0.5 * (u[i] - c[i]) * (u[i] - c[i]);
    return s;
  };
  e.grad = [c](StateView u) {
    Vector g(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) g[i] = u[i] - c[i];
    return g;
  };
  return e;
}

ResidualFunction plain(std::function<double(double)> f, std::function<double(double)> df) {
  return [f, df](double g, bool deriv) {
    ResidualValue r{f(g), 0.0};
    if (deriv) r.derivative = df(g);
    return r;
  };
}

}  // namespace

TEST(EntropyEstimate, ConservativeRegimeReturnsOldValue) {
  const StepRecord rec = exchange_step();
  const auto eta = half_square();
  EXPECT_EQ(entropy_estimate(eta, rec, kMprk22), eta(rec.u_n));
}

TEST(EntropyEstimate, ZeroRatesInDissipativeRegime) {
  const StepRecord rec = step(zero_system(3), kMprk22, 0.0, Vector{1.0, 2.0, 3.0}, 0.5);
  const auto eta = half_square(EntropyRegime::dissipative);
  EXPECT_EQ(entropy_estimate(eta, rec, kMprk22), eta(rec.u_n));
}

TEST(EntropyEstimate, PorousMediumQuadratureIsNonIncreasing) {
  const auto p = porous_medium(10, 3.0);
  const MpScheme sch = build_scheme(SchemeKind::MPSSPRK2, 0.5, 1.0);
  const double dt = p.mesh->dx;
  const StepRecord rec = step(p.sys, sch, p.t0, p.u0, dt);
  const auto& eta = p.eta.front();
  ASSERT_EQ(eta.regime, EntropyRegime::dissipative);

  // Independent quadrature: eta(u^n) + dt sum_j b_j eta'(u_j) . f(u_j).
  double acc = 0.0;
  for (std::size_t j = 0; j < rec.stages.size(); ++j) {
    const Vector f = eval_rhs(p.sys, p.t0, rec.stages[j]);
    const Vector g = eta.grad(rec.stages[j]);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += g[i] * f[i];
    EXPECT_LE(s, 1e-12 * std::abs(eta(rec.u_n)));
    acc += sch.butcher.b[j] * s;
  }
  const double expected = eta(rec.u_n) + dt * acc;
  const double est = entropy_estimate(eta, rec, sch);
  EXPECT_NEAR(est, expected, 1e-12 * std::abs(expected));
  EXPECT_LE(est, eta(rec.u_n));
}

TEST(ResidualClassical, HandExamples) {
  const auto eta = half_square();
  const Vector u_old{1.0, 0.0}, u_new{0.0, 1.0};
  EXPECT_EQ(residual_classical(eta, u_old, u_new, 0.5, 0.5, 0.0).value, 0.0);
  EXPECT_DOUBLE_EQ(residual_classical(eta, u_old, u_new, 0.5, 0.5, 1.0).value, 0.0);
  EXPECT_DOUBLE_EQ(residual_classical(eta, u_old, u_new, 0.5, 0.5, 2.0).value, 2.0);
}

TEST(ResidualClassical, ZeroAtGammaZeroForAnyData) {
  std::mt19937_64 rng(8);
  const auto eta = boltzmann(EntropyRegime::dissipative);
  for (int i = 0; i < 100; ++i) {
    const Vector a = random_positive(rng, 4), b = random_positive(rng, 4);
    EXPECT_NEAR(residual_classical(eta, a, b, eta(a), eta(a) - 0.3, 0.0).value, 0.0,
                1e-14 * (1.0 + std::abs(eta(a))));
  }
}

TEST(ResidualGeometric, HandExamples) {
  const auto eta = half_square();
  const Vector u_old{1.0, 4.0}, u_new{4.0, 1.0};
  const Vector mid = geometric_point(u_old, u_new, 0.5, 2);
  EXPECT_DOUBLE_EQ(mid[0], 2.0);
  EXPECT_DOUBLE_EQ(mid[1], 2.0);
  EXPECT_NEAR(residual_geometric(eta, u_old, u_new, eta(u_old), 0.0).value, 0.0, 1e-14);
  EXPECT_NEAR(residual_geometric(eta, u_old, u_new, 3.0, 1.0).value, eta(u_new) - 3.0, 1e-14);
}

TEST(ResidualGeometric, PointIsPositiveForEveryGamma) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const Vector a = random_positive(rng, 3, 1e-6, 10.0), b = random_positive(rng, 3, 1e-6, 10.0);
    for (double g : {-5.0, -0.5, 0.0, 0.3, 1.0, 4.0, 20.0}) {
      for (double x : geometric_point(a, b, g, 3)) EXPECT_GT(x, 0.0);
    }
  }
}

TEST(ResidualGeometric, DerivativeMatchesCentralDifferences) {
  std::mt19937_64 rng(13);
  const auto eta = boltzmann();
  for (int i = 0; i < 50; ++i) {
    const Vector a = random_positive(rng, 4), b = random_positive(rng, 4);
    const double g = 0.5 + 0.01 * i;
    const double d = residual_geometric(eta, a, b, 1.0, g, true).derivative;
    const double fd = (residual_geometric(eta, a, b, 1.0, g + 1e-6).value -
                       residual_geometric(eta, a, b, 1.0, g - 1e-6).value) / 2e-6;
    EXPECT_NEAR(d, fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(ResidualImplicit, LinearExchangeAtGammaTwo) {
  const StepRecord rec = exchange_step();
  const auto eta = half_square();
  const ResidualValue r = residual_implicit(eta, kMprk22, rec, 1.0, 2.0, SigmaMode::frozen);
  EXPECT_NEAR(r.value, 0.5625, 1e-15);
  EXPECT_NEAR(r.derivative, 0.140625, 1e-15);
}

TEST(ResidualImplicit, RejectsNonPositiveGamma) {
  const StepRecord rec = exchange_step();
  EXPECT_THROW(residual_implicit(half_square(), kMprk22, rec, 1.0, 0.0, SigmaMode::frozen),
               DomainError);
}

TEST(ResidualImplicit, DerivativeMatchesCentralDifferences) {
  std::mt19937_64 rng(31);
  const auto eta = boltzmann();
  for (const MpScheme& sch :
       {kMprk22, build_scheme(SchemeKind::MPRK43I, 0.5, 0.75), build_scheme(SchemeKind::MPSSPRK2, 0.5, 1.0)}) {
    for (SigmaMode mode : {SigmaMode::frozen, SigmaMode::dense, SigmaMode::bootstrap}) {
      for (int i = 0; i < 20; ++i) {
        auto r = random_pds(rng, 4, false);
        const StepRecord rec = step(r.sys, sch, 0.0, r.u0, 0.1);
        const double g = 0.8 + 0.02 * i;
        const double d = residual_implicit(eta, sch, rec, 0.0, g, mode).derivative;
        const double fd = (residual_implicit(eta, sch, rec, 0.0, g + 1e-6, mode, false).value -
                           residual_implicit(eta, sch, rec, 0.0, g - 1e-6, mode, false).value) / 2e-6;
        EXPECT_NEAR(d, fd, 1e-6 * std::max(1.0, std::abs(fd))) << sch.name();
      }
    }
  }
}

TEST(SolveScalar, NewtonOnLinearResidualTakesOneStep) {
  RelaxConfig cfg;
  const auto res = solve_scalar(plain([](double g) { return g - 1.0; }, [](double) { return 1.0; }), cfg);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.gamma, 1.0);
  EXPECT_EQ(res.iterations, 1);
}

TEST(SolveScalar, BisectionOnQuadratic) {
  RelaxConfig cfg;
  cfg.solver = ScalarSolver::bisection;
  cfg.gamma_min = 0.5;
  cfg.gamma_max = 2.0;
  // Shifted so that gamma = 1 itself is not the first probe's exact root.
  const auto res = solve_scalar(
      plain([](double g) { return g * g - 1.0 - 1e-3; }, [](double g) { return 2.0 * g; }), cfg);
  ASSERT_TRUE(res.converged) << res.message;
  EXPECT_NEAR(res.gamma, std::sqrt(1.001), 1e-10);
  EXPECT_LE(std::abs(res.residual), cfg.gamma_tol);
}

TEST(SolveScalar, EverySolverFindsAnOffCenterRoot) {
  for (ScalarSolver s : {ScalarSolver::newton, ScalarSolver::regula_falsi, ScalarSolver::bisection,
                         ScalarSolver::secant}) {
    RelaxConfig cfg;
    cfg.solver = s;
    cfg.max_iters = 200;
    const auto res = solve_scalar(plain([](double g) { return std::pow(g, 3) - 1.3; },
                                        [](double g) { return 3.0 * g * g; }),
                                  cfg);
    ASSERT_TRUE(res.converged) << to_string(s) << ": " << res.message;
    EXPECT_NEAR(res.gamma, std::cbrt(1.3), 1e-9) << to_string(s);
    EXPECT_LE(std::abs(res.residual), cfg.gamma_tol);
  }
}

TEST(SolveScalar, DomainErrorsShrinkTheBracket) {
  RelaxConfig cfg;
  cfg.solver = ScalarSolver::regula_falsi;
  const ResidualFunction r = [](double g, bool) {
    if (g > 1.5) throw DomainError("outside");
    return ResidualValue{std::log(g / 1.2), 0.0};
  };
  const auto res = solve_scalar(r, cfg);
  ASSERT_TRUE(res.converged) << res.message;
  EXPECT_NEAR(res.gamma, 1.2, 1e-9);
}

TEST(SolveScalar, ReportsMissingBracket) {
  RelaxConfig cfg;
  cfg.solver = ScalarSolver::bisection;
  const auto res = solve_scalar(plain([](double g) { return g * g + 1.0; }, [](double g) { return 2 * g; }), cfg);
  EXPECT_FALSE(res.converged);
  EXPECT_FALSE(res.message.empty());
}

TEST(SolveScalar, NewtonLeavingTheAdmissibleIntervalFails) {
  RelaxConfig cfg;
  const auto res = solve_scalar(plain([](double g) { return g - 20.0; }, [](double) { return 1.0; }), cfg);
  EXPECT_FALSE(res.converged);
}

TEST(SolveScalar, ConvergedImpliesSmallResidual) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> root(0.2, 5.0), slope(0.1, 10.0);
  for (int i = 0; i < 200; ++i) {
    const double r0 = root(rng), k = slope(rng);
    for (ScalarSolver s : {ScalarSolver::newton, ScalarSolver::regula_falsi, ScalarSolver::bisection,
                           ScalarSolver::secant}) {
      RelaxConfig cfg;
      cfg.solver = s;
      const auto f = [=](double g) { return k * (std::exp(g - r0) - 1.0); };
      const auto res = solve_scalar(plain(f, [=](double g) { return k * std::exp(g - r0); }), cfg);
      if (res.converged) {
        EXPECT_LE(std::abs(f(res.gamma)), cfg.gamma_tol);
        EXPECT_GT(res.gamma, cfg.gamma_min);
        EXPECT_LE(res.gamma, cfg.gamma_max);
      }
    }
  }
}

TEST(RelaxConfig, RejectsInconsistentBounds) {
  RelaxConfig cfg;
  cfg.gamma_min = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.gamma_tol = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(RelaxStep, ConstantEntropyAcceptsGammaOne) {
  const StepRecord rec = exchange_step();
  EntropyFunctional flat;
  flat.name = "flat";
  flat.eval = [](StateView) { return 4.0; };
  flat.grad = [](StateView u) { return Vector(u.size(), 0.0); };
  for (RelaxMode mode : {RelaxMode::clamped_dissipative, RelaxMode::implicit}) {
    RelaxConfig cfg;
    cfg.mode = mode;
    const RelaxOutcome o = relax_step(flat, linear_exchange(), kMprk22, rec, cfg);
    ASSERT_TRUE(o.ok()) << o.message;
    EXPECT_EQ(o.gamma, 1.0);
    EXPECT_EQ(o.u_relaxed, rec.u_next);
  }
}

TEST(RelaxStep, ClampedRootAboveOneReturnsBaseStep) {
  const StepRecord rec = exchange_step();
  const auto eta = shifted_square({0.49, 1.51});
  const auto root = residual_classical(eta, rec.u_n, rec.u_next, eta(rec.u_n), eta(rec.u_n), 1.7);
  ASSERT_NEAR(root.value, 0.0, 1e-14);

  for (ScalarSolver s : {ScalarSolver::newton, ScalarSolver::bisection}) {
    RelaxConfig cfg;
    cfg.mode = RelaxMode::clamped_dissipative;
    cfg.solver = s;
    const RelaxOutcome o = relax_step(eta, linear_exchange(), kMprk22, rec, cfg);
    EXPECT_EQ(o.status, RelaxStatus::clamped_to_one) << to_string(s) << " " << o.message;
    EXPECT_EQ(o.gamma, 1.0);
    EXPECT_EQ(o.u_relaxed, rec.u_next);
    EXPECT_DOUBLE_EQ(o.t_relaxed, 1.0);
  }
}

TEST(RelaxStep, ClampedRootBelowOneIsConvexCombination) {
  const StepRecord rec = exchange_step();
  // Root at 0.6: d.(u_n - c) = -0.216 with d = (-0.6, 0.6).
  const auto eta = shifted_square({1.0 - 0.18, 1.0 + 0.18});
  RelaxConfig cfg;
  cfg.mode = RelaxMode::clamped_dissipative;
  const RelaxOutcome o = relax_step(eta, linear_exchange(), kMprk22, rec, cfg);
  ASSERT_EQ(o.status, RelaxStatus::converged) << o.message;
  EXPECT_NEAR(o.gamma, 0.6, 1e-12);
  EXPECT_NEAR(o.u_relaxed[0], 1.0 - 0.6 * 0.6, 1e-12);
  EXPECT_NEAR(o.t_relaxed, 0.6, 1e-12);
}

TEST(RelaxStep, DissipativeImplicitFollowsEstimateLine) {
  const auto p = make_problem("pme", {{"m", "5"}, {"N", "40"}});
  const auto& eta = p.eta.front();
  ASSERT_EQ(eta.regime, EntropyRegime::dissipative);
  const MpScheme sch = build_scheme(SchemeKind::MPRK43I, 0.5, 0.75);
  const StepRecord rec = step(p.sys, sch, p.t0, p.u0, 0.01);
  const double eta_n = eta(p.u0);
  const double est = entropy_estimate(eta, rec, sch);
  for (RelaxMode mode : {RelaxMode::implicit, RelaxMode::geometric}) {
    RelaxConfig cfg;
    cfg.mode = mode;
    cfg.solver = ScalarSolver::regula_falsi;
    const RelaxOutcome o = relax_step(eta, p.sys, sch, rec, cfg);
    ASSERT_TRUE(o.ok()) << to_string(mode) << ": " << o.message;
    EXPECT_NEAR(eta(o.u_relaxed), eta_n + o.gamma * (est - eta_n), 1e-10) << to_string(mode);
    EXPECT_LE(eta(o.u_relaxed), eta_n + cfg.gamma_tol);
    for (double x : o.u_relaxed) EXPECT_GT(x, 0.0);
  }
}

TEST(RelaxStep, LotkaVolterraImplicitStepConservesEntropy) {
  const auto p = lotka_volterra();
  const auto& eta = p.eta.front();
  const StepRecord rec = step(p.sys, kMprk22, 0.0, p.u0, 0.5);
  RelaxConfig cfg;
  cfg.mode = RelaxMode::implicit;
  const RelaxOutcome o = relax_step(eta, p.sys, kMprk22, rec, cfg);
  ASSERT_TRUE(o.ok()) << o.message;
  EXPECT_LE(std::abs(eta(o.u_relaxed) - eta(p.u0)), cfg.gamma_tol);
  EXPECT_DOUBLE_EQ(o.t_relaxed, 0.5 * o.gamma);
  for (double x : o.u_relaxed) EXPECT_GT(x, 0.0);
}

TEST(RelaxStep, ImplicitModePreservesLinearInvariants) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 50; ++i) {
    auto r = random_pds(rng, 4, false);
    // Quadratic entropy conserved by the exact flow only approximately; the
    // relaxed state must still keep 1^T u.
    const auto eta = half_square();
    const StepRecord rec = step(r.sys, kMprk22, 0.0, r.u0, 0.05);
    RelaxConfig cfg;
    cfg.mode = RelaxMode::implicit;
    cfg.solver = ScalarSolver::regula_falsi;
    const RelaxOutcome o = relax_step(eta, r.sys, kMprk22, rec, cfg);
    if (!o.ok()) continue;
    EXPECT_NEAR(sum(o.u_relaxed), sum(r.u0), 1e-12 * sum(r.u0));
  }
}

TEST(RelaxStep, GeometricModeNeedsMonotoneEntropy) {
  const StepRecord rec = exchange_step();
  RelaxConfig cfg;
  cfg.mode = RelaxMode::geometric;
  EXPECT_THROW(relax_step(boltzmann(), linear_exchange(), kMprk22, rec, cfg), std::invalid_argument);
  cfg.allow_nonmonotone_geometric = true;
  const RelaxOutcome o = relax_step(boltzmann(), linear_exchange(), kMprk22, rec, cfg);
  EXPECT_FALSE(o.message.empty());
}

TEST(RelaxStep, GeometricModeConservesMonotoneEntropy) {
  std::mt19937_64 rng(41);
  const auto eta = half_square();
  for (int i = 0; i < 30; ++i) {
    auto r = random_pds(rng, 3, false);
    const StepRecord rec = step(r.sys, kMprk22, 0.0, r.u0, 0.05);
    RelaxConfig cfg;
    cfg.mode = RelaxMode::geometric;
    cfg.solver = ScalarSolver::secant;
    const RelaxOutcome o = relax_step(eta, r.sys, kMprk22, rec, cfg);
    if (!o.ok()) continue;
    EXPECT_LE(std::abs(o.eta_after - eta(r.u0)), std::max(cfg.gamma_tol, 4e-16 * eta(r.u0)));
    for (double x : o.u_relaxed) EXPECT_GT(x, 0.0);
  }
}

TEST(RelaxStep, StratosphericNewtonRootBelowGammaMinIsRejected) {
  const auto p = stratospheric();
  const StepRecord rec = step(p.sys, kMprk22, p.t0, p.u0, 36.0);
  RelaxConfig cfg;
  cfg.mode = RelaxMode::implicit;
  cfg.sigma_mode = SigmaMode::dense;
  const RelaxOutcome o = relax_step(p.eta.front(), p.sys, kMprk22, rec, cfg);
  EXPECT_EQ(o.status, RelaxStatus::failed);
  EXPECT_GT(o.gamma, 0.0);
  EXPECT_LT(o.gamma, cfg.gamma_min);
  EXPECT_NE(o.message.find("gamma_min"), std::string::npos);
}

TEST(RelaxStep, NoneModeIsPassThrough) {
  const StepRecord rec = exchange_step();
  const RelaxOutcome o = relax_step(half_square(), linear_exchange(), kMprk22, rec, RelaxConfig{});
  EXPECT_EQ(o.gamma, 1.0);
  EXPECT_EQ(o.u_relaxed, rec.u_next);
}
