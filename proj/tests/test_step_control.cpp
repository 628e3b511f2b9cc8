#include <gtest/gtest.h>

#include <cmath>

#include "relax_mprk/relax_mprk.hpp"
#include "test_support.hpp"

using namespace relax_mprk;
using namespace relax_mprk::test_util;

namespace {

const MpScheme kMprk22 = build_scheme(SchemeKind::MPRK22, 1.0);

ControllerState controller(double dt) {
  ControllerState st;
  st.dt = dt;
  return st;
}

}  // namespace

TEST(PidUpdate, UnitErrorAppliesOnlySafety) {
  ControllerState st = controller(2.0);
  EXPECT_DOUBLE_EQ(pid_update(st, 1.0, 2.0), 1.8);
  EXPECT_DOUBLE_EQ(st.dt, 1.8);
  EXPECT_EQ(st.eps_history[0], 1.0);
}

TEST(PidUpdate, QuarterErrorAtOrderTwo) {
  ControllerState st = controller(1.0);
  st.safety = 1.0;
  // eps^(beta1/o) = 4^(0.35) = 2^0.7 with beta1 = 0.7.
  EXPECT_NEAR(pid_update(st, 0.25, 2.0), std::pow(2.0, 0.7), 1e-15);
  EXPECT_DOUBLE_EQ(st.eps_history[0], 4.0);
}

TEST(PidUpdate, ThirdGainIsInertWhenZero) {
  ControllerState a = controller(1.0), b = controller(1.0);
  a.eps_history = {2.0, 1.0};
  b.eps_history = {2.0, 1e6};
  EXPECT_DOUBLE_EQ(pid_update(a, 0.5, 2.0), pid_update(b, 0.5, 2.0));
}

TEST(PidUpdate, HistoryEntersThroughSecondGain) {
  ControllerState st = controller(1.0);
  st.safety = 1.0;
  st.eps_history = {4.0, 1.0};
  EXPECT_NEAR(pid_update(st, 1.0, 2.0), std::pow(4.0, 0.2), 1e-15);
}

TEST(PidUpdate, GrowthAndShrinkAreClamped) {
  ControllerState st = controller(1.0);
  EXPECT_DOUBLE_EQ(pid_update(st, 1e-30, 2.0), 5.0);
  st = controller(1.0);
  EXPECT_DOUBLE_EQ(pid_update(st, 1e30, 2.0), 0.2);
  st = controller(1.0);
  st.dt_max = 2.0;
  EXPECT_DOUBLE_EQ(pid_update(st, 1e-30, 2.0), 2.0);
}

TEST(PidUpdate, RejectsNonPositiveError) {
  ControllerState st = controller(1.0);
  EXPECT_THROW(pid_update(st, 0.0, 2.0), std::invalid_argument);
}

TEST(PidRejectDt, AlwaysShrinks) {
  ControllerState st = controller(1.0);
  st.eps_history = {1e6, 1e6};  // history that would push the full PID factor above 1
  for (double err : {1.0 + 1e-12, 1.5, 10.0, 1e6}) {
    const double h = 3.0;
    const double next = pid_reject_dt(st, h, err, 2.0);
    EXPECT_LT(next, h) << err;
    EXPECT_GE(next, 0.2 * h);
  }
}

TEST(RelaxAdapt, Examples) {
  EXPECT_DOUBLE_EQ(relax_adapt(1.0, true), 1.01);
  EXPECT_DOUBLE_EQ(relax_adapt(1.0, false), 0.9);
  EXPECT_DOUBLE_EQ(relax_adapt(1e-6, false, 1e-6), 1e-6);
  EXPECT_DOUBLE_EQ(relax_adapt(1.0, true, 0.0, 1.005), 1.005);
  EXPECT_THROW(relax_adapt(0.0, true), std::invalid_argument);
}

TEST(Integrate, ZeroRatesReplicateInitialState) {
  const Vector u0{0.5, 1.5, 3.0};
  IntegrateConfig cfg;
  cfg.relax.mode = RelaxMode::implicit;
  const auto eta = half_square();
  const Trajectory tr = integrate(zero_system(3), kMprk22, &eta, cfg, 0.0, u0, 1.0, 0.125);
  ASSERT_TRUE(tr.completed) << tr.message;
  EXPECT_EQ(tr.steps.size(), 8u);
  for (const Vector& u : tr.u) EXPECT_EQ(u, u0);
  for (const AcceptedStep& s : tr.steps) EXPECT_EQ(s.gamma, 1.0);
  EXPECT_DOUBLE_EQ(tr.final_time(), 1.0);
}

TEST(Integrate, FixedUnrelaxedIsBitIdenticalToDirectStepping) {
  const auto p = lotka_volterra();
  for (const MpScheme& sch : {kMprk22, build_scheme(SchemeKind::MPRK43I, 0.5, 0.75)}) {
    const Trajectory tr = integrate(p.sys, sch, nullptr, IntegrateConfig{}, 0.0, p.u0, 5.3, 0.25);
    ASSERT_TRUE(tr.completed);

    double t = 0.0;
    Vector u = p.u0;
    std::size_t n = 0;
    while (5.3 - t > 1e-12) {
      const double h = std::min(0.25, 5.3 - t);
      u = step(p.sys, sch, t, u, h).u_next;
      t = (t + 0.25 >= 5.3) ? 5.3 : t + h;
      ++n;
      ASSERT_LT(n, tr.u.size());
      EXPECT_EQ(tr.u[n], u) << "step " << n;
      EXPECT_EQ(tr.t[n], t);
    }
    EXPECT_EQ(n + 1, tr.u.size());
  }
}

TEST(Integrate, LotkaVolterraRelaxedEntropyDrift) {
  const auto p = lotka_volterra();
  const auto& eta = p.eta.front();
  IntegrateConfig cfg;
  cfg.relax.mode = RelaxMode::implicit;
  const Trajectory tr = integrate(p.sys, kMprk22, &eta, cfg, 0.0, p.u0, 200.0, 1.0);
  ASSERT_TRUE(tr.completed) << tr.message;
  const double eta0 = eta(p.u0);
  for (const Vector& u : tr.u) {
    EXPECT_LE(std::abs(eta(u) - eta0), 200.0 * cfg.relax.gamma_tol);
    for (double x : u) EXPECT_GT(x, 0.0);
  }
  EXPECT_GE(tr.final_time(), 200.0 - 1e-9);
}

TEST(Integrate, RelaxationFailureShrinksDtGeometrically) {
  // eta = u_1 strictly decreases along every exchange step, so no root exists.
  EntropyFunctional first;
  first.name = "u_1";
  first.eval = [](StateView u) { return u[0]; };
  first.grad = [](StateView u) {
    Vector g(u.size(), 0.0);
    g[0] = 1.0;
    return g;
  };
  IntegrateConfig cfg;
  cfg.relax.mode = RelaxMode::implicit;
  cfg.relax.solver = ScalarSolver::bisection;
  cfg.dt_min = 1e-3;
  std::vector<double> attempted;
  cfg.on_reject = [&](double t, double h, const std::string&) {
    EXPECT_EQ(t, 0.0);
    attempted.push_back(h);
  };
  const Vector u0{1.0, 1.0};
  const Trajectory tr = integrate(linear_exchange(), kMprk22, &first, cfg, 0.0, u0, 10.0, 1.0);
  EXPECT_FALSE(tr.completed);
  EXPECT_NE(tr.message.find("dt_min"), std::string::npos);
  EXPECT_TRUE(tr.steps.empty());
  EXPECT_EQ(tr.final_state(), u0);
  ASSERT_GT(attempted.size(), 10u);
  EXPECT_EQ(attempted.front(), 1.0);
  for (std::size_t i = 1; i + 1 < attempted.size(); ++i) {
    EXPECT_NEAR(attempted[i], 0.9 * attempted[i - 1], 1e-15);
  }
  EXPECT_EQ(attempted.back(), cfg.dt_min);
}

TEST(Integrate, PidRunReachesEndPositively) {
  const auto p = lotka_volterra();
  IntegrateConfig cfg;
  cfg.adaptivity = Adaptivity::pid;
  cfg.rtol = cfg.atol = 1e-5;
  for (const MpScheme& sch : {kMprk22, build_scheme(SchemeKind::MPRK43I, 0.5, 0.75)}) {
    const Trajectory tr = integrate(p.sys, sch, nullptr, cfg, 0.0, p.u0, 20.0, 0.1);
    ASSERT_TRUE(tr.completed) << tr.message;
    EXPECT_DOUBLE_EQ(tr.final_time(), 20.0);
    for (const AcceptedStep& s : tr.steps) EXPECT_LE(s.err_est, 1.0);
    for (const Vector& u : tr.u) {
      for (double x : u) EXPECT_GT(x, 0.0);
    }
  }
}

TEST(Integrate, PidAndRelaxKeepsEntropy) {
  const auto p = lotka_volterra();
  const auto& eta = p.eta.front();
  IntegrateConfig cfg;
  cfg.adaptivity = Adaptivity::pid_and_relax;
  cfg.relax.mode = RelaxMode::implicit;
  cfg.rtol = cfg.atol = 1e-4;
  const Trajectory tr = integrate(p.sys, kMprk22, &eta, cfg, 0.0, p.u0, 30.0, 0.1);
  ASSERT_TRUE(tr.completed) << tr.message;
  for (const Vector& u : tr.u) {
    EXPECT_LE(std::abs(eta(u) - eta(p.u0)), tr.steps.size() * cfg.relax.gamma_tol);
  }
}

TEST(Integrate, RejectsInvalidArguments) {
  const auto p = lotka_volterra();
  IntegrateConfig cfg;
  EXPECT_THROW(integrate(p.sys, kMprk22, nullptr, cfg, 0.0, p.u0, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(integrate(p.sys, kMprk22, nullptr, cfg, 1.0, p.u0, 1.0, 0.1), std::invalid_argument);
  EXPECT_THROW(integrate(p.sys, kMprk22, nullptr, cfg, 0.0, Vector{1.0}, 1.0, 0.1),
               std::invalid_argument);
  cfg.relax.mode = RelaxMode::implicit;
  EXPECT_THROW(integrate(p.sys, kMprk22, nullptr, cfg, 0.0, p.u0, 1.0, 0.1), std::invalid_argument);
  EXPECT_THROW(integrate(p.sys, kMprk22, nullptr, IntegrateConfig{}, 0.0, Vector{1.0, -1.0}, 1.0, 0.1),
               DomainError);
}

TEST(Integrate, MaxStepsStopsTheLoop) {
  const auto p = lotka_volterra();
  IntegrateConfig cfg;
  cfg.max_steps = 5;
  const Trajectory tr = integrate(p.sys, kMprk22, nullptr, cfg, 0.0, p.u0, 100.0, 0.1);
  EXPECT_FALSE(tr.completed);
  EXPECT_EQ(tr.steps.size(), 5u);
  EXPECT_NE(tr.message.find("max_steps"), std::string::npos);
}
