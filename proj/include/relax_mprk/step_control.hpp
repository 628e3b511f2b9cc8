#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "relax_mprk/errors.hpp"
#include "relax_mprk/pdrs.hpp"
#include "relax_mprk/relaxation.hpp"
#include "relax_mprk/schemes.hpp"
#include "relax_mprk/steppers.hpp"

namespace relax_mprk {

struct PidGains {
  double beta1 = 0.7;
  double beta2 = 0.4;
  double beta3 = 0.0;
};

struct ControllerState {
  double dt = 0.0;
  /// eps_{n-1}, eps_{n-2}; a missing entry counts as 1.
  std::array<double, 2> eps_history{1.0, 1.0};
  double tol_rel = 1e-3;
  double tol_abs = 1e-3;
  PidGains pid;
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 5.0;
  double dt_min = 0.0;
  double dt_max = std::numeric_limits<double>::infinity();

  double clamp_dt(double h) const { return std::clamp(h, dt_min, dt_max); }
};

/// dt * clamp(safety * eps_n^{b1/o} eps_{n-1}^{b2/o} eps_{n-2}^{b3/o}, 0.2, 5)
/// with eps = 1/err, then clamped to [dt_min, dt_max]. Shifts the history
/// and stores the new dt in the state.
inline double pid_update(ControllerState& st, double err, double order_hat) {
  if (!(err > 0.0) || !std::isfinite(err)) {
    throw std::invalid_argument("pid_update: err must be positive and finite");
  }
  if (!(order_hat > 0.0)) throw std::invalid_argument("pid_update: order_hat must be positive");
  const double eps = 1.0 / err;
  const double f = st.safety * std::pow(eps, st.pid.beta1 / order_hat) *
                   std::pow(st.eps_history[0], st.pid.beta2 / order_hat) *
                   std::pow(st.eps_history[1], st.pid.beta3 / order_hat);
  st.eps_history = {eps, st.eps_history[0]};
  st.dt = st.clamp_dt(st.dt * std::clamp(f, st.min_factor, st.max_factor));
  return st.dt;
}

/// Step size after a rejected attempt of size h: integral term only, never
/// larger than safety * h. A small error in the history would otherwise let
/// the full PID factor exceed one and repeat the same rejected step forever.
inline double pid_reject_dt(const ControllerState& st, double h, double err,
                            double order_hat) {
  const double f = st.safety * std::pow(1.0 / err, st.pid.beta1 / order_hat);
  return st.clamp_dt(h * std::clamp(f, st.min_factor, st.safety));
}

inline double relax_adapt(double dt, bool relax_ok, double dt_min = 0.0,
                          double dt_max = std::numeric_limits<double>::infinity()) {
  if (!(dt > 0.0)) throw std::invalid_argument("relax_adapt: dt must be positive");
  return std::clamp(relax_ok ? 1.01 * dt : 0.9 * dt, dt_min, dt_max);
}

enum class Adaptivity { fixed, pid, relax_only, pid_and_relax };

inline std::string_view to_string(Adaptivity a) {
  switch (a) {
    case Adaptivity::fixed: return "fixed";
    case Adaptivity::pid: return "pid";
    case Adaptivity::relax_only: return "relax_only";
    case Adaptivity::pid_and_relax: return "pid_and_relax";
  }
  return "?";
}

struct IntegrateConfig {
  Adaptivity adaptivity = Adaptivity::fixed;
  RelaxConfig relax;
  double rtol = 1e-3;
  double atol = 1e-3;
  /// Zero selects 1e-12 (t_end - t0) and (t_end - t0).
  double dt_min = 0.0;
  double dt_max = 0.0;
  std::size_t max_steps = 50'000'000;
  /// Keep the full StepRecord of every accepted step.
  bool keep_records = false;
  /// Keep every accepted state (the final state is always kept).
  bool keep_states = true;
  /// Called for every base step computed, accepted or not.
  std::function<void(const StepRecord&)> on_base_step;
  /// Called with (t, attempted dt, reason) for every rejected attempt.
  std::function<void(double, double, const std::string&)> on_reject;
};

struct AcceptedStep {
  double t_n = 0.0;
  double dt = 0.0;
  double t_next = 0.0;
  double gamma = 1.0;
  RelaxStatus status = RelaxStatus::converged;
  int relax_iterations = 0;
  /// NaN without an entropy.
  double eta = std::numeric_limits<double>::quiet_NaN();
  /// Scaled controller error; NaN when no estimate was made.
  double err_est = std::numeric_limits<double>::quiet_NaN();
  std::optional<StepRecord> record;
};

struct Trajectory {
  /// Entry 0 is the initial point.
  std::vector<double> t;
  std::vector<Vector> u;
  std::vector<AcceptedStep> steps;
  std::size_t rejected = 0;
  bool completed = false;
  std::string message;

  double final_time() const { return t.back(); }
  const Vector& final_state() const { return u.back(); }
};

/// Scaled RMS norm of a - b with weights atol + rtol |ref|.
inline double scaled_error(std::span<const double> a, std::span<const double> b,
                           std::span<const double> ref, double rtol, double atol) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double w = atol + rtol * std::abs(ref[i]);
    const double e = (a[i] - b[i]) / w;
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(std::max<std::size_t>(a.size(), 1)));
}

/// Stage index usable as a lower-order embedded solution (a stage sitting at
/// c = 1), if any.
inline std::optional<std::size_t> embedded_stage(const MpScheme& scheme) {
  const auto& c = scheme.butcher.c;
  for (std::size_t j = c.size(); j-- > 1;) {
    if (c[j] == 1.0) return j;
  }
  return std::nullopt;
}

struct ErrorEstimate {
  double err = 0.0;
  double order_hat = 1.0;
};

/// ||u^{n+1} - u^(j)|| for a stage at c = 1; otherwise step doubling.
inline ErrorEstimate estimate_error(const PdrsSystem& sys, const MpScheme& scheme,
                                    const StepRecord& rec, double rtol, double atol) {
  if (auto j = embedded_stage(scheme)) {
    return {scaled_error(rec.u_next, rec.stages[*j], rec.u_n, rtol, atol), 2.0};
  }
  const double h = 0.5 * rec.dt;
  const StepRecord half1 = step(sys, scheme, rec.t_n, rec.u_n, h);
  const StepRecord half2 = step(sys, scheme, rec.t_n + h, half1.u_next, h);
  return {scaled_error(rec.u_next, half2.u_next, rec.u_n, rtol, atol),
          static_cast<double>(scheme.order + 1)};
}

/// Time loop. Each attempt runs a base step from the current state, an
/// optional error test and an optional relaxation; any failure leaves the
/// state untouched and retries with a smaller dt. Accepted relaxed steps
/// advance to (t_n + gamma dt, u_relaxed).
///
/// Without relaxation the final step is shortened to land on t_end. With
/// relaxation the final time is t_n + gamma dt of the last step, which can
/// overshoot t_end slightly; a remaining sliver is covered by further steps.
inline Trajectory integrate(const PdrsSystem& sys, const MpScheme& scheme,
                            const EntropyFunctional* eta, const IntegrateConfig& cfg,
                            double t0, std::span<const double> u0, double t_end,
                            double dt0) {
  if (!(dt0 > 0.0) || !std::isfinite(dt0)) throw std::invalid_argument("integrate: dt0 must be positive");
  if (!(t_end > t0)) throw std::invalid_argument("integrate: t_end must exceed t0");
  if (u0.size() != sys.total_dim()) throw std::invalid_argument("integrate: u0 has wrong size");
  require_positive(u0, sys.dim, "initial state");

  const bool relaxing = cfg.relax.mode != RelaxMode::none;
  if (relaxing && eta == nullptr) {
    throw std::invalid_argument("integrate: relaxation requested without an entropy");
  }
  if (relaxing) cfg.relax.validate();
  const bool use_pid =
      cfg.adaptivity == Adaptivity::pid || cfg.adaptivity == Adaptivity::pid_and_relax;

  const double span = t_end - t0;
  ControllerState ctl;
  ctl.tol_rel = cfg.rtol;
  ctl.tol_abs = cfg.atol;
  ctl.dt_min = cfg.dt_min > 0.0 ? cfg.dt_min : 1e-12 * span;
  ctl.dt_max = cfg.dt_max > 0.0 ? cfg.dt_max : span;
  ctl.dt = ctl.clamp_dt(dt0);

  // Conservative relaxation aims at the initial entropy so per-step rounding
  // does not accumulate.
  std::optional<double> eta_target;
  if (relaxing && eta->regime == EntropyRegime::conservative) eta_target = (*eta)(u0);

  Trajectory traj;
  double t = t0;
  Vector u(u0.begin(), u0.end());
  traj.t.push_back(t);
  traj.u.push_back(u);

  // Fixed stepping keeps returning to dt0 after a forced reduction.
  const double dt_fixed = ctl.dt;
  const double t_eps = 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t0), std::abs(t_end));
  std::size_t attempts = 0;

  while (t_end - t > t_eps) {
    if (++attempts > cfg.max_steps) {
      traj.message = "max_steps exceeded at t=" + std::to_string(t);
      return traj;
    }
    double h = ctl.dt;
    bool truncated = false;
    if (t + h >= t_end) {
      h = t_end - t;
      truncated = true;
    }

    auto reject = [&](double new_dt, const std::string& why) {
      ++traj.rejected;
      if (cfg.on_reject) cfg.on_reject(t, h, why);
      if (ctl.dt <= ctl.dt_min && new_dt <= ctl.dt_min) {
        traj.message = "step size fell to dt_min at t=" + std::to_string(t) + ": " + why;
        return false;
      }
      ctl.dt = ctl.clamp_dt(new_dt);
      return true;
    };

    StepRecord rec;
    try {
      rec = step(sys, scheme, t, u, h);
    } catch (const DomainError& e) {
      if (!reject(0.5 * std::min(h, ctl.dt), e.what())) return traj;
      continue;
    } catch (const SingularMatrixError& e) {
      if (!reject(0.5 * std::min(h, ctl.dt), e.what())) return traj;
      continue;
    }
    if (cfg.on_base_step) cfg.on_base_step(rec);

    AcceptedStep acc;
    acc.t_n = t;
    acc.dt = h;

    if (use_pid) {
      ErrorEstimate est;
      try {
        est = estimate_error(sys, scheme, rec, cfg.rtol, cfg.atol);
      } catch (const DomainError& e) {
        if (!reject(0.5 * h, e.what())) return traj;
        continue;
      }
      acc.err_est = est.err;
      const double err = std::max(est.err, 1e-10);
      ControllerState trial = ctl;
      trial.dt = h;
      const double proposal = pid_update(trial, err, est.order_hat);
      if (est.err > 1.0) {
        if (!reject(pid_reject_dt(ctl, h, est.err, est.order_hat),
                    "error estimate above tolerance"))
          return traj;
        continue;
      }
      // Only accepted errors enter the PID history.
      ctl.eps_history = trial.eps_history;
      if (!truncated) ctl.dt = proposal;
    }

    RelaxOutcome rel;
    if (relaxing) {
      rel = relax_step(*eta, sys, scheme, rec, cfg.relax, eta_target);
      if (!rel.ok()) {
        if (!reject(relax_adapt(h, false, ctl.dt_min, ctl.dt_max), rel.message)) return traj;
        continue;
      }
    } else {
      rel.gamma = 1.0;
      rel.u_relaxed = rec.u_next;
      rel.t_relaxed = truncated ? t_end : t + h;
      rel.status = RelaxStatus::converged;
    }
    if (truncated && rel.gamma == 1.0) rel.t_relaxed = t_end;

    require_positive(rel.u_relaxed, sys.dim, "accepted state");
    acc.gamma = rel.gamma;
    acc.status = rel.status;
    acc.relax_iterations = rel.iterations;
    acc.t_next = rel.t_relaxed;
    if (eta != nullptr) acc.eta = relaxing ? rel.eta_after : (*eta)(rel.u_relaxed);
    if (cfg.keep_records) acc.record = std::move(rec);

    t = rel.t_relaxed;
    u = std::move(rel.u_relaxed);
    traj.steps.push_back(std::move(acc));
    if (cfg.keep_states) {
      traj.t.push_back(t);
      traj.u.push_back(u);
    }

    switch (cfg.adaptivity) {
      case Adaptivity::fixed:
        ctl.dt = dt_fixed;
        break;
      case Adaptivity::pid:
        break;
      case Adaptivity::relax_only:
      case Adaptivity::pid_and_relax:
        ctl.dt = relax_adapt(ctl.dt, true, ctl.dt_min, ctl.dt_max);
        break;
    }
  }
  if (!cfg.keep_states) {
    traj.t.push_back(t);
    traj.u.push_back(u);
  }
  traj.completed = true;
  return traj;
}

}  // namespace relax_mprk
