#pragma once

#include <algorithm>
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
#include "relax_mprk/schemes.hpp"
#include "relax_mprk/steppers.hpp"

namespace relax_mprk {

enum class EntropyRegime { conservative, dissipative };

/// Nonlinear functional to be conserved or dissipated. `eval` must throw
/// DomainError (or return a non-finite value) outside its domain.
struct EntropyFunctional {
  std::string name;
  std::function<double(StateView)> eval;
  std::function<Vector(StateView)> grad;
  EntropyRegime regime = EntropyRegime::conservative;
  /// Non-decreasing in every argument; required by geometric relaxation.
  bool monotone_nondecreasing = false;
  bool convex = true;

  double operator()(StateView u) const {
    const double v = eval(u);
    if (!std::isfinite(v)) throw DomainError("entropy " + name + " is not finite here");
    return v;
  }
};

enum class RelaxMode { none, clamped_dissipative, geometric, implicit };
enum class ScalarSolver { newton, regula_falsi, bisection, secant };

inline std::string_view to_string(RelaxMode m) {
  switch (m) {
    case RelaxMode::none: return "none";
    case RelaxMode::clamped_dissipative: return "clamped";
    case RelaxMode::geometric: return "geometric";
    case RelaxMode::implicit: return "implicit";
  }
  return "?";
}

inline std::string_view to_string(ScalarSolver s) {
  switch (s) {
    case ScalarSolver::newton: return "newton";
    case ScalarSolver::regula_falsi: return "regula_falsi";
    case ScalarSolver::bisection: return "bisection";
    case ScalarSolver::secant: return "secant";
  }
  return "?";
}

struct RelaxConfig {
  RelaxMode mode = RelaxMode::none;
  ScalarSolver solver = ScalarSolver::newton;
  double gamma_tol = 1e-10;
  double gamma_min = 1e-6;
  double gamma_max = 10.0;
  int max_iters = 50;
  SigmaMode sigma_mode = SigmaMode::frozen;
  /// Permit geometric relaxation for entropies that are not monotone.
  bool allow_nonmonotone_geometric = false;

  void validate() const {
    if (!(gamma_min > 0.0 && gamma_min < 1.0 && gamma_max > 1.0)) {
      throw std::invalid_argument("RelaxConfig: need 0 < gamma_min < 1 < gamma_max");
    }
    if (!(gamma_tol > 0.0) || max_iters <= 0) {
      throw std::invalid_argument("RelaxConfig: tolerances must be positive");
    }
  }
};

enum class RelaxStatus { converged, clamped_to_one, failed };

inline std::string_view to_string(RelaxStatus s) {
  switch (s) {
    case RelaxStatus::converged: return "converged";
    case RelaxStatus::clamped_to_one: return "clamped_to_one";
    case RelaxStatus::failed: return "failed";
  }
  return "?";
}

struct RelaxOutcome {
  double gamma = 1.0;
  Vector u_relaxed;
  double t_relaxed = 0.0;
  double eta_after = 0.0;
  int iterations = 0;
  RelaxStatus status = RelaxStatus::converged;
  std::string message;

  bool ok() const { return status != RelaxStatus::failed; }
};

/// eta_new estimate: eta(u^n) in the conservative regime, otherwise the
/// quadrature eta(u^n) + dt sum_j b_j (eta' f)(u^(j)) over the stored stages.
inline double entropy_estimate(const EntropyFunctional& eta, const StepRecord& rec,
                               const MpScheme& scheme) {
  const double eta_old = eta(rec.u_n);
  if (eta.regime == EntropyRegime::conservative) return eta_old;
  double acc = 0.0;
  for (std::size_t j = 0; j < rec.stages.size(); ++j) {
    const double b = scheme.butcher.b[j];
    if (b == 0.0) continue;
    const Vector f = rhs_from_sample(rec.stage_rates[j]);
    acc += b * dot(eta.grad(rec.stages[j]), f);
  }
  return eta_old + rec.dt * acc;
}

/// Overload matching the step-record-free call shape; the system is only
/// used for the stored rates, so it is not consulted.
inline double entropy_estimate(const EntropyFunctional& eta, const PdrsSystem&,
                               const StepRecord& rec, const MpScheme& scheme) {
  return entropy_estimate(eta, rec, scheme);
}

/// Residual with optional derivative.
struct ResidualValue {
  double value = 0.0;
  double derivative = 0.0;
};

/// r(gamma) = eta(u_old + gamma (u_new - u_old)) - (eta_old + gamma (eta_est - eta_old)).
inline ResidualValue residual_classical(const EntropyFunctional& eta,
                                        std::span<const double> u_old,
                                        std::span<const double> u_new, double eta_old,
                                        double eta_est, double gamma,
                                        bool with_derivative = false) {
  Vector point(u_old.size());
  Vector dir(u_old.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    dir[i] = u_new[i] - u_old[i];
    point[i] = u_old[i] + gamma * dir[i];
  }
  ResidualValue r;
  r.value = eta(point) - (eta_old + gamma * (eta_est - eta_old));
  if (with_derivative) r.derivative = dot(eta.grad(point), dir) - (eta_est - eta_old);
  return r;
}

/// u_new^gamma u_old^(1-gamma) on the first `positive_dim` components, affine
/// on the rest.
inline Vector geometric_point(std::span<const double> u_old, std::span<const double> u_new,
                              double gamma, std::size_t positive_dim) {
  Vector point = detail::geometric_blend(u_old, u_new, gamma, positive_dim);
  for (std::size_t i = positive_dim; i < u_old.size(); ++i) {
    point.push_back((1.0 - gamma) * u_old[i] + gamma * u_new[i]);
  }
  return point;
}

/// r(gamma) = eta(u_new^gamma u_old^(1-gamma)) - eta_old.
inline ResidualValue residual_geometric(const EntropyFunctional& eta,
                                        std::span<const double> u_old,
                                        std::span<const double> u_new, double eta_old,
                                        double gamma, bool with_derivative = false,
                                        std::optional<std::size_t> positive_dim = {}) {
  const std::size_t pd = positive_dim.value_or(u_old.size());
  require_positive(u_old, pd, "geometric relaxation (u_old)");
  require_positive(u_new, pd, "geometric relaxation (u_new)");
  const Vector point = geometric_point(u_old, u_new, gamma, pd);
  ResidualValue r;
  r.value = eta(point) - eta_old;
  if (with_derivative) {
    Vector dir(point.size());
    for (std::size_t i = 0; i < pd; ++i) dir[i] = point[i] * std::log(u_new[i] / u_old[i]);
    for (std::size_t i = pd; i < point.size(); ++i) dir[i] = u_new[i] - u_old[i];
    r.derivative = dot(eta.grad(point), dir);
  }
  return r;
}

/// r(gamma) = eta(u^{n+gamma}) - eta_old with u^{n+gamma} from gamma_update,
/// and r'(gamma) = eta'(u^{n+gamma}) . du^{n+gamma}/dgamma.
inline ResidualValue residual_implicit(const EntropyFunctional& eta, const MpScheme& scheme,
                                       const StepRecord& rec, double eta_old, double gamma,
                                       SigmaMode mode, bool with_derivative = true) {
  if (!(gamma > 0.0)) throw DomainError("residual_implicit: gamma must be positive");
  const Vector u = gamma_update(scheme, rec, gamma, mode);
  ResidualValue r;
  r.value = eta(u) - eta_old;
  if (with_derivative) {
    r.derivative = dot(eta.grad(u), gamma_update_derivative(scheme, rec, gamma, mode, u));
  }
  return r;
}

struct ScalarSolveResult {
  double gamma = 1.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

using ResidualFunction = std::function<ResidualValue(double gamma, bool with_derivative)>;

namespace detail {

struct Probe {
  double gamma;
  double value;
};

inline std::optional<double> try_eval(const ResidualFunction& r, double gamma, int& evals) {
  ++evals;
  try {
    const double v = r(gamma, false).value;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const DomainError&) {
    return std::nullopt;
  } catch (const SingularMatrixError&) {
    return std::nullopt;
  }
}

/// Below this the residual is rounding noise of eta itself.
inline double resolution_floor(double scale) {
  return 2.0 * std::numeric_limits<double>::epsilon() * std::abs(scale);
}

inline bool gamma_resolved(double a, double b) {
  return std::abs(b - a) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(b));
}

inline ScalarSolveResult solve_newton(const ResidualFunction& r, const RelaxConfig& cfg,
                                      double floor) {
  ScalarSolveResult out;
  double gamma = 1.0;
  double prev = 1.0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    ResidualValue rv;
    bool ok = false;
    // Domain errors pull the iterate back toward the last admissible point.
    for (int back = 0; back < 30 && !ok; ++back) {
      ++out.iterations;
      try {
        rv = r(gamma, true);
        ok = std::isfinite(rv.value) && std::isfinite(rv.derivative);
      } catch (const DomainError&) {
      } catch (const SingularMatrixError&) {
      }
      if (!ok) {
        if (it == 0) break;
        gamma = 0.5 * (gamma + prev);
      }
    }
    if (!ok) {
      out.message = "newton: residual not evaluable near gamma=" + std::to_string(gamma);
      return out;
    }
    out.gamma = gamma;
    out.residual = rv.value;
    if (std::abs(rv.value) <= floor) {
      out.converged = true;
      return out;
    }
    if (rv.derivative == 0.0) {
      out.message = "newton: zero derivative";
      return out;
    }
    prev = gamma;
    gamma -= rv.value / rv.derivative;
    if (!(gamma > cfg.gamma_min && gamma <= cfg.gamma_max)) {
      out.gamma = gamma;
      out.message = "newton: gamma=" + std::to_string(gamma) + " left (gamma_min, gamma_max]";
      return out;
    }
  }
  out.message = "newton: max_iters exceeded";
  return out;
}

/// Sign-change search outward from gamma = 1 on geometric offsets. A probe
/// where the residual is not evaluable caps that side; further probes on it
/// bisect toward the last admissible point.
inline std::optional<std::pair<Probe, Probe>> find_bracket(const ResidualFunction& r,
                                                           const RelaxConfig& cfg,
                                                           Probe center, int& evals) {
  constexpr int kPerSide = 9;
  constexpr int kMaxHalvings = 30;
  constexpr double kFirstOffset = 1e-6;

  struct Side {
    double limit = 1.0;  // gamma_max or gamma_min
    double ratio = 1.0;
    double offset = kFirstOffset;
    int grid_left = kPerSide;
    int halvings_left = kMaxHalvings;
    bool capped = false;
    double cap = 0.0;  // nearest non-evaluable gamma
    Probe last;
    bool open = true;
  };
  const double up_span = cfg.gamma_max - 1.0;
  const double down_span = 1.0 / cfg.gamma_min - 1.0;
  Side up, down;
  up.limit = cfg.gamma_max;
  up.ratio = std::pow(up_span / kFirstOffset, 1.0 / (kPerSide - 1));
  down.limit = cfg.gamma_min;
  down.ratio = std::pow(down_span / kFirstOffset, 1.0 / (kPerSide - 1));
  up.last = down.last = center;
  up.open = up_span > kFirstOffset;

  // Returns the bracket ordered by gamma when the probe changes sign.
  auto advance = [&](Side& s, bool upward) -> std::optional<std::pair<Probe, Probe>> {
    double g;
    if (s.capped) {
      if (s.halvings_left-- <= 0 || gamma_resolved(s.last.gamma, s.cap)) {
        s.open = false;
        return std::nullopt;
      }
      g = 0.5 * (s.last.gamma + s.cap);
    } else {
      if (s.grid_left-- <= 0) {
        s.open = false;
        return std::nullopt;
      }
      g = upward ? std::min(s.limit, 1.0 + s.offset) : std::max(s.limit, 1.0 / (1.0 + s.offset));
      s.offset *= s.ratio;
    }
    const auto v = try_eval(r, g, evals);
    if (!v) {
      s.capped = true;
      s.cap = g;
      return std::nullopt;
    }
    const Probe p{g, *v};
    if ((p.value > 0) != (s.last.value > 0) || p.value == 0.0) {
      return upward ? std::make_pair(s.last, p) : std::make_pair(p, s.last);
    }
    s.last = p;
    if (!s.capped && g == s.limit) s.open = false;
    return std::nullopt;
  };

  while (up.open || down.open) {
    if (up.open) {
      if (auto b = advance(up, true)) return b;
    }
    if (down.open) {
      if (auto b = advance(down, false)) return b;
    }
  }
  return std::nullopt;
}

inline ScalarSolveResult solve_bracketed(const ResidualFunction& r, const RelaxConfig& cfg,
                                         double floor) {
  ScalarSolveResult out;
  int evals = 0;
  const auto c = try_eval(r, 1.0, evals);
  if (!c) {
    out.iterations = evals;
    out.message = "residual not evaluable at gamma=1";
    return out;
  }
  if (std::abs(*c) <= floor) {
    out.iterations = evals;
    out.gamma = 1.0;
    out.residual = *c;
    out.converged = true;
    return out;
  }
  const auto bracket = find_bracket(r, cfg, {1.0, *c}, evals);
  if (!bracket) {
    out.iterations = evals;
    out.message = "no sign change found in [gamma_min, gamma_max]";
    return out;
  }
  Probe a = bracket->first;
  Probe b = bracket->second;
  for (const Probe& p : {a, b}) {
    if (std::abs(p.value) <= floor) {
      out.iterations = evals;
      out.gamma = p.gamma;
      out.residual = p.value;
      out.converged = true;
      return out;
    }
  }

  int side = 0;  // Illinois bookkeeping: which end was retained last
  Probe x0 = a;
  Probe x1 = b;
  for (int it = 0; it < cfg.max_iters; ++it) {
    double g = 0.0;
    switch (cfg.solver) {
      case ScalarSolver::bisection:
        g = 0.5 * (a.gamma + b.gamma);
        break;
      case ScalarSolver::regula_falsi:
        g = (a.gamma * b.value - b.gamma * a.value) / (b.value - a.value);
        if (!(g > a.gamma && g < b.gamma)) g = 0.5 * (a.gamma + b.gamma);
        break;
      case ScalarSolver::secant:
        if (x1.value == x0.value) {
          out.message = "secant: flat secant";
          out.iterations = evals;
          return out;
        }
        g = x1.gamma - x1.value * (x1.gamma - x0.gamma) / (x1.value - x0.value);
        if (!(g > cfg.gamma_min && g <= cfg.gamma_max)) {
          out.gamma = g;
          out.message = "secant: gamma left (gamma_min, gamma_max]";
          out.iterations = evals;
          return out;
        }
        break;
      case ScalarSolver::newton:
        break;
    }
    const auto v = try_eval(r, g, evals);
    if (!v) {
      out.message = "residual not evaluable at gamma=" + std::to_string(g);
      out.iterations = evals;
      return out;
    }
    const Probe p{g, *v};
    out.gamma = g;
    out.residual = *v;
    if (std::abs(*v) <= floor) {
      out.converged = true;
      out.iterations = evals;
      return out;
    }
    if (cfg.solver == ScalarSolver::secant) {
      x0 = x1;
      x1 = p;
      continue;
    }
    if ((p.value > 0) == (a.value > 0)) {
      a = p;
      if (cfg.solver == ScalarSolver::regula_falsi && side == -1) b.value *= 0.5;
      side = -1;
    } else {
      b = p;
      if (cfg.solver == ScalarSolver::regula_falsi && side == 1) a.value *= 0.5;
      side = 1;
    }
    if (gamma_resolved(a.gamma, b.gamma)) {
      const Probe& best = std::abs(a.value) <= std::abs(b.value) ? a : b;
      out.iterations = evals;
      out.gamma = best.gamma;
      out.residual = best.value;
      out.converged = std::abs(best.value) <= floor;
      if (!out.converged) out.message = "bracket collapsed above tolerance";
      return out;
    }
  }
  out.message = std::string(to_string(cfg.solver)) + ": max_iters exceeded";
  out.iterations = evals;
  return out;
}

}  // namespace detail

/// Finds gamma with |r(gamma)| <= gamma_tol. Newton starts at 1 and uses the
/// analytic derivative; the other solvers bracket a sign change outward from
/// gamma = 1 first. Domain errors inside the residual exclude the offending
/// region instead of aborting.
///
/// `eta_scale` is the magnitude of the entropy values being differenced. The
/// acceptance threshold is max(gamma_tol, 2 ulp of eta_scale), since residuals
/// below the rounding resolution of eta cannot be resolved.
inline ScalarSolveResult solve_scalar(const ResidualFunction& r, const RelaxConfig& cfg,
                                      double eta_scale = 0.0) {
  cfg.validate();
  const double floor = std::max(cfg.gamma_tol, detail::resolution_floor(eta_scale));
  ScalarSolveResult out = cfg.solver == ScalarSolver::newton
                              ? detail::solve_newton(r, cfg, floor)
                              : detail::solve_bracketed(r, cfg, floor);
  if (out.converged && !(out.gamma > cfg.gamma_min && out.gamma <= cfg.gamma_max)) {
    out.converged = false;
    out.message = "root gamma=" + std::to_string(out.gamma) +
                  " outside (gamma_min, gamma_max]";
  }
  return out;
}

/// Relaxes one base step.
///
/// `eta_target` overrides eta(u^n) as the value to conserve (conservative
/// regime) or the starting value of the estimate (dissipative regime).
inline RelaxOutcome relax_step(const EntropyFunctional& eta, const PdrsSystem& sys,
                               const MpScheme& scheme, const StepRecord& rec,
                               const RelaxConfig& cfg,
                               std::optional<double> eta_target = {}) {
  RelaxOutcome out;
  const double eta_n = eta(rec.u_n);
  const double eta_old = eta_target.value_or(eta_n);

  auto finish = [&](double gamma, Vector u, RelaxStatus st) {
    out.gamma = gamma;
    out.u_relaxed = std::move(u);
    out.t_relaxed = rec.t_n + gamma * rec.dt;
    out.eta_after = eta(out.u_relaxed);
    out.status = st;
    return out;
  };

  if (cfg.mode == RelaxMode::none) return finish(1.0, rec.u_next, RelaxStatus::converged);
  cfg.validate();

  ResidualFunction residual;
  switch (cfg.mode) {
    case RelaxMode::none:
      break;
    case RelaxMode::clamped_dissipative: {
      const double est = entropy_estimate(eta, rec, scheme) + (eta_old - eta_n);
      residual = [&, est](double g, bool deriv) {
        return residual_classical(eta, rec.u_n, rec.u_next, eta_old, est, g, deriv);
      };
      break;
    }
    case RelaxMode::geometric: {
      if (!eta.monotone_nondecreasing) {
        if (!cfg.allow_nonmonotone_geometric) {
          throw std::invalid_argument("geometric relaxation needs an entropy that is "
                                      "non-decreasing in each argument (" + eta.name + ")");
        }
        out.message = "geometric relaxation with non-monotone entropy (override)";
      }
      residual = [&](double g, bool deriv) {
        return residual_geometric(eta, rec.u_n, rec.u_next, eta_old, g, deriv, sys.dim);
      };
      break;
    }
    case RelaxMode::implicit:
      residual = [&](double g, bool deriv) {
        return residual_implicit(eta, scheme, rec, eta_old, g, cfg.sigma_mode, deriv);
      };
      break;
  }

  // Geometric and implicit residuals conserve eta_old. For a dissipative
  // entropy that target has no positive root, so follow the estimate line
  // eta_old + gamma (eta_est - eta_old) instead, as the classical residual does.
  if (eta.regime == EntropyRegime::dissipative &&
      (cfg.mode == RelaxMode::geometric || cfg.mode == RelaxMode::implicit)) {
    const double slope = entropy_estimate(eta, rec, scheme) - eta_n;
    residual = [base = std::move(residual), slope](double g, bool deriv) {
      ResidualValue r = base(g, deriv);
      r.value -= g * slope;
      r.derivative -= slope;
      return r;
    };
  }

  const ScalarSolveResult sol = solve_scalar(residual, cfg, std::abs(eta_old));
  out.iterations = sol.iterations;
  if (!sol.converged) {
    out.gamma = sol.gamma;
    out.status = RelaxStatus::failed;
    out.message = sol.message;
    out.t_relaxed = rec.t_n;
    return out;
  }

  const double g = sol.gamma;
  switch (cfg.mode) {
    case RelaxMode::clamped_dissipative: {
      if (g >= 1.0) {
        return finish(1.0, rec.u_next,
                      g > 1.0 ? RelaxStatus::clamped_to_one : RelaxStatus::converged);
      }
      Vector u(rec.u_n.size());
      for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = (1.0 - g) * rec.u_n[i] + g * rec.u_next[i];
      }
      return finish(g, std::move(u), RelaxStatus::converged);
    }
    case RelaxMode::geometric:
      return finish(g, g == 1.0 ? rec.u_next : geometric_point(rec.u_n, rec.u_next, g, sys.dim),
                    RelaxStatus::converged);
    case RelaxMode::implicit:
      return finish(g, gamma_update(scheme, rec, g, cfg.sigma_mode), RelaxStatus::converged);
    case RelaxMode::none:
      break;
  }
  return out;
}

}  // namespace relax_mprk
