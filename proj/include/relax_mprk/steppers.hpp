#pragma once

#include <cfloat>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relax_mprk/dense_linear.hpp"
#include "relax_mprk/errors.hpp"
#include "relax_mprk/pdrs.hpp"
#include "relax_mprk/schemes.hpp"

namespace relax_mprk {

/// How the Patankar-weight denominators of the relaxed update depend on gamma.
///   frozen    - sigma_bar(gamma) = sigma
///   dense     - geometric interpolation between u^n and u^(2)
///   bootstrap - MPRK43I: sigma_bar(gamma) is itself a gamma-scaled MPRK22-type
///               update
/// dense and bootstrap coincide for the second-order families; for MPRK43I
/// both select the bootstrapped denominators.
enum class SigmaMode { frozen, dense, bootstrap };

inline std::string_view to_string(SigmaMode m) {
  switch (m) {
    case SigmaMode::frozen: return "frozen";
    case SigmaMode::dense: return "dense";
    case SigmaMode::bootstrap: return "bootstrap";
  }
  return "?";
}

inline SigmaMode default_sigma_mode(SchemeKind k) {
  switch (k) {
    case SchemeKind::MPRK22: return SigmaMode::frozen;
    case SchemeKind::MPRK43I: return SigmaMode::bootstrap;
    case SchemeKind::MPSSPRK2: return SigmaMode::dense;
  }
  return SigmaMode::frozen;
}

/// One base step of an MP scheme. Immutable once produced.
///
/// The Patankar part of u_next solves
///   M u = u_n + explicit_increment,
/// where M is the Patankar matrix of `stage_rates` weighted by
/// `update_weights`, with denominators `sigma` and scale dt.
struct StepRecord {
  double t_n = 0.0;
  double dt = 0.0;
  Vector u_n;
  std::vector<Vector> stages;
  std::vector<RateSample> stage_rates;
  Vector sigma;
  Vector u_next;
  /// sum_j b_j r^P(u^(j)).
  Vector rest_sum;
  std::vector<double> update_weights;
  /// dt * rest_sum for MPRK, alpha (u^(2) - u^n) for MPSSPRK2.
  Vector explicit_increment;

  std::size_t patankar_dim() const { return sigma.size(); }
};

namespace detail {

/// base^e for base > 0, evaluated as exp(e ln base).
inline double positive_pow(double base, double e) {
  return std::max(std::exp(e * std::log(std::max(base, DBL_MIN))), DBL_MIN);
}

/// a^(1-theta) b^theta componentwise over the first n entries.
inline Vector geometric_blend(std::span<const double> a, std::span<const double> b,
                              double theta, std::size_t n) {
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double la = std::log(std::max(a[i], DBL_MIN));
    const double lb = std::log(std::max(b[i], DBL_MIN));
    out[i] = std::max(std::exp((1.0 - theta) * la + theta * lb), DBL_MIN);
  }
  return out;
}

inline Vector head(std::span<const double> v, std::size_t n) {
  return Vector(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n));
}

inline Vector tail(std::span<const double> v, std::size_t n) {
  return Vector(v.begin() + static_cast<std::ptrdiff_t>(n), v.end());
}

inline Vector concat(const Vector& a, const Vector& b) {
  Vector out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace detail

/// Patankar matrix
///   m_kk    = 1 + h sum_j w_j loss_k(u^(j)) / denom_k
///   m_{k nu} =   - h sum_j w_j p_{k nu}(u^(j)) / denom_nu
/// Samples with zero weight are skipped.
inline SquareMatrix patankar_matrix(std::span<const RateSample> samples,
                                    std::span<const double> weights,
                                    std::span<const double> denom, double h) {
  const std::size_t d = denom.size();
  for (std::size_t k = 0; k < d; ++k) {
    if (!(denom[k] > 0.0)) {
      throw DomainError("Patankar denominator " + std::to_string(k) +
                        " is not strictly positive");
    }
  }
  SquareMatrix m = SquareMatrix::identity(d);
  for (std::size_t j = 0; j < samples.size() && j < weights.size(); ++j) {
    const double w = weights[j];
    if (w == 0.0) continue;
    const RateSample& s = samples[j];
    for (std::size_t k = 0; k < d; ++k) m(k, k) += h * w * s.loss[k] / denom[k];
    for (const auto& e : s.prod) m(e.k, e.nu) -= h * w * e.value / denom[e.nu];
  }
  return m;
}

/// h sum_j w_j (sum_nu p_{k nu} x_nu / denom_nu - loss_k x_k / denom_k),
/// i.e. (I - M) x for the Patankar matrix with the same arguments.
inline Vector patankar_apply(std::span<const RateSample> samples,
                             std::span<const double> weights,
                             std::span<const double> denom, double h,
                             std::span<const double> x) {
  const std::size_t d = denom.size();
  Vector y(d, 0.0);
  for (std::size_t j = 0; j < samples.size() && j < weights.size(); ++j) {
    const double w = weights[j];
    if (w == 0.0) continue;
    const RateSample& s = samples[j];
    for (std::size_t k = 0; k < d; ++k) y[k] -= h * w * s.loss[k] * x[k] / denom[k];
    for (const auto& e : s.prod) y[e.k] += h * w * e.value * x[e.nu] / denom[e.nu];
  }
  return y;
}

namespace detail {

/// u_n + h sum_j w_j r^P(u^(j)) over the Patankar part.
inline Vector rest_rhs(std::span<const double> u_n, std::span<const RateSample> samples,
                       std::span<const double> weights, double h, std::size_t d) {
  Vector rhs = head(u_n, d);
  for (std::size_t j = 0; j < samples.size() && j < weights.size(); ++j) {
    if (weights[j] == 0.0) continue;
    for (std::size_t k = 0; k < d; ++k) {
      rhs[k] += h * weights[j] * samples[j].rest_prod[k];
    }
  }
  return rhs;
}

/// Explicit Runge-Kutta combination of the unconstrained components.
inline Vector explicit_combination(std::span<const double> u_n,
                                   std::span<const RateSample> samples,
                                   std::span<const double> weights, double dt,
                                   std::size_t d) {
  Vector out = tail(u_n, d);
  for (std::size_t j = 0; j < samples.size() && j < weights.size(); ++j) {
    if (weights[j] == 0.0) continue;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += dt * weights[j] * samples[j].explicit_rhs[i];
    }
  }
  return out;
}

/// Weights applied to the rates of each stage in the Patankar update.
inline std::vector<double> update_weights(const MpScheme& scheme) {
  if (scheme.kind == SchemeKind::MPSSPRK2) return {scheme.beta20, scheme.beta21};
  return scheme.butcher.b;
}

}  // namespace detail

/// Update matrix M of the base step from rates evaluated at the given stages
/// (at t_n + c_i dt).
inline SquareMatrix assemble_update_matrix(const PdrsSystem& sys, const MpScheme& scheme,
                                           std::span<const Vector> stages,
                                           std::span<const double> sigma, double t_n,
                                           double dt) {
  require_positive(sigma, sigma.size(), "sigma");
  std::vector<RateSample> samples;
  samples.reserve(stages.size());
  for (std::size_t i = 0; i < stages.size(); ++i) {
    samples.push_back(sample_rates(sys, t_n + scheme.butcher.c[i] * dt, stages[i]));
  }
  const auto w = detail::update_weights(scheme);
  return patankar_matrix(samples, w, sigma, dt);
}

/// Update matrix rebuilt from the rates cached in a step record.
inline SquareMatrix update_matrix(const StepRecord& rec, double gamma = 1.0) {
  return patankar_matrix(rec.stage_rates, rec.update_weights, rec.sigma, gamma * rec.dt);
}

/// One step of the MP scheme from (t_n, u_n). Every stage, sigma and u^{n+1}
/// are strictly positive for any dt > 0.
inline StepRecord step(const PdrsSystem& sys, const MpScheme& scheme, double t_n,
                       std::span<const double> u_n, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw DomainError("step: dt must be positive and finite");
  }
  if (scheme.kind == SchemeKind::MPSSPRK2 && sys.has_rest()) {
    throw UnsupportedError(
        "mpssprk2 is implemented for conservative PDS only (system has rest terms)");
  }
  const std::size_t d = sys.dim;

  StepRecord rec;
  rec.t_n = t_n;
  rec.dt = dt;
  rec.u_n.assign(u_n.begin(), u_n.end());
  // Spans into stage_rates are taken below; no reallocation allowed.
  rec.stages.reserve(scheme.butcher.stages());
  rec.stage_rates.reserve(scheme.butcher.stages());
  rec.stages.push_back(rec.u_n);
  rec.stage_rates.push_back(sample_rates(sys, t_n, rec.u_n));

  const auto& tab = scheme.butcher;
  const Vector un_p = detail::head(rec.u_n, d);

  auto push_stage = [&](Vector stage_p, Vector stage_e, double c) {
    ensure_positive(stage_p, d, "stage");
    rec.stages.push_back(detail::concat(stage_p, stage_e));
    rec.stage_rates.push_back(sample_rates(sys, t_n + c * dt, rec.stages.back()));
  };

  const std::span<const RateSample> first(rec.stage_rates.data(), 1);

  switch (scheme.kind) {
    case SchemeKind::MPRK22:
    case SchemeKind::MPRK43I: {
      const double a21 = tab.a[1][0];
      const std::vector<double> w2{a21};
      SquareMatrix m2 = patankar_matrix(first, w2, un_p, dt);
      Vector u2 = lu_solve(std::move(m2), detail::rest_rhs(rec.u_n, first, w2, dt, d));
      push_stage(std::move(u2), detail::explicit_combination(rec.u_n, first, w2, dt, d),
                 tab.c[1]);

      if (scheme.kind == SchemeKind::MPRK43I) {
        const std::span<const RateSample> two(rec.stage_rates.data(), 2);
        const std::vector<double> w3{tab.a[2][0], tab.a[2][1]};
        const Vector pi3 = detail::geometric_blend(un_p, rec.stages[1], 1.0 / scheme.p, d);
        Vector u3 = lu_solve(patankar_matrix(two, w3, pi3, dt),
                             detail::rest_rhs(rec.u_n, two, w3, dt, d));
        push_stage(std::move(u3), detail::explicit_combination(rec.u_n, two, w3, dt, d),
                   tab.c[2]);

        const std::vector<double> ws{scheme.sigma_beta1, scheme.sigma_beta2};
        const Vector q = detail::geometric_blend(un_p, rec.stages[1], 1.0 / a21, d);
        rec.sigma = lu_solve(patankar_matrix(two, ws, q, dt),
                             detail::rest_rhs(rec.u_n, two, ws, dt, d));
      } else {
        rec.sigma = detail::geometric_blend(un_p, rec.stages[1], 1.0 / scheme.alpha, d);
      }

      rec.update_weights = tab.b;
      rec.rest_sum.assign(d, 0.0);
      for (std::size_t j = 0; j < rec.stage_rates.size(); ++j) {
        for (std::size_t k = 0; k < d; ++k) {
          rec.rest_sum[k] += tab.b[j] * rec.stage_rates[j].rest_prod[k];
        }
      }
      rec.explicit_increment.resize(d);
      for (std::size_t k = 0; k < d; ++k) rec.explicit_increment[k] = dt * rec.rest_sum[k];
      break;
    }
    case SchemeKind::MPSSPRK2: {
      const std::vector<double> w2{scheme.beta};
      Vector u2 = lu_solve(patankar_matrix(first, w2, un_p, dt), un_p);
      push_stage(std::move(u2), detail::explicit_combination(rec.u_n, first, w2, dt, d),
                 tab.c[1]);
      rec.sigma = detail::geometric_blend(un_p, rec.stages[1], scheme.s, d);
      rec.update_weights = {scheme.beta20, scheme.beta21};
      rec.rest_sum.assign(d, 0.0);
      rec.explicit_increment.resize(d);
      for (std::size_t k = 0; k < d; ++k) {
        rec.explicit_increment[k] = scheme.alpha * (rec.stages[1][k] - un_p[k]);
      }
      break;
    }
  }
  ensure_positive(rec.sigma, d, "sigma");

  Vector rhs = un_p;
  for (std::size_t k = 0; k < d; ++k) rhs[k] += rec.explicit_increment[k];
  Vector next_p = lu_solve(update_matrix(rec), rhs);
  ensure_positive(next_p, d, "u^{n+1}");
  rec.u_next = detail::concat(
      next_p, detail::explicit_combination(rec.u_n, rec.stage_rates, tab.b, dt, d));
  return rec;
}

/// sigma_bar(gamma) and its gamma-derivative over the Patankar part.
struct SigmaBar {
  Vector value;
  Vector derivative;
};

namespace detail {

inline SigmaMode effective_mode(const MpScheme& scheme, SigmaMode mode) {
  if (mode == SigmaMode::frozen) return mode;
  return scheme.kind == SchemeKind::MPRK43I ? SigmaMode::bootstrap : SigmaMode::dense;
}

}  // namespace detail

inline SigmaBar sigma_bar(const MpScheme& scheme, const StepRecord& rec, double gamma,
                          SigmaMode mode) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw DomainError("sigma_bar: gamma must be non-negative");
  }
  const std::size_t d = rec.patankar_dim();
  const Vector un = detail::head(rec.u_n, d);
  const Vector& u2 = rec.stages.at(1);

  switch (detail::effective_mode(scheme, mode)) {
    case SigmaMode::frozen:
      return {rec.sigma, Vector(d, 0.0)};
    case SigmaMode::dense: {
      const double rate = scheme.kind == SchemeKind::MPSSPRK2 ? scheme.s : 1.0 / scheme.alpha;
      SigmaBar out{detail::geometric_blend(un, u2, gamma * rate, d), Vector(d)};
      for (std::size_t k = 0; k < d; ++k) {
        out.derivative[k] = out.value[k] * rate * std::log(u2[k] / un[k]);
      }
      return out;
    }
    case SigmaMode::bootstrap: {
      // Inner gamma-scaled MPRK22(a21)-type update with dense denominators.
      const double a21 = scheme.butcher.a[1][0];
      const std::span<const RateSample> two(rec.stage_rates.data(), 2);
      const std::vector<double> ws{scheme.sigma_beta1, scheme.sigma_beta2};
      const double h = gamma * rec.dt;
      const Vector q = detail::geometric_blend(un, u2, gamma / a21, d);
      Vector dq(d);
      for (std::size_t k = 0; k < d; ++k) dq[k] = q[k] * std::log(u2[k] / un[k]) / a21;

      SquareMatrix s_gamma = patankar_matrix(two, ws, q, h);
      Vector value = lu_solve(s_gamma, detail::rest_rhs(rec.u_n, two, ws, h, d));
      ensure_positive(value, d, "bootstrapped sigma");

      // S_gamma value' = (value - u^n)/gamma + (S_gamma - I) v,  v = value * q' / q
      Vector v(d);
      for (std::size_t k = 0; k < d; ++k) v[k] = value[k] * dq[k] / q[k];
      Vector rhs = patankar_apply(two, ws, q, rec.dt, value);
      const Vector rest = detail::rest_rhs(Vector(d, 0.0), two, ws, rec.dt, d);
      const Vector corr = patankar_apply(two, ws, q, h, v);
      for (std::size_t k = 0; k < d; ++k) rhs[k] += rest[k] - corr[k];
      Vector derivative = lu_solve(std::move(s_gamma), rhs);
      return {std::move(value), std::move(derivative)};
    }
  }
  return {};
}

/// Positivity-preserving relaxed update u^{n+gamma}: solves
///   M_gamma u = u^n + gamma * explicit_increment
/// with M_gamma the Patankar matrix scaled by gamma dt and denominators
/// sigma_bar(gamma). Explicit components move affinely. gamma = 1 reproduces
/// u_next exactly.
inline Vector gamma_update(const MpScheme& scheme, const StepRecord& rec, double gamma,
                           SigmaMode mode) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw DomainError("gamma_update: gamma must be non-negative");
  }
  const std::size_t d = rec.patankar_dim();
  if (gamma == 0.0) return rec.u_n;

  const SigmaBar sb = sigma_bar(scheme, rec, gamma, mode);
  Vector rhs = detail::head(rec.u_n, d);
  for (std::size_t k = 0; k < d; ++k) rhs[k] += gamma * rec.explicit_increment[k];
  Vector u_p = lu_solve(
      patankar_matrix(rec.stage_rates, rec.update_weights, sb.value, gamma * rec.dt), rhs);
  // Only reachable for MPSSPRK2 with gamma * alpha > 1, where the explicit part
  // (1 - gamma alpha) u^n + gamma alpha u^(2) may leave the positive cone.
  ensure_positive(u_p, d, "u^{n+gamma}");

  Vector u_e = detail::tail(rec.u_n, d);
  for (std::size_t i = 0; i < u_e.size(); ++i) {
    u_e[i] = (1.0 - gamma) * rec.u_n[d + i] + gamma * rec.u_next[d + i];
  }
  return detail::concat(u_p, u_e);
}

/// d u^{n+gamma} / d gamma from
///   M_gamma x = (u^{n+gamma} - u^n)/gamma + (M_gamma - I) v,
///   v = u^{n+gamma} * sigma_bar' / sigma_bar,
/// where (u^{n+gamma} - u^n)/gamma is evaluated as
/// explicit_increment + (I - M_1-scaled) u^{n+gamma} so gamma = 0 is harmless.
inline Vector gamma_update_derivative(const MpScheme& scheme, const StepRecord& rec,
                                      double gamma, SigmaMode mode,
                                      std::span<const double> u_gamma) {
  const std::size_t d = rec.patankar_dim();
  const SigmaBar sb = sigma_bar(scheme, rec, gamma, mode);
  const double h = gamma * rec.dt;

  Vector rhs = patankar_apply(rec.stage_rates, rec.update_weights, sb.value, rec.dt, u_gamma);
  for (std::size_t k = 0; k < d; ++k) rhs[k] += rec.explicit_increment[k];
  if (detail::effective_mode(scheme, mode) != SigmaMode::frozen) {
    Vector v(d);
    for (std::size_t k = 0; k < d; ++k) v[k] = u_gamma[k] * sb.derivative[k] / sb.value[k];
    const Vector corr = patankar_apply(rec.stage_rates, rec.update_weights, sb.value, h, v);
    for (std::size_t k = 0; k < d; ++k) rhs[k] -= corr[k];
  }
  Vector x = lu_solve(patankar_matrix(rec.stage_rates, rec.update_weights, sb.value, h), rhs);
  for (std::size_t i = d; i < rec.u_n.size(); ++i) x.push_back(rec.u_next[i] - rec.u_n[i]);
  return x;
}

}  // namespace relax_mprk
