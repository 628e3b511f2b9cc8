#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "relax_mprk/errors.hpp"

namespace relax_mprk {

enum class SchemeKind { MPRK22, MPRK43I, MPSSPRK2 };

inline std::string_view to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::MPRK22: return "mprk22";
    case SchemeKind::MPRK43I: return "mprk43i";
    case SchemeKind::MPSSPRK2: return "mpssprk2";
  }
  return "?";
}

/// Explicit Runge-Kutta tableau with strictly lower triangular A.
struct ButcherTableau {
  std::vector<std::vector<double>> a;
  std::vector<double> b;
  std::vector<double> c;

  std::size_t stages() const { return b.size(); }
};

/// A member of one of the modified Patankar families together with every
/// derived constant the stepper needs.
struct MpScheme {
  SchemeKind kind = SchemeKind::MPRK22;
  double alpha = 1.0;
  double beta = 0.0;
  ButcherTableau butcher;
  int order = 2;

  // MPRK43I: weights of the sigma system and the stage-3 PWD exponent p.
  double sigma_beta1 = 0.0;
  double sigma_beta2 = 0.0;
  double p = 0.0;

  // MPSSPRK2: Shu-Osher weights and the PWD exponent s.
  double beta20 = 0.0;
  double beta21 = 0.0;
  double s = 0.0;

  std::string name() const {
    std::ostringstream os;
    os << to_string(kind) << "(" << alpha;
    if (kind != SchemeKind::MPRK22) os << "," << beta;
    os << ")";
    return os.str();
  }
};

namespace detail {

[[noreturn]] inline void reject(const std::string& scheme, const std::string& why) {
  throw ValidationError(scheme + ": " + why);
}

}  // namespace detail

/// Builds MPRK22(alpha), MPRK43I(alpha, beta) or MPSSPRK2(alpha, beta).
///
/// MPRK22 requires alpha >= 1/2. MPSSPRK2 requires 0 <= alpha <= 1, beta > 0
/// and alpha*beta + 1/(2 beta) <= 1. MPRK43I requires a non-negative Butcher
/// array (alpha != 2/3, beta != alpha) and non-negative sigma-system weights,
/// i.e. alpha >= 1/2.
inline MpScheme build_scheme(SchemeKind kind, double alpha, double beta = 0.0) {
  MpScheme m;
  m.kind = kind;
  m.alpha = alpha;
  m.beta = beta;
  if (!std::isfinite(alpha) || !std::isfinite(beta)) {
    detail::reject(std::string(to_string(kind)), "parameters must be finite");
  }

  switch (kind) {
    case SchemeKind::MPRK22: {
      if (!(alpha >= 0.5)) detail::reject("mprk22", "violates alpha >= 1/2");
      const double b2 = 1.0 / (2.0 * alpha);
      m.beta = 0.0;
      m.butcher = {{{}, {alpha}}, {1.0 - b2, b2}, {0.0, alpha}};
      m.order = 2;
      break;
    }
    case SchemeKind::MPRK43I: {
      if (!(alpha > 0.0) || !(beta > 0.0)) {
        detail::reject("mprk43i", "violates alpha > 0 and beta > 0");
      }
      if (std::abs(2.0 - 3.0 * alpha) < 1e-14) {
        detail::reject("mprk43i", "violates alpha != 2/3");
      }
      if (std::abs(beta - alpha) < 1e-14) {
        detail::reject("mprk43i", "violates beta != alpha");
      }
      if (!(alpha >= 0.5)) {
        detail::reject("mprk43i",
                       "violates alpha >= 1/2 (sigma weight 1 - 1/(2 alpha) < 0)");
      }
      const double den = alpha * (2.0 - 3.0 * alpha);
      const double a21 = alpha;
      const double a31 = (3.0 * alpha * beta * (1.0 - alpha) - beta * beta) / den;
      const double a32 = beta * (beta - alpha) / den;
      const double b1 = 1.0 + (2.0 - 3.0 * (alpha + beta)) / (6.0 * alpha * beta);
      const double b2 = (3.0 * beta - 2.0) / (6.0 * alpha * (beta - alpha));
      const double b3 = (2.0 - 3.0 * alpha) / (6.0 * beta * (beta - alpha));
      constexpr double kNegTol = -1e-14;
      if (a31 < kNegTol || a32 < kNegTol || b1 < kNegTol || b2 < kNegTol ||
          b3 < kNegTol) {
        std::ostringstream os;
        os << "violates non-negativity of the Butcher array (a31=" << a31
           << ", a32=" << a32 << ", b=(" << b1 << "," << b2 << "," << b3 << "))";
        detail::reject("mprk43i", os.str());
      }
      auto clip = [](double v) { return v < 0.0 ? 0.0 : v; };
      m.butcher = {{{}, {a21}, {clip(a31), clip(a32)}},
                   {clip(b1), clip(b2), clip(b3)},
                   {0.0, a21, beta}};
      m.p = 3.0 * a21 * (a31 + a32) * b3;
      if (!(m.p > 0.0)) detail::reject("mprk43i", "violates p = 3 a21 (a31+a32) b3 > 0");
      m.sigma_beta2 = 1.0 / (2.0 * a21);
      m.sigma_beta1 = 1.0 - m.sigma_beta2;
      m.order = 3;
      break;
    }
    case SchemeKind::MPSSPRK2: {
      if (!(alpha >= 0.0 && alpha <= 1.0)) {
        detail::reject("mpssprk2", "violates 0 <= alpha <= 1");
      }
      if (!(beta > 0.0)) detail::reject("mpssprk2", "violates beta > 0");
      const double lhs = alpha * beta + 1.0 / (2.0 * beta);
      if (lhs > 1.0 + 1e-14) {
        std::ostringstream os;
        os << "violates alpha*beta + 1/(2 beta) <= 1 (got " << lhs << ")";
        detail::reject("mpssprk2", os.str());
      }
      if (std::abs(1.0 - alpha * beta) < 1e-14) {
        detail::reject("mpssprk2", "violates alpha*beta != 1");
      }
      m.beta20 = std::max(0.0, 1.0 - 1.0 / (2.0 * beta) - alpha * beta);
      m.beta21 = 1.0 / (2.0 * beta);
      m.s = (1.0 - alpha * beta + alpha * beta * beta) / (beta * (1.0 - alpha * beta));
      // Equivalent Butcher form of the Shu-Osher representation.
      m.butcher = {{{}, {beta}}, {alpha * beta + m.beta20, m.beta21}, {0.0, beta}};
      m.order = 2;
      break;
    }
  }
  return m;
}

}  // namespace relax_mprk
