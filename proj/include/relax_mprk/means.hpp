#pragma once

#include <cmath>
#include <string>

#include "relax_mprk/errors.hpp"

namespace relax_mprk {

namespace detail {
inline void require_mean_args(double a, double b, const char* what) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw DomainError(std::string(what) + ": arguments must be positive and finite");
  }
}
}  // namespace detail

/// Below this value of zeta = ((a-b)/(a+b))^2 mean_log switches to its series.
inline constexpr double kLogMeanSeriesThreshold = 1e-4;

/// (b - a) / (ln b - ln a), with the 4-term series
///   (a + b) / (2 (1 + zeta/3 + zeta^2/5 + zeta^3/7))
/// for nearly equal arguments.
inline double mean_log(double a, double b) {
  detail::require_mean_args(a, b, "mean_log");
  const double s = a + b;
  const double r = (a - b) / s;
  const double zeta = r * r;
  if (zeta < kLogMeanSeriesThreshold) {
    const double f = 1.0 + zeta * (1.0 / 3.0 + zeta * (1.0 / 5.0 + zeta / 7.0));
    return 0.5 * s / f;
  }
  return (b - a) / (std::log(b) - std::log(a));
}

inline double mean_geo(double a, double b) {
  detail::require_mean_args(a, b, "mean_geo");
  return std::sqrt(a) * std::sqrt(b);
}

inline double mean_harm(double a, double b) {
  detail::require_mean_args(a, b, "mean_harm");
  return 2.0 * a * b / (a + b);
}

inline double mean_arith(double a, double b) { return 0.5 * (a + b); }

}  // namespace relax_mprk
