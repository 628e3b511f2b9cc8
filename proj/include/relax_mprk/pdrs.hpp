#pragma once

#include <cfloat>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relax_mprk/dense_linear.hpp"
#include "relax_mprk/errors.hpp"

namespace relax_mprk {

using StateView = std::span<const double>;

/// Production-destruction-rest system
///
///   u_k' = r^P_k - r^D_k + sum_nu (p_{k nu} - d_{k nu}),   k < dim,
///
/// optionally followed by `explicit_dim` components that are not
/// sign-constrained and are advanced by the underlying explicit Runge-Kutta
/// method (the momentum of the isothermal Euler discretization).
///
/// Rate callbacks always receive the full state (Patankar part followed by the
/// explicit part) and must be non-negative whenever the Patankar part is
/// strictly positive. p_{kk} and d_{kk} are never queried.
struct PdrsSystem {
  using PairRate =
      std::function<double(std::size_t k, std::size_t nu, double t, StateView u)>;
  using RestRate = std::function<double(std::size_t k, double t, StateView u)>;
  using ExplicitRhs =
      std::function<void(double t, StateView u, std::span<double> out)>;

  std::size_t dim = 0;
  std::size_t explicit_dim = 0;

  PairRate prod;
  /// Empty means d_{k nu} = p_{nu k}.
  PairRate dest;
  /// Empty rest callbacks are identically zero.
  RestRate rest_prod;
  RestRate rest_dest;

  /// Pairs (k, nu) with possibly nonzero p_{k nu}. When `dest` is supplied the
  /// destruction pattern is taken to be the transpose. Empty means dense.
  std::vector<std::pair<std::size_t, std::size_t>> sparsity;

  ExplicitRhs explicit_rhs;

  /// Weight vectors over the Patankar components.
  std::vector<Vector> linear_invariants;

  bool autonomous = true;
  /// Declares r^P = r^D = 0 and p_{k nu} = d_{nu k}.
  bool conservative = false;

  std::size_t total_dim() const { return dim + explicit_dim; }
  bool has_rest() const {
    return static_cast<bool>(rest_prod) || static_cast<bool>(rest_dest);
  }
};

struct RateEntry {
  std::size_t k;
  std::size_t nu;
  double value;
};

/// All rate information the Patankar machinery needs at one (t, u).
struct RateSample {
  double t = 0.0;
  /// Nonzero off-diagonal production rates p_{k nu}.
  std::vector<RateEntry> prod;
  /// r^D_k + sum_nu d_{k nu}.
  Vector loss;
  /// r^P_k.
  Vector rest_prod;
  /// Right-hand side of the explicit components.
  Vector explicit_rhs;
};

inline void require_positive(StateView u, std::size_t count, const char* what) {
  for (std::size_t i = 0; i < count; ++i) {
    if (!(u[i] > 0.0) || !std::isfinite(u[i])) {
      throw DomainError(std::string(what) + ": component " + std::to_string(i) +
                        " is not strictly positive (" + std::to_string(u[i]) + ")");
    }
  }
}

/// Patankar solutions are positive in exact arithmetic but can underflow.
/// Entries in [0, DBL_MIN) are lifted to DBL_MIN before the positivity check;
/// negative or non-finite entries still fail it.
inline void ensure_positive(std::span<double> u, std::size_t count, const char* what) {
  for (std::size_t i = 0; i < count; ++i) {
    if (u[i] >= 0.0 && u[i] < DBL_MIN) u[i] = DBL_MIN;
  }
  require_positive(u, count, what);
}

namespace detail {

inline void check_rate(double v, const char* name, std::size_t k, std::size_t nu) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw DomainError(std::string("rate ") + name + "(" + std::to_string(k) + "," +
                      std::to_string(nu) + ") = " + std::to_string(v) +
                      " is negative or non-finite");
  }
}

}  // namespace detail

inline RateSample sample_rates(const PdrsSystem& sys, double t, StateView u) {
  const std::size_t d = sys.dim;
  if (u.size() != sys.total_dim()) {
    throw std::invalid_argument("state has size " + std::to_string(u.size()) +
                                ", system expects " + std::to_string(sys.total_dim()));
  }
  require_positive(u, d, "PDRS state");

  RateSample s;
  s.t = t;
  s.loss.assign(d, 0.0);
  s.rest_prod.assign(d, 0.0);

  auto add_prod = [&](std::size_t k, std::size_t nu) {
    const double p = sys.prod(k, nu, t, u);
    detail::check_rate(p, "p", k, nu);
    if (p != 0.0) {
      s.prod.push_back({k, nu, p});
      if (!sys.dest) s.loss[nu] += p;
    }
  };
  auto add_dest = [&](std::size_t k, std::size_t nu) {
    const double v = sys.dest(k, nu, t, u);
    detail::check_rate(v, "d", k, nu);
    s.loss[k] += v;
  };

  if (!sys.sparsity.empty()) {
    s.prod.reserve(sys.sparsity.size());
    for (const auto& [k, nu] : sys.sparsity) {
      if (k == nu) continue;
      add_prod(k, nu);
      if (sys.dest) add_dest(nu, k);
    }
  } else if (sys.prod) {
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t nu = 0; nu < d; ++nu) {
        if (k == nu) continue;
        add_prod(k, nu);
        if (sys.dest) add_dest(k, nu);
      }
    }
  }

  for (std::size_t k = 0; k < d; ++k) {
    if (sys.rest_prod) {
      const double r = sys.rest_prod(k, t, u);
      detail::check_rate(r, "rP", k, k);
      s.rest_prod[k] = r;
    }
    if (sys.rest_dest) {
      const double r = sys.rest_dest(k, t, u);
      detail::check_rate(r, "rD", k, k);
      s.loss[k] += r;
    }
  }

  if (sys.explicit_dim > 0) {
    s.explicit_rhs.assign(sys.explicit_dim, 0.0);
    sys.explicit_rhs(t, u, s.explicit_rhs);
  }
  return s;
}

/// f(t, u) for the full state; the Patankar part is
/// r^P - r^D + sum_nu (p_{k nu} - d_{k nu}).
inline Vector rhs_from_sample(const RateSample& s) {
  const std::size_t d = s.loss.size();
  Vector f(d + s.explicit_rhs.size(), 0.0);
  for (std::size_t k = 0; k < d; ++k) f[k] = s.rest_prod[k] - s.loss[k];
  for (const auto& e : s.prod) f[e.k] += e.value;
  for (std::size_t i = 0; i < s.explicit_rhs.size(); ++i) f[d + i] = s.explicit_rhs[i];
  return f;
}

inline Vector eval_rhs(const PdrsSystem& sys, double t, StateView u) {
  return rhs_from_sample(sample_rates(sys, t, u));
}

/// The (d+1)-addend splitting of the Patankar part: column nu of `pd` is
/// f^{[nu]} (p_{k nu} off the diagonal, -(r^D_nu + sum_mu d_{nu mu}) on it) and
/// `rest` is f^{[d+1]} = r^P.
struct PdrsSplit {
  SquareMatrix pd;
  Vector rest;

  Vector sum() const {
    const std::size_t d = rest.size();
    Vector f(rest);
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t nu = 0; nu < d; ++nu) f[k] += pd(k, nu);
    }
    return f;
  }
};

inline PdrsSplit split_rhs(const PdrsSystem& sys, double t, StateView u) {
  const RateSample s = sample_rates(sys, t, u);
  const std::size_t d = sys.dim;
  PdrsSplit out{SquareMatrix(d), s.rest_prod};
  for (const auto& e : s.prod) out.pd(e.k, e.nu) += e.value;
  for (std::size_t k = 0; k < d; ++k) out.pd(k, k) = -s.loss[k];
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

/// |n^T after - n^T before| <= rtol |n^T before|. Only the first n.size()
/// components of the states take part.
inline bool check_linear_invariant(std::span<const double> n,
                                   std::span<const double> u_before,
                                   std::span<const double> u_after, double rtol) {
  if (u_before.size() < n.size() || u_after.size() < n.size()) {
    throw std::invalid_argument("check_linear_invariant: dimension mismatch");
  }
  const double before = dot(n, u_before);
  const double after = dot(n, u_after);
  return std::abs(after - before) <= rtol * std::abs(before);
}

}  // namespace relax_mprk
