#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "relax_mprk/errors.hpp"
#include "relax_mprk/means.hpp"
#include "relax_mprk/pdrs.hpp"
#include "relax_mprk/relaxation.hpp"
#include "relax_mprk/schemes.hpp"
#include "relax_mprk/step_control.hpp"

namespace relax_mprk {

struct MethodSpec {
  SchemeKind kind = SchemeKind::MPRK22;
  double alpha = 1.0;
  double beta = 0.0;

  MpScheme build() const { return build_scheme(kind, alpha, beta); }
};

struct ProblemDefaults {
  MethodSpec method;
  double dt0 = 1.0;
  RelaxMode relax = RelaxMode::implicit;
  ScalarSolver solver = ScalarSolver::newton;
  Adaptivity adaptivity = Adaptivity::fixed;
  double rtol = 1e-3;
  double atol = 1e-3;
};

struct MeshInfo {
  std::size_t cells = 0;
  double dx = 0.0;
  double left = 0.0;
  double right = 0.0;

  double center(std::size_t i) const { return left + (static_cast<double>(i) + 0.5) * dx; }
};

struct ProblemDescriptor {
  std::string name;
  PdrsSystem sys;
  /// eta.front() drives relaxation.
  std::vector<EntropyFunctional> eta;
  Vector u0;
  double t0 = 0.0;
  double t_end = 1.0;
  ProblemDefaults defaults;
  /// Analytic solution of the semi-discrete or continuous problem, if known.
  std::function<Vector(double t)> exact;
  std::optional<MeshInfo> mesh;
  /// Resolved constants worth recording with a run.
  std::vector<std::pair<std::string, std::string>> metadata;
};

namespace detail {

inline EntropyFunctional make_entropy(std::string name, std::function<double(StateView)> f,
                                      std::function<Vector(StateView)> g,
                                      EntropyRegime regime, bool monotone, bool convex) {
  EntropyFunctional e;
  e.name = std::move(name);
  e.eval = std::move(f);
  e.grad = std::move(g);
  e.regime = regime;
  e.monotone_nondecreasing = monotone;
  e.convex = convex;
  return e;
}

/// Linear functional n^T u as a conservative entropy.
inline EntropyFunctional linear_entropy(std::string name, Vector n, std::size_t total) {
  Vector g(total, 0.0);
  bool monotone = true;
  for (std::size_t i = 0; i < n.size(); ++i) {
    g[i] = n[i];
    monotone = monotone && n[i] >= 0.0;
  }
  return make_entropy(
      std::move(name), [n](StateView u) { return dot(n, u); }, [g](StateView) { return g; },
      EntropyRegime::conservative, monotone, true);
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Lotka-Volterra

inline ProblemDescriptor lotka_volterra() {
  ProblemDescriptor p;
  p.name = "lotka_volterra";
  PdrsSystem& s = p.sys;
  s.dim = 2;
  s.prod = [](std::size_t k, std::size_t nu, double, StateView u) {
    return (k == 1 && nu == 0) ? u[0] * u[1] : 0.0;
  };
  s.sparsity = {{1, 0}};
  s.rest_prod = [](std::size_t k, double, StateView u) { return k == 0 ? 2.0 * u[0] : 0.0; };
  s.rest_dest = [](std::size_t k, double, StateView u) { return k == 1 ? u[1] : 0.0; };

  p.eta.push_back(detail::make_entropy(
      "log_u1-u1+2log_u2-u2",
      [](StateView u) {
        if (!(u[0] > 0.0 && u[1] > 0.0)) throw DomainError("lotka_volterra entropy needs u > 0");
        return std::log(u[0]) - u[0] + 2.0 * std::log(u[1]) - u[1];
      },
      [](StateView u) { return Vector{1.0 / u[0] - 1.0, 2.0 / u[1] - 1.0}; },
      EntropyRegime::conservative, false, false));
  p.u0 = {2.0, 2.0};
  p.t0 = 0.0;
  p.t_end = 200.0;
  p.defaults.method = {SchemeKind::MPRK22, 1.0, 0.0};
  p.defaults.dt0 = 1.0;
  p.defaults.relax = RelaxMode::implicit;
  p.defaults.solver = ScalarSolver::newton;
  return p;
}

// ---------------------------------------------------------------------------
// Stratospheric reaction (scaled by diag(1,1,3,2,1,2))

namespace strat {

inline constexpr double kTr = 4.5;
inline constexpr double kTs = 19.5;
inline constexpr double kM = 8.120e16;

/// Daylight window sigma(T(t)), t in seconds.
inline double daylight(double t) {
  const double T = std::fmod(t / 3600.0, 24.0);
  if (T < kTr || T > kTs) return 0.0;
  const double z = (2.0 * T - kTr - kTs) / (kTs - kTr);
  return 0.5 + 0.5 * std::cos(std::numbers::pi * std::abs(z) * z);
}

struct RateConstants {
  std::array<double, 12> k{};  // 1-based
};

inline RateConstants rate_constants(double t) {
  const double sg = daylight(t);
  RateConstants c;
  c.k[1] = sg * sg * sg * 2.643e-10;
  c.k[2] = 8.018e-17;
  c.k[3] = sg * 6.120e-4;
  c.k[4] = 1.576e-15;
  c.k[5] = sg * sg * 1.070e-3;
  c.k[6] = 7.110e-11;
  c.k[7] = 1.200e-10;
  c.k[8] = 6.062e-15;
  c.k[9] = 1.069e-11;
  c.k[10] = sg * 1.289e-2;
  c.k[11] = 1e-8;
  return c;
}

/// r_1 .. r_11 (1-based) in the scaled variables.
inline std::array<double, 12> reactions(double t, StateView u) {
  const auto c = rate_constants(t);
  const auto& k = c.k;
  // u is 0-based: u1 = u[0], ...
  std::array<double, 12> r{};
  r[1] = k[1] * u[3];
  r[2] = k[2] * u[1] * u[3];
  r[3] = k[3] * u[2];
  r[4] = k[4] * u[1] * u[2];
  r[5] = k[5] * u[2];
  r[6] = k[6] * kM * u[0];
  r[7] = k[7] * u[0] * u[2];
  r[8] = k[8] * u[2] * u[4];
  r[9] = k[9] * u[1] * u[5];
  r[10] = k[10] * u[5];
  r[11] = k[11] * u[1] * u[4];
  return r;
}

/// Destruction d_{ij} (0-based i, j); p_{ij} = d_{ji}.
inline double destruction(std::size_t i, std::size_t j, const std::array<double, 12>& r) {
  constexpr double third = 1.0 / 3.0;
  switch (i * 6 + j) {
    case 0 * 6 + 1: return r[6];
    case 0 * 6 + 3: return third * r[7];
    case 1 * 6 + 2: return 0.5 * r[2];
    case 1 * 6 + 3: return third * r[4];
    case 1 * 6 + 4: return 0.5 * r[9];
    case 1 * 6 + 5: return r[11];
    case 2 * 6 + 0: return third * r[5];
    case 2 * 6 + 1: return third * r[3];
    case 2 * 6 + 5: return third * r[8];
    case 2 * 6 + 3:
      return 2.0 * third * r[3] + r[4] + 2.0 * third * r[5] + r[7] + 2.0 * third * r[8];
    case 3 * 6 + 1: return r[1];
    case 3 * 6 + 2: return r[2];
    case 4 * 6 + 5: return r[11] + third * r[8];
    case 5 * 6 + 1: return 0.5 * r[10];
    case 5 * 6 + 3: return r[9];
    case 5 * 6 + 4: return 0.5 * r[10];
    default: return 0.0;
  }
}

inline const std::vector<std::pair<std::size_t, std::size_t>>& destruction_pattern() {
  static const std::vector<std::pair<std::size_t, std::size_t>> pattern{
      {0, 1}, {0, 3}, {1, 2}, {1, 3}, {1, 4}, {1, 5}, {2, 0}, {2, 1},
      {2, 5}, {2, 3}, {3, 1}, {3, 2}, {4, 5}, {5, 1}, {5, 3}, {5, 4}};
  return pattern;
}

}  // namespace strat

inline ProblemDescriptor stratospheric() {
  ProblemDescriptor p;
  p.name = "stratospheric";
  PdrsSystem& s = p.sys;
  s.dim = 6;
  s.autonomous = false;
  s.conservative = true;
  s.prod = [](std::size_t k, std::size_t nu, double t, StateView u) {
    return strat::destruction(nu, k, strat::reactions(t, u));
  };
  for (const auto& [i, j] : strat::destruction_pattern()) s.sparsity.emplace_back(j, i);
  const Vector n1(6, 1.0);
  const Vector n2{0.0, 0.0, 0.0, 0.0, 1.0, 0.5};
  s.linear_invariants = {n1, n2};

  p.eta.push_back(detail::linear_entropy("n2^T u", n2, 6));
  p.eta.push_back(detail::linear_entropy("n1^T u", n1, 6));

  const std::array<double, 6> w0{9.906e1, 6.624e8, 5.326e11, 1.697e16, 4e6, 1.093e9};
  const std::array<double, 6> scale{1, 1, 3, 2, 1, 2};
  p.u0.resize(6);
  for (std::size_t i = 0; i < 6; ++i) p.u0[i] = scale[i] * w0[i];
  p.t0 = 12.0 * 3600.0;
  p.t_end = 84.0 * 3600.0;
  p.defaults.method = {SchemeKind::MPRK22, 1.0, 0.0};
  p.defaults.dt0 = 0.01 * 3600.0;
  p.defaults.relax = RelaxMode::implicit;
  p.defaults.solver = ScalarSolver::regula_falsi;
  p.defaults.adaptivity = Adaptivity::pid_and_relax;
  p.metadata = {{"T_r", detail::fmt(strat::kTr)}, {"T_s", detail::fmt(strat::kTs)},
                {"M", detail::fmt(strat::kM)}};
  return p;
}

// ---------------------------------------------------------------------------
// Linear advection with entropy-conservative fluxes

enum class AdvectionEntropy { log, sqrt, inv };

inline std::string_view to_string(AdvectionEntropy e) {
  switch (e) {
    case AdvectionEntropy::log: return "log";
    case AdvectionEntropy::sqrt: return "sqrt";
    case AdvectionEntropy::inv: return "inv";
  }
  return "?";
}

inline double advection_flux(AdvectionEntropy kind, double a, double b) {
  switch (kind) {
    case AdvectionEntropy::log: return mean_log(a, b);
    case AdvectionEntropy::sqrt: return mean_geo(a, b);
    case AdvectionEntropy::inv: return mean_harm(a, b);
  }
  return 0.0;
}

inline ProblemDescriptor advection_fv(std::size_t n = 100,
                                      AdvectionEntropy kind = AdvectionEntropy::log) {
  if (n < 3) throw std::invalid_argument("advection_fv: need N >= 3");
  ProblemDescriptor p;
  p.name = "advection";
  const MeshInfo mesh{n, 2.0 / static_cast<double>(n), 0.0, 2.0};
  p.mesh = mesh;
  const double dx = mesh.dx;

  PdrsSystem& s = p.sys;
  s.dim = n;
  s.conservative = true;
  // Interface i+1/2 moves mass from cell i into cell i+1.
  s.prod = [n, dx, kind](std::size_t k, std::size_t nu, double, StateView u) {
    if (k != (nu + 1) % n) return 0.0;
    return advection_flux(kind, u[nu], u[k]) / dx;
  };
  for (std::size_t i = 0; i < n; ++i) s.sparsity.emplace_back((i + 1) % n, i);
  s.linear_invariants = {Vector(n, dx)};

  std::function<double(double)> U;
  std::function<double(double)> dU;
  switch (kind) {
    case AdvectionEntropy::log:
      U = [](double v) { return v * std::log(v) - v; };
      dU = [](double v) { return std::log(v); };
      break;
    case AdvectionEntropy::sqrt:
      U = [](double v) { return -std::sqrt(v); };
      dU = [](double v) { return -0.5 / std::sqrt(v); };
      break;
    case AdvectionEntropy::inv:
      U = [](double v) { return 1.0 / v; };
      dU = [](double v) { return -1.0 / (v * v); };
      break;
  }
  p.eta.push_back(detail::make_entropy(
      "dx*sum U(u), U " + std::string(to_string(kind)),
      [U, dx](StateView u) {
        double acc = 0.0;
        for (double v : u) {
          if (!(v > 0.0)) throw DomainError("advection entropy needs u > 0");
          acc += U(v);
        }
        return dx * acc;
      },
      [dU, dx](StateView u) {
        Vector g(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) g[i] = dx * dU(u[i]);
        return g;
      },
      EntropyRegime::conservative, false, true));

  p.u0.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.u0[i] = 1.9 * std::sin(std::numbers::pi * mesh.center(i)) + 2.0;
  }
  p.t0 = 0.0;
  p.t_end = 2.0;
  p.defaults.dt0 = dx;
  switch (kind) {
    case AdvectionEntropy::log:
      p.defaults.method = {SchemeKind::MPSSPRK2, 0.5, 1.0};
      p.defaults.solver = ScalarSolver::secant;
      p.defaults.adaptivity = Adaptivity::fixed;
      break;
    case AdvectionEntropy::sqrt:
      p.defaults.method = {SchemeKind::MPRK43I, 0.5, 0.75};
      p.defaults.solver = ScalarSolver::regula_falsi;
      p.defaults.adaptivity = Adaptivity::pid_and_relax;
      break;
    case AdvectionEntropy::inv:
      p.defaults.method = {SchemeKind::MPRK22, 1.0, 0.0};
      p.defaults.solver = ScalarSolver::bisection;
      p.defaults.adaptivity = Adaptivity::pid_and_relax;
      break;
  }
  p.defaults.relax = RelaxMode::implicit;
  p.metadata = {{"N", std::to_string(n)}, {"entropy", std::string(to_string(kind))},
                {"dx", detail::fmt(dx)}};
  return p;
}

// ---------------------------------------------------------------------------
// Isothermal Euler: density through the MP scheme, momentum explicit.
// The log-mean flux conserves U = rho v^2/2 + c^2 rho log(rho) exactly; with
// a factor 1/2 on the second term it would not.

inline ProblemDescriptor isothermal_euler_fv(std::size_t n = 100, double c = 1.0) {
  if (n < 3) throw std::invalid_argument("isothermal_euler_fv: need N >= 3");
  if (!(c > 0.0)) throw std::invalid_argument("isothermal_euler_fv: need c > 0");
  ProblemDescriptor p;
  p.name = "isothermal_euler";
  const MeshInfo mesh{n, 1.0 / static_cast<double>(n), 0.0, 1.0};
  p.mesh = mesh;
  const double dx = mesh.dx;
  const double c2 = c * c;

  // Density flux at interface i+1/2 (cells i and i+1, periodic).
  auto density_flux = [n](StateView u, std::size_t i) {
    const std::size_t j = (i + 1) % n;
    const double vi = u[n + i] / u[i];
    const double vj = u[n + j] / u[j];
    return mean_log(u[i], u[j]) * mean_arith(vi, vj);
  };

  PdrsSystem& s = p.sys;
  s.dim = n;
  s.explicit_dim = n;
  s.conservative = true;
  s.prod = [n, dx, density_flux](std::size_t k, std::size_t nu, double, StateView u) {
    if (k == (nu + 1) % n) return std::max(0.0, density_flux(u, nu)) / dx;
    if (nu == (k + 1) % n) return -std::min(0.0, density_flux(u, k)) / dx;
    return 0.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    s.sparsity.emplace_back((i + 1) % n, i);
    s.sparsity.emplace_back(i, (i + 1) % n);
  }
  s.explicit_rhs = [n, dx, c2](double, StateView u, std::span<double> out) {
    std::vector<double> flux(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = (i + 1) % n;
      if (!(u[i] > 0.0 && u[j] > 0.0)) throw DomainError("isothermal_euler: density must be positive");
      const double vbar = mean_arith(u[n + i] / u[i], u[n + j] / u[j]);
      flux[i] = mean_log(u[i], u[j]) * vbar * vbar + mean_arith(c2 * u[i], c2 * u[j]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = -(flux[i] - flux[(i + n - 1) % n]) / dx;
    }
  };
  s.linear_invariants = {Vector(n, dx)};

  p.eta.push_back(detail::make_entropy(
      "dx*sum(rho v^2/2 + c^2 rho log(rho))",
      [n, dx, c2](StateView u) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double rho = u[i];
          if (!(rho > 0.0)) throw DomainError("isothermal_euler entropy needs rho > 0");
          const double m = u[n + i];
          acc += 0.5 * m * m / rho + c2 * rho * std::log(rho);
        }
        return dx * acc;
      },
      [n, dx, c2](StateView u) {
        Vector g(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
          const double rho = u[i];
          const double v = u[n + i] / rho;
          g[i] = dx * (-0.5 * v * v + c2 * (std::log(rho) + 1.0));
          g[n + i] = dx * v;
        }
        return g;
      },
      EntropyRegime::conservative, false, true));

  p.u0.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool left = mesh.center(i) < 0.5;
    p.u0[i] = left ? 0.8 : 1.0;
    p.u0[n + i] = left ? 1e-3 : 1e-2;
  }
  p.t0 = 0.0;
  p.t_end = 1.0;
  p.defaults.method = {SchemeKind::MPRK22, 1.0, 0.0};
  p.defaults.dt0 = dx;
  p.defaults.relax = RelaxMode::implicit;
  p.defaults.solver = ScalarSolver::newton;
  p.defaults.adaptivity = Adaptivity::pid_and_relax;
  p.metadata = {{"N", std::to_string(n)}, {"c", detail::fmt(c)}, {"dx", detail::fmt(dx)},
                {"riemann_jump", "0.5"}};
  return p;
}

// ---------------------------------------------------------------------------
// Porous medium equation

/// Barenblatt profile u^{(m)}(t, x).
inline double barenblatt(double m, double t, double x) {
  const double k = 1.0 / (m + 1.0);
  const double arg = 1.0 - k * (m - 1.0) / (2.0 * m) * x * x / std::pow(t, 2.0 * k);
  return std::pow(t, -k) * std::pow(std::max(arg, 0.0), 1.0 / (m - 1.0));
}

inline double barenblatt_radius(double m, double t) {
  const double k = 1.0 / (m + 1.0);
  return std::sqrt(2.0 * m / (k * (m - 1.0))) * std::pow(t, k);
}

/// Positive floor applied to the initial data outside the Barenblatt support.
inline constexpr double kPmeFloor = 1e-30;

inline ProblemDescriptor porous_medium(std::size_t n = 160, double m = 3.0) {
  if (n < 3) throw std::invalid_argument("porous_medium: need N >= 3");
  if (!(m > 1.0)) throw std::invalid_argument("porous_medium: need m > 1");
  ProblemDescriptor p;
  p.name = "pme";
  const MeshInfo mesh{n, 12.0 / static_cast<double>(n), -6.0, 6.0};
  p.mesh = mesh;
  const double dx = mesh.dx;
  const double w = 1.0 / (2.0 * dx * dx);

  PdrsSystem& s = p.sys;
  s.dim = n;
  s.conservative = true;
  s.prod = [n, m, w](std::size_t k, std::size_t nu, double, StateView u) {
    auto a = [m](double v) { return m * std::pow(v, m - 1.0); };
    if (k == 0) return nu == 1 ? w * a(u[1]) * u[1] : 0.0;
    if (k == n - 1) return nu == n - 2 ? w * a(u[n - 2]) * u[n - 2] : 0.0;
    if (nu == k + 1 || nu + 1 == k) return w * (a(u[k]) + a(u[nu])) * u[nu];
    return 0.0;
  };
  s.sparsity.emplace_back(0, 1);
  s.sparsity.emplace_back(n - 1, n - 2);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    s.sparsity.emplace_back(i, i + 1);
    s.sparsity.emplace_back(i, i - 1);
  }
  s.linear_invariants = {Vector(n, dx)};

  const double pre = 0.5 * dx * dx;
  p.eta.push_back(detail::make_entropy(
      "dx^2/2*sum u^2",
      [pre](StateView u) {
        double acc = 0.0;
        for (double v : u) acc += v * v;
        return pre * acc;
      },
      [pre](StateView u) {
        Vector g(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) g[i] = 2.0 * pre * u[i];
        return g;
      },
      EntropyRegime::dissipative, true, true));

  p.u0.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.u0[i] = std::max(barenblatt(m, 1.0, mesh.center(i)), kPmeFloor);
  }
  p.t0 = 0.0;
  p.t_end = 2.0;
  p.exact = [mesh, m](double t) {
    Vector u(mesh.cells);
    for (std::size_t i = 0; i < mesh.cells; ++i) u[i] = barenblatt(m, t + 1.0, mesh.center(i));
    return u;
  };
  if (m == 5.0) {
    p.defaults.method = {SchemeKind::MPRK43I, 0.5, 0.75};
  } else {
    p.defaults.method = {SchemeKind::MPSSPRK2, 0.5, 1.0};
  }
  p.defaults.dt0 = dx;
  p.defaults.relax = RelaxMode::clamped_dissipative;
  p.defaults.solver = ScalarSolver::newton;
  p.metadata = {{"N", std::to_string(n)}, {"m", detail::fmt(m)}, {"dx", detail::fmt(dx)},
                {"initial_floor", detail::fmt(kPmeFloor)}, {"exact_time_shift", "1"}};
  return p;
}

// ---------------------------------------------------------------------------
// Registry

using ProblemParams = std::map<std::string, std::string>;

struct ProblemInfo {
  std::string name;
  std::string params;
  std::string summary;
};

inline const std::vector<ProblemInfo>& problem_registry() {
  static const std::vector<ProblemInfo> reg{
      {"lotka_volterra", "", "Lotka-Volterra PDRS, conserved log entropy"},
      {"stratospheric", "", "stiff 6-species stratospheric chemistry, n2^T u as entropy"},
      {"advection", "N=100,entropy=log|sqrt|inv", "periodic linear advection, entropy-conservative FV"},
      {"isothermal_euler", "N=100,c=1", "isothermal Euler Riemann problem, periodic"},
      {"pme", "N=160,m=3", "porous medium equation with Barenblatt reference"},
  };
  return reg;
}

namespace detail {

inline double param_double(const ProblemParams& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(it->second, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != it->second.size() || it->second.empty()) {
    throw ValidationError("problem parameter " + key + "=" + it->second + " is not a number");
  }
  return v;
}

inline std::size_t param_size(const ProblemParams& params, const std::string& key,
                              std::size_t fallback) {
  const double v = param_double(params, key, static_cast<double>(fallback));
  if (!(v >= 1.0) || v != std::floor(v)) {
    throw ValidationError("problem parameter " + key + " must be a positive integer");
  }
  return static_cast<std::size_t>(v);
}

inline void check_keys(const ProblemParams& params, std::initializer_list<const char*> allowed,
                       const std::string& problem) {
  for (const auto& [key, value] : params) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError("problem " + problem + " has no parameter '" + key + "'");
  }
}

}  // namespace detail

/// Builds a registered problem by name.
inline ProblemDescriptor make_problem(const std::string& name, const ProblemParams& params = {}) {
  if (name == "lotka_volterra") {
    detail::check_keys(params, {}, name);
    return lotka_volterra();
  }
  if (name == "stratospheric") {
    detail::check_keys(params, {}, name);
    return stratospheric();
  }
  if (name == "advection") {
    detail::check_keys(params, {"N", "entropy"}, name);
    AdvectionEntropy kind = AdvectionEntropy::log;
    if (auto it = params.find("entropy"); it != params.end()) {
      if (it->second == "log") kind = AdvectionEntropy::log;
      else if (it->second == "sqrt") kind = AdvectionEntropy::sqrt;
      else if (it->second == "inv") kind = AdvectionEntropy::inv;
      else throw ValidationError("advection entropy must be log, sqrt or inv (got " + it->second + ")");
    }
    return advection_fv(detail::param_size(params, "N", 100), kind);
  }
  if (name == "isothermal_euler") {
    detail::check_keys(params, {"N", "c"}, name);
    return isothermal_euler_fv(detail::param_size(params, "N", 100),
                               detail::param_double(params, "c", 1.0));
  }
  if (name == "pme") {
    detail::check_keys(params, {"N", "m"}, name);
    return porous_medium(detail::param_size(params, "N", 160),
                         detail::param_double(params, "m", 3.0));
  }
  std::string known;
  for (const auto& info : problem_registry()) known += (known.empty() ? "" : ", ") + info.name;
  throw ValidationError("unknown problem '" + name + "'; registered problems: " + known);
}

}  // namespace relax_mprk
