#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "relax_mprk/problems.hpp"
#include "relax_mprk/reference.hpp"
#include "relax_mprk/step_control.hpp"

namespace relax_mprk {

struct ConvergenceRow {
  double dt = 0.0;
  /// Max-norm error of the final state against the reference at the final time.
  double error = 0.0;
  /// log2(error_{i-1} / error_i) scaled by the actual dt ratio; empty on row 0.
  std::optional<double> order;
  double gamma_dev = 0.0;
  double final_time = 0.0;
  std::size_t steps = 0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  bool completed = true;
  std::string message;
  /// "exact" or "fine_step".
  std::string reference;
};

/// dt0, dt0/2, ..., `levels` entries.
inline std::vector<double> halving_ladder(double dt0, std::size_t levels) {
  if (!(dt0 > 0.0)) throw std::invalid_argument("halving_ladder: dt0 must be positive");
  std::vector<double> out;
  for (std::size_t i = 0; i < levels; ++i) out.push_back(dt0 / std::ldexp(1.0, static_cast<int>(i)));
  return out;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("loglog_slope: need at least two matching points");
  }
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// States of the problem at the requested times; any order.
using ReferenceProvider = std::function<std::vector<Vector>(const std::vector<double>& times)>;

/// Fine-step oracle with step h, queried in increasing time order.
inline std::vector<Vector> fine_reference_states(const ProblemDescriptor& problem, double h,
                                                 const std::vector<double>& times) {
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  FineReference ref(problem.sys, problem.t0, problem.u0, h);
  std::vector<Vector> out(times.size());
  for (std::size_t i : order) out[i] = ref.at(times[i]);
  return out;
}

/// Runs `problem` once per ladder entry with fixed stepping and compares the
/// final state with the analytic solution when the problem has one, otherwise
/// with a fine-step oracle at dt_min / 1000. Relaxed runs end at slightly
/// different times. `reference` replaces the built-in oracle (a cache, say).
inline ConvergenceTable convergence_study(const ProblemDescriptor& problem, const MpScheme& scheme,
                                          IntegrateConfig cfg, const std::vector<double>& ladder,
                                          std::optional<double> t_end = std::nullopt,
                                          bool force_fine_reference = false,
                                          const ReferenceProvider& reference = {}) {
  if (ladder.empty()) throw std::invalid_argument("convergence_study: empty dt ladder");
  for (double dt : ladder) {
    if (!(dt > 0.0)) throw std::invalid_argument("convergence_study: dt must be positive");
  }
  const double t1 = t_end.value_or(problem.t_end);
  cfg.adaptivity = Adaptivity::fixed;
  cfg.keep_states = false;
  const EntropyFunctional* eta = problem.eta.empty() ? nullptr : &problem.eta.front();
  if (cfg.relax.mode != RelaxMode::none && eta == nullptr) {
    throw std::invalid_argument("convergence_study: relaxation requested without an entropy");
  }

  ConvergenceTable table;
  std::vector<Vector> finals;
  for (double dt : ladder) {
    const Trajectory tr = integrate(problem.sys, scheme, eta, cfg, problem.t0, problem.u0, t1, dt);
    if (!tr.completed) {
      table.completed = false;
      table.message = "dt=" + std::to_string(dt) + ": " + tr.message;
      return table;
    }
    ConvergenceRow row;
    row.dt = dt;
    row.final_time = tr.final_time();
    row.steps = tr.steps.size();
    for (const auto& s : tr.steps) row.gamma_dev = std::max(row.gamma_dev, std::abs(s.gamma - 1.0));
    table.rows.push_back(row);
    finals.push_back(tr.final_state());
  }

  auto max_err = [](const Vector& a, const Vector& b) {
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
    return e;
  };

  if (problem.exact && !force_fine_reference) {
    table.reference = "exact";
    for (std::size_t i = 0; i < finals.size(); ++i) {
      table.rows[i].error = max_err(finals[i], problem.exact(table.rows[i].final_time));
    }
  } else {
    table.reference = "fine_step";
    std::vector<double> times;
    for (const auto& row : table.rows) times.push_back(row.final_time);
    const double dt_min = *std::min_element(ladder.begin(), ladder.end());
    const std::vector<Vector> ref = reference ? reference(times)
                                              : fine_reference_states(problem, FineReference::step_for(dt_min), times);
    if (ref.size() != finals.size()) {
      throw std::runtime_error("convergence_study: reference returned the wrong number of states");
    }
    for (std::size_t i = 0; i < finals.size(); ++i) table.rows[i].error = max_err(finals[i], ref[i]);
  }

  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    const auto& prev = table.rows[i - 1];
    auto& cur = table.rows[i];
    if (prev.error > 0.0 && cur.error > 0.0) {
      cur.order = std::log(prev.error / cur.error) / std::log(prev.dt / cur.dt);
    }
  }
  return table;
}

}  // namespace relax_mprk
