#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "relax_mprk/relax_mprk.hpp"

namespace relax_mprk::cli {

enum ExitCode : int { kOk = 0, kIntegrationFailure = 1, kConfigError = 2 };

/// Shortest round-trip is not what we want here: every value is written with
/// 17 significant digits so files diff cleanly across platforms and locales.
inline std::string fmt17(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != last) {
    throw ValidationError(what + ": '" + text + "' is not a number");
  }
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

/// "kind" or "kind:alpha[,beta]".
inline MethodSpec parse_method(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  MethodSpec m;
  if (kind == "mprk22") m = {SchemeKind::MPRK22, 1.0, 0.0};
  else if (kind == "mpssprk2") m = {SchemeKind::MPSSPRK2, 0.5, 1.0};
  else if (kind == "mprk43i") m = {SchemeKind::MPRK43I, 0.5, 0.75};
  else throw ValidationError("unknown method '" + kind + "' (mprk22, mpssprk2, mprk43i)");
  if (colon != std::string::npos) {
    const auto params = split(text.substr(colon + 1), ',');
    const std::size_t expected = m.kind == SchemeKind::MPRK22 ? 1 : 2;
    if (params.empty() || params.size() > expected) {
      throw ValidationError("method " + kind + " takes " + std::to_string(expected) +
                            " parameter(s), got '" + text + "'");
    }
    m.alpha = parse_number(params[0], "method alpha");
    if (params.size() > 1) m.beta = parse_number(params[1], "method beta");
  }
  m.build();  // rejects parameters outside the family's domain
  return m;
}

inline std::string method_string(const MethodSpec& m) {
  std::string s = std::string(to_string(m.kind)) + ":" + fmt17(m.alpha);
  if (m.kind != SchemeKind::MPRK22) s += "," + fmt17(m.beta);
  return s;
}

/// "name" or "name:key=value,key=value".
inline std::pair<std::string, ProblemParams> parse_problem(const std::string& text) {
  const auto colon = text.find(':');
  std::pair<std::string, ProblemParams> out{text.substr(0, colon), {}};
  if (colon == std::string::npos) return out;
  for (const auto& item : split(text.substr(colon + 1), ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ValidationError("problem parameter '" + item + "' is not key=value");
    }
    out.second[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

template <class Enum, std::size_t N>
Enum parse_enum(const std::string& text, const Enum (&values)[N], const char* what) {
  std::string known;
  for (Enum v : values) {
    if (text == to_string(v)) return v;
    known += (known.empty() ? "" : ", ") + std::string(to_string(v));
  }
  throw ValidationError(std::string("unknown ") + what + " '" + text + "' (" + known + ")");
}

inline constexpr RelaxMode kRelaxModes[] = {RelaxMode::none, RelaxMode::clamped_dissipative,
                                            RelaxMode::geometric, RelaxMode::implicit};
inline constexpr ScalarSolver kSolvers[] = {ScalarSolver::newton, ScalarSolver::regula_falsi,
                                            ScalarSolver::bisection, ScalarSolver::secant};
inline constexpr SigmaMode kSigmaModes[] = {SigmaMode::frozen, SigmaMode::dense,
                                            SigmaMode::bootstrap};
inline constexpr Adaptivity kAdaptivity[] = {Adaptivity::fixed, Adaptivity::pid,
                                             Adaptivity::relax_only, Adaptivity::pid_and_relax};

/// Raw option values; empty strings and unset optionals mean "problem default".
struct RawOptions {
  std::string problem;
  std::string method;
  std::string relax;
  std::string solver;
  std::string sigma_mode;
  std::string adapt;
  std::optional<double> dt0;
  std::optional<double> t_end;
  std::optional<double> rtol;
  std::optional<double> atol;
  std::optional<double> gamma_tol;
  std::optional<double> gamma_min;
  std::optional<double> gamma_max;
  std::optional<int> max_iters;
  std::optional<long long> max_steps;
  bool allow_nonmonotone = false;
  std::string out;
  bool dump_state = false;
  long long seed = 0;
  bool oracle = false;
  int levels = 5;
  std::string cache_dir;
};

/// Everything a run needs, with all defaults resolved.
struct RunConfig {
  std::string problem_text;
  ProblemDescriptor problem;
  MethodSpec method;
  IntegrateConfig integrate;
  double dt0 = 0.0;
  double t_end = 0.0;
  std::string out;
  bool dump_state = false;
  long long seed = 0;
  bool oracle = false;
  int levels = 5;
  std::string cache_dir;
};

inline RunConfig resolve(const RawOptions& raw) {
  if (raw.problem.empty()) throw ValidationError("--problem is required");
  RunConfig rc;
  rc.problem_text = raw.problem;
  const auto [name, params] = parse_problem(raw.problem);
  rc.problem = make_problem(name, params);
  const ProblemDefaults& d = rc.problem.defaults;

  rc.method = raw.method.empty() ? d.method : parse_method(raw.method);
  IntegrateConfig& ic = rc.integrate;
  ic.relax.mode = raw.relax.empty() ? d.relax : parse_enum(raw.relax, kRelaxModes, "relax mode");
  ic.relax.solver = raw.solver.empty() ? d.solver : parse_enum(raw.solver, kSolvers, "solver");
  ic.relax.sigma_mode = raw.sigma_mode.empty() ? default_sigma_mode(rc.method.kind)
                                               : parse_enum(raw.sigma_mode, kSigmaModes, "sigma mode");
  ic.adaptivity = raw.adapt.empty() ? d.adaptivity : parse_enum(raw.adapt, kAdaptivity, "adaptivity");
  ic.rtol = raw.rtol.value_or(d.rtol);
  ic.atol = raw.atol.value_or(d.atol);
  if (raw.gamma_tol) ic.relax.gamma_tol = *raw.gamma_tol;
  if (raw.gamma_min) ic.relax.gamma_min = *raw.gamma_min;
  if (raw.gamma_max) ic.relax.gamma_max = *raw.gamma_max;
  if (raw.max_iters) ic.relax.max_iters = *raw.max_iters;
  if (raw.max_steps) {
    if (*raw.max_steps <= 0) throw ValidationError("--max-steps must be positive");
    ic.max_steps = static_cast<std::size_t>(*raw.max_steps);
  }
  ic.relax.allow_nonmonotone_geometric = raw.allow_nonmonotone;
  try {
    ic.relax.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  if (!(ic.rtol > 0.0) || !(ic.atol > 0.0)) throw ValidationError("--rtol and --atol must be positive");

  rc.dt0 = raw.dt0.value_or(d.dt0);
  if (!(rc.dt0 > 0.0)) throw ValidationError("--dt0 must be positive");
  rc.t_end = raw.t_end.value_or(rc.problem.t_end);
  if (!(rc.t_end > rc.problem.t0)) throw ValidationError("--t-end must exceed the initial time");
  if (ic.relax.mode != RelaxMode::none && rc.problem.eta.empty()) {
    throw ValidationError("problem " + name + " has no entropy to relax");
  }
  if (ic.relax.mode == RelaxMode::geometric && !rc.problem.eta.front().monotone_nondecreasing &&
      !ic.relax.allow_nonmonotone_geometric) {
    throw ValidationError("geometric relaxation needs a monotone entropy; " + name +
                          " has none (pass --allow-nonmonotone to override)");
  }
  rc.out = raw.out;
  rc.dump_state = raw.dump_state;
  rc.seed = raw.seed;
  rc.oracle = raw.oracle;
  if (raw.levels < 1) throw ValidationError("--levels must be at least 1");
  rc.levels = raw.levels;
  rc.cache_dir = raw.cache_dir;
  return rc;
}

inline std::vector<std::pair<std::string, std::string>> metadata(const RunConfig& rc) {
  const RelaxConfig& r = rc.integrate.relax;
  std::vector<std::pair<std::string, std::string>> md{
      {"problem", rc.problem.name},
      {"problem_spec", rc.problem_text},
      {"method", method_string(rc.method)},
      {"relax", std::string(to_string(r.mode))},
      {"solver", std::string(to_string(r.solver))},
      {"sigma_mode", std::string(to_string(r.sigma_mode))},
      {"adapt", std::string(to_string(rc.integrate.adaptivity))},
      {"dt0", fmt17(rc.dt0)},
      {"t0", fmt17(rc.problem.t0)},
      {"t_end", fmt17(rc.t_end)},
      {"rtol", fmt17(rc.integrate.rtol)},
      {"atol", fmt17(rc.integrate.atol)},
      {"gamma_tol", fmt17(r.gamma_tol)},
      {"gamma_min", fmt17(r.gamma_min)},
      {"gamma_max", fmt17(r.gamma_max)},
      {"max_iters", std::to_string(r.max_iters)},
      {"max_steps", std::to_string(rc.integrate.max_steps)},
      {"entropy", rc.problem.eta.empty() ? "" : rc.problem.eta.front().name},
      {"seed", std::to_string(rc.seed)},
  };
  for (const auto& [k, v] : rc.problem.metadata) md.emplace_back("problem." + k, v);
  return md;
}

inline void write_metadata(std::ostream& os,
                           const std::vector<std::pair<std::string, std::string>>& md) {
  for (const auto& [k, v] : md) os << k << '=' << v << '\n';
}

/// Opens `path` for writing, or hands back `fallback` for "-".
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path == "-") {
      os_ = &fallback;
      return;
    }
    file_.open(path, std::ios::out | std::ios::trunc);
    if (!file_) throw ValidationError("cannot open '" + path + "' for writing");
    os_ = &file_;
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_ = nullptr;
};

inline std::filesystem::path sibling(const std::string& out, const std::string& name) {
  if (out == "-") return name;
  return std::filesystem::path(out).parent_path() / name;
}

inline std::string sidecar_path(const std::string& out) { return out + ".meta"; }

inline double linear_value(const Vector& n, const Vector& u) {
  return dot(n, std::span<const double>(u.data(), n.size()));
}

inline int cmd_run(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const ProblemDescriptor& p = rc.problem;
  const MpScheme scheme = rc.method.build();
  IntegrateConfig ic = rc.integrate;
  ic.keep_states = true;
  const EntropyFunctional* eta = p.eta.empty() ? nullptr : &p.eta.front();
  const Trajectory tr = integrate(p.sys, scheme, eta, ic, p.t0, p.u0, rc.t_end, rc.dt0);

  std::optional<FineReference> oracle;
  if (!p.exact && rc.oracle) oracle.emplace(p.sys, p.t0, p.u0, FineReference::step_for(rc.dt0));

  Sink csv(rc.out, out);
  *csv << "step,t,dt,gamma,relax_status,eta,inv1,inv2,err_ref\n";
  const bool relaxing = ic.relax.mode != RelaxMode::none;
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    const Vector& u = tr.u[i];
    const AcceptedStep* s = i == 0 ? nullptr : &tr.steps[i - 1];
    *csv << i << ',' << fmt17(tr.t[i]) << ',' << fmt17(s ? s->dt : 0.0) << ','
         << fmt17(s ? s->gamma : 1.0) << ','
         << (s == nullptr ? "initial" : relaxing ? to_string(s->status) : "off") << ',';
    if (eta) *csv << fmt17((*eta)(u));
    *csv << ',';
    if (!p.sys.linear_invariants.empty()) {
      *csv << fmt17(linear_value(p.sys.linear_invariants[0], u));
    } else {
      double total = 0.0;
      for (std::size_t k = 0; k < p.sys.dim; ++k) total += u[k];
      *csv << fmt17(total);
    }
    *csv << ',';
    if (p.sys.linear_invariants.size() > 1) *csv << fmt17(linear_value(p.sys.linear_invariants[1], u));
    *csv << ',';
    if (p.exact || oracle) {
      const Vector ref = p.exact ? p.exact(tr.t[i]) : oracle->at(tr.t[i]);
      double e = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) e = std::max(e, std::abs(u[k] - ref[k]));
      *csv << fmt17(e);
    }
    *csv << '\n';
  }

  if (rc.dump_state) {
    std::ofstream st(sibling(rc.out, "state.csv"));
    if (!st) throw ValidationError("cannot write state.csv next to " + rc.out);
    st << "step,t";
    for (std::size_t k = 0; k < p.sys.total_dim(); ++k) st << ",u" << k;
    st << '\n';
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
      st << i << ',' << fmt17(tr.t[i]);
      for (double x : tr.u[i]) st << ',' << fmt17(x);
      st << '\n';
    }
  }

  auto md = metadata(rc);
  md.emplace_back("reference", p.exact ? "exact" : oracle ? "fine_step" : "none");
  md.emplace_back("accepted_steps", std::to_string(tr.steps.size()));
  md.emplace_back("rejected_steps", std::to_string(tr.rejected));
  md.emplace_back("completed", tr.completed ? "true" : "false");
  md.emplace_back("final_time", fmt17(tr.final_time()));
  md.emplace_back("message", tr.message);
  if (rc.out == "-") {
    write_metadata(err, md);
  } else {
    std::ofstream meta(sidecar_path(rc.out));
    if (!meta) throw ValidationError("cannot write " + sidecar_path(rc.out));
    write_metadata(meta, md);
  }

  if (!tr.completed) {
    err << "integration failed: " << tr.message << '\n';
    return kIntegrationFailure;
  }
  return kOk;
}

/// Fine-step oracle states stored under `dir`, keyed by a hash of everything
/// that determines them.
inline ReferenceProvider cached_reference(const RunConfig& rc, double h, const std::string& dir) {
  return [&rc, h, dir](const std::vector<double>& times) {
    std::string key = rc.problem_text + "|" + fmt17(rc.problem.t0) + "|" + fmt17(h);
    for (double t : times) key += "|" + fmt17(t);
    const std::filesystem::path file =
        std::filesystem::path(dir) / ("ref_" + std::to_string(std::hash<std::string>{}(key)) + ".csv");
    if (std::ifstream in(file); in) {
      std::string stored_key;
      std::getline(in, stored_key);
      if (stored_key == key) {
        std::vector<Vector> states;
        std::string line;
        while (std::getline(in, line)) {
          Vector v;
          for (const auto& f : split(line, ',')) v.push_back(parse_number(f, "cached reference"));
          states.push_back(std::move(v));
        }
        if (states.size() == times.size()) return states;
      }
    }
    std::vector<Vector> states = fine_reference_states(rc.problem, h, times);
    std::filesystem::create_directories(dir);
    std::ofstream os(file);
    os << key << '\n';
    for (const auto& v : states) {
      for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << fmt17(v[i]);
      os << '\n';
    }
    return states;
  };
}

inline int cmd_convergence(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const ProblemDescriptor& p = rc.problem;
  if (!p.exact && !rc.oracle) {
    throw ValidationError("problem " + p.name +
                          " has no analytic reference; pass --oracle to use the fine-step oracle");
  }
  const auto ladder = halving_ladder(rc.dt0, static_cast<std::size_t>(rc.levels));
  ReferenceProvider provider;
  if (!rc.cache_dir.empty()) provider = cached_reference(rc, FineReference::step_for(ladder.back()), rc.cache_dir);
  const ConvergenceTable table =
      convergence_study(p, rc.method.build(), rc.integrate, ladder, rc.t_end, false, provider);

  Sink csv(rc.out, out);
  *csv << "dt,error,order,gamma_dev,final_time,steps\n";
  for (const auto& row : table.rows) {
    *csv << fmt17(row.dt) << ',' << fmt17(row.error) << ','
         << (row.order ? fmt17(*row.order) : std::string()) << ',' << fmt17(row.gamma_dev) << ','
         << fmt17(row.final_time) << ',' << row.steps << '\n';
  }
  auto md = metadata(rc);
  md.emplace_back("levels", std::to_string(rc.levels));
  md.emplace_back("reference", table.completed ? table.reference : "");
  md.emplace_back("completed", table.completed ? "true" : "false");
  md.emplace_back("message", table.message);
  if (rc.out == "-") {
    write_metadata(err, md);
  } else {
    std::ofstream meta(sidecar_path(rc.out));
    write_metadata(meta, md);
  }
  if (!table.completed) {
    err << "integration failed: " << table.message << '\n';
    return kIntegrationFailure;
  }
  return kOk;
}

inline void cmd_list(std::ostream& out) {
  out << "problems:\n";
  for (const auto& info : problem_registry()) {
    const ProblemDescriptor p = make_problem(info.name);
    const ProblemDefaults& d = p.defaults;
    out << "  " << info.name << "  params=" << (info.params.empty() ? "-" : info.params)
        << "  method=" << method_string(d.method) << "  relax=" << to_string(d.relax)
        << "  solver=" << to_string(d.solver) << "  adapt=" << to_string(d.adaptivity)
        << "  dt0=" << fmt17(d.dt0) << "  t_end=" << fmt17(p.t_end) << "  # " << info.summary
        << '\n';
  }
  out << "methods:\n"
      << "  mprk22:alpha  alpha >= 0.5  default mprk22:1\n"
      << "  mpssprk2:alpha,beta  0 <= alpha <= 1, beta > 0, alpha*beta + 1/(2 beta) <= 1"
         "  default mpssprk2:0.5,1\n"
      << "  mprk43i:alpha,beta  alpha >= 0.5, alpha != 2/3, beta > 0, beta != alpha, non-negative tableau"
         "  default mprk43i:0.5,0.75\n";
  out << "relax:\n";
  for (RelaxMode m : kRelaxModes) out << "  " << to_string(m) << '\n';
  out << "solvers:\n";
  for (ScalarSolver s : kSolvers) out << "  " << to_string(s) << '\n';
  out << "sigma-modes:\n";
  for (SigmaMode s : kSigmaModes) out << "  " << to_string(s) << '\n';
  out << "adapt:\n";
  for (Adaptivity a : kAdaptivity) out << "  " << to_string(a) << '\n';
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Relaxation for modified Patankar Runge-Kutta schemes", "relax-mprk"};
  // Plain key=value lines; method and problem values contain commas, so the
  // array separator is one that never occurs in a value.
  auto cfg = std::make_shared<CLI::ConfigBase>();
  cfg->comment('#')->arrayBounds('[', ']')->arrayDelimiter(';')->valueSeparator('=');
  app.config_formatter(cfg);
  app.set_config("--config", "", "key=value file with option defaults; flags win");
  app.require_subcommand(1);

  RawOptions raw;
  app.add_option("--problem", raw.problem, "name[:key=value,...], e.g. pme:m=3");
  app.add_option("--method", raw.method, "mprk22:alpha | mpssprk2:alpha,beta | mprk43i:alpha,beta");
  app.add_option("--relax", raw.relax, "none | clamped | geometric | implicit");
  app.add_option("--solver", raw.solver, "newton | regula_falsi | bisection | secant");
  app.add_option("--sigma-mode", raw.sigma_mode, "frozen | dense | bootstrap");
  app.add_option("--adapt", raw.adapt, "fixed | pid | relax_only | pid_and_relax");
  app.add_option("--dt0", raw.dt0, "initial (or fixed) step size");
  app.add_option("--t-end", raw.t_end, "final time");
  app.add_option("--rtol", raw.rtol, "relative tolerance of the error controller");
  app.add_option("--atol", raw.atol, "absolute tolerance of the error controller");
  app.add_option("--gamma-tol", raw.gamma_tol, "residual tolerance of the relaxation solve");
  app.add_option("--gamma-min", raw.gamma_min, "smallest admissible gamma");
  app.add_option("--gamma-max", raw.gamma_max, "largest admissible gamma");
  app.add_option("--max-iters", raw.max_iters, "iteration cap of the relaxation solve");
  app.add_option("--max-steps", raw.max_steps, "cap on attempted steps");
  app.add_flag("--allow-nonmonotone", raw.allow_nonmonotone,
               "permit geometric relaxation for non-monotone entropies");
  app.add_option("--out", raw.out, "output CSV path, '-' for stdout");
  app.add_flag("--dump-state", raw.dump_state, "also write state.csv next to the output");
  app.add_option("--seed", raw.seed, "recorded in the metadata");
  app.add_flag("--oracle", raw.oracle, "use the fine-step oracle when no analytic solution exists");
  app.add_option("--levels", raw.levels, "number of dt halvings in the convergence ladder");
  app.add_option("--cache-dir", raw.cache_dir, "directory for cached oracle solutions");

  CLI::App* run = app.add_subcommand("run", "integrate one problem and write a per-step CSV");
  CLI::App* conv = app.add_subcommand("convergence", "errors and observed orders over a dt ladder");
  CLI::App* list = app.add_subcommand("list", "registered problems, methods and options");
  for (CLI::App* sub : {run, conv, list}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return e.get_exit_code() == 0 ? kOk : kConfigError;
  }

  try {
    if (list->parsed()) {
      cmd_list(out);
      return kOk;
    }
    if (raw.out.empty()) raw.out = run->parsed() ? "run.csv" : "-";
    const RunConfig rc = resolve(raw);
    return run->parsed() ? cmd_run(rc, out, err) : cmd_convergence(rc, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "integration failed: " << e.what() << '\n';
    return kIntegrationFailure;
  }
}

}  // namespace relax_mprk::cli
