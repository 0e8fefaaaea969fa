#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "io.hpp"
#include "spa/benchmarks.hpp"
#include "spa/gradients.hpp"
#include "spa/optimizer.hpp"
#include "spa/warmstart.hpp"

namespace spa::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidSwitchOrder:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InfeasiblePolytope:
    case ErrorCode::MissingCostate:
      return kConfigError;
    default:
      return kSolverFailure;
  }
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json to_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

std::string resolve_problem(const RunConfig& rc) {
  std::string name = rc.problem;
  if (name == "catalyst") {
    const int c = rc.problem_case.value_or(1);
    name += std::to_string(c);
  } else if (name == "catalyst1" || name == "catalyst2") {
    if (rc.problem_case && name.back() - '0' != *rc.problem_case) {
      throw ConfigError("--case " + std::to_string(*rc.problem_case) + " contradicts " + name);
    }
  } else if (rc.problem_case && *rc.problem_case != 1) {
    throw ConfigError("problem '" + name + "' has no Case-2 formulation");
  }
  const auto& names = problem_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string known;
    for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown problem '" + rc.problem + "' (known: " + known + ", catalyst)");
  }
  return name;
}

fs::path output_dir(const RunConfig& rc) {
  fs::path dir = rc.output_dir;
  if (dir.empty()) {
    const char* env = std::getenv("SPA_OUT_DIR");
    dir = env && *env ? fs::path(env) : fs::path(".");
  }
  fs::create_directories(dir);
  return dir;
}

GradientSettings gradient_settings(const RunConfig& rc, double default_tol) {
  GradientSettings gs;
  const double tol = rc.ode_tol.value_or(default_tol);
  gs.ode.rel_tol = tol;
  gs.ode.abs_tol = tol;
  gs.ode.validate();
  return gs;
}

std::optional<double> single_horizon(const RunConfig& rc) {
  if (rc.horizons.size() > 1) throw ConfigError("this command takes a single --T value");
  if (rc.horizons.empty()) return std::nullopt;
  return rc.horizons.front();
}

// Starting configuration from defaults and the --s0 / --p0 overrides.
SwitchConfig starting_config(const RunConfig& rc, const NamedProblem& np) {
  const ProblemDef& prob = np.problem;
  SwitchConfig cfg = np.start;
  if (!rc.s0.empty()) {
    if (static_cast<int>(rc.s0.size()) != prob.switch_count()) {
      throw ConfigError("--s0 needs " + std::to_string(prob.switch_count()) + " values for " +
                        prob.name);
    }
    cfg.s = to_vec(rc.s0);
  }
  if (!rc.p0.empty()) {
    if (!prob.is_case2()) throw ConfigError("--p0 is only meaningful for Case-2 problems");
    if (static_cast<int>(rc.p0.size()) != prob.n) {
      throw ConfigError("--p0 needs " + std::to_string(prob.n) + " values");
    }
    cfg.p0 = to_vec(rc.p0);
  }
  return cfg;
}

// --- warm start -------------------------------------------------------------

struct WarmOutcome {
  DiscreteControlProblem dcp;
  std::optional<StructureEstimate> structure;
  std::string diagnostic;
};

WarmOutcome run_warmstart(const ProblemDef& prob, int N, double rho) {
  WarmOutcome w;
  w.dcp = solve_tv_euler(prob, N, rho);
  DetectSettings ds;
  ds.expected_switches = prob.switch_count();
  try {
    w.structure = detect_structure(w.dcp, ds);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoStructure) throw;
    // Keep the bare message; callers re-wrap it with the code.
    const std::string msg = e.what();
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    w.diagnostic = msg.starts_with(prefix) ? msg.substr(prefix.size()) : msg;
  }
  return w;
}

void write_warmstart(const fs::path& dir, const std::string& name, const WarmOutcome& w) {
  const auto& dcp = w.dcp;
  io::CsvTable prof;
  prof.header.push_back("t");
  for (Eigen::Index i = 0; i < dcp.u.rows(); ++i) prof.header.push_back("u" + std::to_string(i + 1));
  for (int j = 0; j < dcp.N; ++j) {
    std::vector<double> row{dcp.time(j)};
    for (Eigen::Index i = 0; i < dcp.u.rows(); ++i) row.push_back(dcp.u(i, j));
    prof.rows.push_back(std::move(row));
  }
  io::write_csv(dir / "u_profile.csv", prof);

  json doc;
  doc["problem"] = name;
  doc["N"] = dcp.N;
  doc["T"] = dcp.T;
  doc["rho_tv"] = dcp.rho_tv;
  doc["iterations"] = dcp.iterations;
  doc["converged"] = dcp.converged;
  doc["warning"] = dcp.warning ? json(std::string(to_string(*dcp.warning))) : json(nullptr);
  doc["objective"] = dcp.objective;
  doc["terminal_cost"] = dcp.terminal_cost;
  doc["total_variation"] = dcp.total_variation();
  doc["p0_estimate"] = to_json(dcp.p0_estimate);
  if (w.structure) {
    const auto& st = *w.structure;
    doc["switch_times"] = st.switch_times;
    std::vector<std::string> kinds;
    for (auto k : st.phase_kinds) kinds.emplace_back(to_string(k));
    doc["phase_kinds"] = kinds;
    doc["jump_sizes"] = st.jump_sizes;
    doc["spurious"] = st.spurious;
    doc["diagnostic"] = nullptr;
  } else {
    doc["switch_times"] = nullptr;
    doc["phase_kinds"] = nullptr;
    doc["jump_sizes"] = nullptr;
    doc["spurious"] = nullptr;
    doc["diagnostic"] = w.diagnostic;
  }
  const DetectSettings ds;
  doc["detection"] = {{"jump_tol", ds.jump_tol}, {"bound_tol", ds.bound_tol}, {"k_max", ds.k_max}};
  io::write_json(dir / "structure.json", doc);
}

// --- solve -------------------------------------------------------------------

io::CsvTable trajectory_table(const ProblemDef& prob, const SwitchConfig& cfg,
                              const GradientSettings& gs, int per_phase = 51) {
  const auto fwd = forward_sweep(prob, cfg, gs);
  const auto bwd = backward_sweep(prob, cfg, fwd, gs);
  const int n = prob.n;
  const bool case2 = prob.is_case2();
  io::CsvTable tab;
  tab.header.push_back("t");
  for (int i = 0; i < n; ++i) tab.header.push_back("x" + std::to_string(i + 1));
  for (int i = 0; i < prob.m; ++i) tab.header.push_back("u" + std::to_string(i + 1));
  for (int i = 0; i < n; ++i) tab.header.push_back("p" + std::to_string(i + 1));
  const int k = prob.switch_count();
  for (int j = 0; j <= k; ++j) {
    const double a = fwd.switch_times[static_cast<std::size_t>(j)];
    const double b = fwd.switch_times[static_cast<std::size_t>(j) + 1];
    for (int i = 0; i < per_phase; ++i) {
      const double t = i + 1 == per_phase ? b : a + (b - a) * i / (per_phase - 1);
      const Vec z = fwd.trajectory.interpolate(t, j);
      const Vec x = z.head(n);
      // Case 2 carries the costate forward with the state; Case 1 takes it
      // from the backward sweep.
      const Vec p = case2 ? Vec(z.tail(n)) : Vec(bwd.trajectory.interpolate(t, j).head(n));
      const Vec u = phase_control(prob, j, t, x, case2 ? p : Vec());
      std::vector<double> row{t};
      row.insert(row.end(), x.data(), x.data() + n);
      row.insert(row.end(), u.data(), u.data() + u.size());
      row.insert(row.end(), p.data(), p.data() + n);
      tab.rows.push_back(std::move(row));
    }
  }
  return tab;
}

json gradient_json(const GradientBundle& g) {
  json out;
  out["d_s"] = to_json(g.d_s);
  out["d_p0"] = g.d_p0 ? to_json(*g.d_p0) : json(nullptr);
  out["d_T"] = g.d_T ? json(*g.d_T) : json(nullptr);
  return out;
}

json reference_json(const std::optional<ReferenceSolution>& ref) {
  if (!ref) return nullptr;
  json out;
  out["s"] = to_json(ref->s_star);
  out["T"] = ref->T_star ? json(*ref->T_star) : json(nullptr);
  out["C"] = ref->C_star ? json(*ref->C_star) : json(nullptr);
  out["singular_control"] = ref->u_sing;
  return out;
}

struct RunResult {
  int code = kOk;
  std::string summary;
  std::string diagnostics;
};

// Costate guess from the TV warm start. The grid is refined to h <= 0.03 since
// the coarse Euler costate is too inaccurate on long horizons.
Vec estimate_p0(const ProblemDef& prob, const RunConfig& rc) {
  const int N = std::max(rc.N, static_cast<int>(std::ceil(prob.T / 0.03)));
  return solve_tv_euler(prob, N, rc.rho_tv).p0_estimate;
}

RunResult solve_one(const RunConfig& rc, const std::string& name, std::optional<double> T,
                    const fs::path& dir) {
  RunResult res;
  std::ostringstream diag;
  const NamedProblem np = make_named_problem(name, T);
  const ProblemDef& prob = np.problem;
  const GradientSettings gs = gradient_settings(rc, 1e-8);
  SwitchConfig cfg = starting_config(rc, np);
  std::string start_source = rc.s0.empty() ? "default" : "user";
  std::string p0_source = rc.p0.empty() ? "default" : "user";

  if (rc.warmstart) {
    const WarmOutcome w = run_warmstart(prob, rc.N, rc.rho_tv);
    write_warmstart(dir, name, w);
    if (!w.structure) throw Error(ErrorCode::NoStructure, w.diagnostic);
    if (static_cast<int>(w.structure->switch_times.size()) != prob.switch_count()) {
      throw Error(ErrorCode::NoStructure,
                  "warm start found " + std::to_string(w.structure->switch_times.size()) +
                      " switches, the problem has " + std::to_string(prob.switch_count()));
    }
    cfg.s = Eigen::Map<const Vec>(w.structure->switch_times.data(),
                                  static_cast<Eigen::Index>(w.structure->switch_times.size()));
    start_source = "warmstart";
    if (prob.is_case2()) {
      cfg.p0 = w.structure->p0_estimate;
      p0_source = "warmstart";
    }
  } else if (prob.is_case2() && !cfg.p0) {
    cfg.p0 = estimate_p0(prob, rc);
    p0_source = "warmstart";
  }
  if (!prob.is_case2()) p0_source = "none";
  validate_config(prob, cfg, gs.gap_fraction);

  OptimizeSettings os;
  os.stat_tol = rc.opt_tol;
  os.gradient = gs;

  json report;
  report["problem"] = name;
  report["case"] = prob.is_case2() ? 2 : 1;
  report["free_time"] = prob.free_time;
  report["start"] = {{"s", to_json(cfg.s)},
                     {"p0", cfg.p0 ? to_json(*cfg.p0) : json(nullptr)},
                     {"T", horizon(prob, cfg)},
                     {"s_source", start_source},
                     {"p0_source", p0_source}};
  report["settings"] = {{"ode_tol", gs.ode.rel_tol}, {"opt_tol", os.stat_tol}};

  SwitchConfig final_cfg;
  if (rc.secant) {
    if (prob.switch_count() != 1) throw ConfigError("--secant needs a single-switch problem");
    std::pair<double, double> bracket;
    if (!rc.bracket.empty()) {
      if (rc.bracket.size() != 2) throw ConfigError("--bracket takes two values");
      bracket = {rc.bracket[0], rc.bracket[1]};
    } else if (np.bracket) {
      bracket = *np.bracket;
    } else {
      throw ConfigError("--secant needs --bracket for " + name);
    }
    const SecantResult sr = secant_switch(prob, bracket, os);
    final_cfg.s = Vec::Constant(1, sr.s);
    const GradientBundle g = evaluate_gradient(prob, final_cfg, gs);
    report["method"] = "secant";
    report["converged"] = !sr.local_maximum;
    report["failure"] = nullptr;
    report["iterations"] = sr.iterations;
    report["gradient_evals"] = sr.iterations + 2;
    report["objective"] = g.objective;
    report["stationarity"] = std::abs(sr.derivative);
    double worst = std::numeric_limits<double>::infinity();
    for (double m : g.feasibility_margins) worst = std::min(worst, m);
    report["worst_margin"] = worst;
    report["final_gradient"] = gradient_json(g);
    report["secant"] = {{"bracket", {bracket.first, bracket.second}},
                        {"slope", sr.slope},
                        {"local_maximum", sr.local_maximum}};
    json trace = json::array();
    for (std::size_t i = 0; i < sr.points.size(); ++i) {
      trace.push_back({{"iteration", i}, {"s", sr.points[i]}, {"dC_ds", sr.derivatives[i]}});
    }
    report["trace"] = trace;
    if (sr.local_maximum) {
      diag << name << ": secant converged to a stationary point with negative slope "
           << "(a local maximum); choose a bracket left of it\n";
      res.code = kSolverFailure;
    }
  } else {
    const SolveReport rep = minimize(prob, cfg, os);
    final_cfg = rep.final_cfg;
    report["method"] = "projected-lbfgs";
    report["converged"] = rep.converged;
    report["failure"] =
        rep.failure ? json(std::string(to_string(*rep.failure))) : json(nullptr);
    report["iterations"] = rep.iterations;
    report["gradient_evals"] = rep.gradient_evals;
    report["objective"] = rep.objective;
    report["stationarity"] = rep.stationarity;
    report["worst_margin"] = rep.worst_margin;
    report["final_gradient"] = gradient_json(rep.final_gradient);
    json trace = json::array();
    for (const auto& t : rep.trace) {
      trace.push_back({{"iteration", t.iteration},
                       {"objective", t.objective},
                       {"stationarity", t.stationarity},
                       {"step", t.step},
                       {"s", to_json(t.cfg.s)}});
    }
    report["trace"] = trace;
    if (!rep.converged) {
      diag << name << ": optimizer stopped without convergence ("
           << to_string(rep.failure.value_or(ErrorCode::MaxItersExceeded))
           << "), stationarity " << rep.stationarity << "\n";
      res.code = kSolverFailure;
    }
  }

  const double objective = report["objective"].get<double>();
  report["s"] = to_json(final_cfg.s);
  report["p0"] = final_cfg.p0 ? to_json(*final_cfg.p0) : json(nullptr);
  report["T"] = horizon(prob, final_cfg);
  report["reference"] = reference_json(np.reference);
  json errs = json::object();
  if (np.reference) {
    for (const auto& [key, val] : reference_errors(*np.reference, final_cfg, objective)) {
      errs[key] = val;
    }
  }
  report["reference_errors"] = errs;
  io::write_json(dir / "report.json", report);
  io::write_csv(dir / "trajectory.csv", trajectory_table(prob, final_cfg, gs));

  std::ostringstream sum;
  sum.precision(15);
  sum << name << " T=" << horizon(prob, final_cfg) << " C=" << objective << " s=(";
  for (Eigen::Index j = 0; j < final_cfg.s.size(); ++j) sum << (j ? ", " : "") << final_cfg.s[j];
  sum << ")";
  if (final_cfg.p0) sum << " p0=(" << (*final_cfg.p0)[0] << ", " << (*final_cfg.p0)[1] << ")";
  sum << (report["converged"].get<bool>() ? " converged" : " NOT converged");
  for (const auto& [key, val] : errs.items()) sum << " err_" << key << "=" << val.get<double>();
  sum << " -> " << (dir / "report.json").string() << "\n";
  res.summary = sum.str();
  res.diagnostics = diag.str();
  return res;
}

// Runs fn, mapping library and configuration errors onto exit codes.
template <class Fn>
RunResult guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    return {kConfigError, "", std::string("config error: ") + e.what() + "\n"};
  } catch (const Error& e) {
    return {exit_code_for(e.code()), "", std::string(e.what()) + "\n"};
  } catch (const std::exception& e) {
    return {kSolverFailure, "", std::string("error: ") + e.what() + "\n"};
  }
}

int cmd_solve(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const auto name_res = guarded([&] {
    RunResult r;
    r.summary = resolve_problem(rc);
    return r;
  });
  if (name_res.code != kOk) {
    err << name_res.diagnostics;
    return name_res.code;
  }
  const std::string name = name_res.summary;
  const fs::path base = output_dir(rc);

  std::vector<std::optional<double>> horizons;
  if (rc.horizons.empty()) horizons.push_back(std::nullopt);
  for (double T : rc.horizons) horizons.emplace_back(T);

  std::vector<RunResult> results(horizons.size());
  auto run_index = [&](std::size_t i) {
    results[i] = guarded([&] {
      fs::path dir = base;
      if (horizons.size() > 1) {
        dir /= name + "_T" + io::format_double(*horizons[i]);
        fs::create_directories(dir);
      }
      return solve_one(rc, name, horizons[i], dir);
    });
  };
  const std::size_t workers =
      std::min<std::size_t>(horizons.size(), static_cast<std::size_t>(std::max(1, rc.jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < horizons.size(); ++i) run_index(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < horizons.size(); i = next++) run_index(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  int code = kOk;
  for (const auto& r : results) {
    out << r.summary;
    err << r.diagnostics;
    code = std::max(code, r.code);
  }
  return code;
}

// --- warmstart ---------------------------------------------------------------

int cmd_warmstart(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const RunResult r = guarded([&] {
    const std::string name = resolve_problem(rc);
    const NamedProblem np = make_named_problem(name, single_horizon(rc));
    const fs::path dir = output_dir(rc);
    const WarmOutcome w = run_warmstart(np.problem, rc.N, rc.rho_tv);
    write_warmstart(dir, name, w);
    RunResult res;
    std::ostringstream sum;
    sum.precision(10);
    sum << name << " N=" << rc.N << " rho_tv=" << rc.rho_tv << " iterations=" << w.dcp.iterations;
    if (!w.structure) {
      res.code = kSolverFailure;
      res.diagnostics = "NoStructure: " + w.diagnostic + "\n";
    } else {
      sum << " switches=(";
      for (std::size_t i = 0; i < w.structure->switch_times.size(); ++i) {
        sum << (i ? ", " : "") << w.structure->switch_times[i];
      }
      sum << ") kinds=(";
      for (std::size_t i = 0; i < w.structure->phase_kinds.size(); ++i) {
        sum << (i ? ", " : "") << to_string(w.structure->phase_kinds[i]);
      }
      sum << ")";
      if (w.structure->spurious) sum << " [spurious jumps suspected]";
    }
    sum << " -> " << (dir / "structure.json").string() << "\n";
    res.summary = sum.str();
    return res;
  });
  out << r.summary;
  err << r.diagnostics;
  return r.code;
}

// --- gradcheck ---------------------------------------------------------------

struct CheckRow {
  std::string label;
  double analytic = 0.0;
  double fd = 0.0;
};

int cmd_gradcheck(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const RunResult r = guarded([&] {
    const std::string name = resolve_problem(rc);
    const NamedProblem np = make_named_problem(name, single_horizon(rc));
    const ProblemDef& prob = np.problem;
    const GradientSettings gs = gradient_settings(rc, 1e-12);
    SwitchConfig cfg = starting_config(rc, np);
    if (prob.is_case2() && !cfg.p0) cfg.p0 = estimate_p0(prob, rc);
    validate_config(prob, cfg, gs.gap_fraction);

    const GradientBundle g = evaluate_gradient(prob, cfg, gs);
    const double delta = 1e-6;
    auto central = [&](auto&& perturb, double scale) {
      const double h = delta * std::max(1.0, std::abs(scale));
      SwitchConfig cp = cfg, cm = cfg;
      perturb(cp, h);
      perturb(cm, -h);
      return (evaluate_objective(prob, cp, gs) - evaluate_objective(prob, cm, gs)) / (2.0 * h);
    };
    std::vector<CheckRow> rows;
    for (int j = 0; j < prob.switch_count(); ++j) {
      rows.push_back({"d_s" + std::to_string(j + 1), g.d_s[j],
                      central([j](SwitchConfig& c, double h) { c.s[j] += h; }, cfg.s[j])});
    }
    if (g.d_p0) {
      for (int i = 0; i < prob.n; ++i) {
        rows.push_back({"d_p0_" + std::to_string(i + 1), (*g.d_p0)[i],
                        central([i](SwitchConfig& c, double h) { (*c.p0)[i] += h; },
                                (*cfg.p0)[i])});
      }
    }
    if (g.d_T) {
      const FreeTimeCheck ft = free_time_gradient_check(prob, cfg, gs, delta);
      rows.push_back({"d_T", *g.d_T, ft.fd});
    }

    RunResult res;
    std::ostringstream tab;
    tab << "quantity,analytic,fd,abs_err,rel_err,status\n";
    bool ok = true;
    for (const auto& row : rows) {
      const double abs_err = std::abs(row.analytic - row.fd);
      const double scale = std::max(std::abs(row.analytic), std::abs(row.fd));
      const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
      const bool pass = abs_err <= 1e-8 || rel_err <= 1e-5;
      ok = ok && pass;
      tab << row.label << "," << io::format_double(row.analytic) << ","
          << io::format_double(row.fd) << "," << io::format_double(abs_err) << ","
          << io::format_double(rel_err) << "," << (pass ? "pass" : "FAIL") << "\n";
    }
    res.summary = tab.str();
    if (!ok) {
      res.code = kCheckFailure;
      res.diagnostics = name + ": analytic gradient disagrees with finite differences\n";
    }
    return res;
  });
  out << r.summary;
  err << r.diagnostics;
  return r.code;
}

// --- profile -----------------------------------------------------------------

std::vector<double> parse_grid(const std::string& text) {
  if (text.empty()) throw ConfigError("--grid is required (lo:hi:count or a comma list)");
  auto number = [](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw ConfigError("bad grid value '" + s + "'");
    return v;
  };
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("grid range must be lo:hi:count");
    const double lo = number(parts[0]), hi = number(parts[1]);
    const double cnt = number(parts[2]);
    if (cnt < 1 || cnt != std::floor(cnt)) throw ConfigError("grid count must be a positive integer");
    const int n = static_cast<int>(cnt);
    for (int i = 0; i < n; ++i) grid.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  } else {
    std::stringstream ss(text);
    std::string p;
    while (std::getline(ss, p, ',')) grid.push_back(number(p));
  }
  return grid;
}

int cmd_profile(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const RunResult r = guarded([&] {
    const std::string name = resolve_problem(rc);
    const NamedProblem np = make_named_problem(name, single_horizon(rc));
    const ProblemDef& prob = np.problem;
    if (prob.switch_count() != 1) throw ConfigError("profile needs a single-switch problem");
    if (prob.free_time) throw ConfigError("profile needs a fixed-time problem");
    const std::vector<double> grid = parse_grid(rc.grid);
    const GradientSettings gs = gradient_settings(rc, 1e-8);
    const fs::path dir = output_dir(rc);
    const auto prof = derivative_profile(prob, grid, gs, rc.jobs);
    const auto crossings = sign_changes(prof);

    io::CsvTable tab;
    tab.header = {"s", "dC_ds", "C", "crossing"};
    for (std::size_t i = 0; i < prof.size(); ++i) {
      const bool cross = std::find(crossings.begin(), crossings.end(), i) != crossings.end();
      tab.rows.push_back({prof[i].s, prof[i].derivative, prof[i].objective, cross ? 1.0 : 0.0});
    }
    io::write_csv(dir / "derivative_profile.csv", tab);

    RunResult res;
    std::ostringstream sum;
    sum.precision(15);
    sum << name << ": " << prof.size() << " grid points, " << crossings.size()
        << " sign change(s)";
    for (auto i : crossings) {
      const auto& a = prof[i];
      const auto& b = prof[i + 1];
      const double root = a.s - a.derivative * (b.s - a.s) / (b.derivative - a.derivative);
      sum << "\n  zero near s=" << root << " ("
          << (b.derivative > a.derivative ? "minimum" : "maximum") << ")";
    }
    sum << "\n -> " << (dir / "derivative_profile.csv").string() << "\n";
    res.summary = sum.str();
    return res;
  });
  out << r.summary;
  err << r.diagnostics;
  return r.code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  CLI::App app{"Switch point method for singular optimal control problems", "spa"};
  app.require_subcommand(1);

  auto problem_opts = [&rc](CLI::App* sub) {
    sub->add_option("--problem", rc.problem,
                    "catalyst1, catalyst2, catalyst (with --case), jacobson, bressan, goddard")
        ->required();
    sub->add_option("--case", rc.problem_case, "1: state feedback, 2: costate feedback")
        ->check(CLI::IsMember({1, 2}));
    sub->add_option("--out", rc.output_dir, "output directory (default $SPA_OUT_DIR or .)");
  };
  auto start_opts = [&rc](CLI::App* sub) {
    sub->add_option("--s0", rc.s0, "initial switch points, comma separated")->delimiter(',');
    sub->add_option("--p0", rc.p0, "initial costate (Case 2), comma separated")->delimiter(',');
  };
  auto ode_opt = [&rc](CLI::App* sub) {
    sub->add_option("--ode-tol", rc.ode_tol, "relative and absolute integrator tolerance")
        ->check(CLI::PositiveNumber);
  };
  auto warm_opts = [&rc](CLI::App* sub) {
    sub->add_option("--N", rc.N, "mesh intervals of the TV-regularized Euler problem")
        ->check(CLI::Range(2, 1000000));
    sub->add_option("--rho-tv", rc.rho_tv, "TV regularization weight")
        ->check(CLI::NonNegativeNumber);
  };
  auto jobs_opt = [&rc](CLI::App* sub) {
    sub->add_option("--jobs", rc.jobs, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* solve = app.add_subcommand("solve", "optimize switch points (and p0, T)");
  problem_opts(solve);
  solve->add_option("--T", rc.horizons, "horizon (goddard: initial guess); a list runs a sweep")
      ->delimiter(',');
  start_opts(solve);
  ode_opt(solve);
  solve->add_option("--opt-tol", rc.opt_tol, "stationarity tolerance")->check(CLI::PositiveNumber);
  solve->add_flag("--secant", rc.secant, "secant iteration on dC/ds (single switch)");
  solve->add_option("--bracket", rc.bracket, "two secant start points")->delimiter(',');
  solve->add_flag("--warmstart", rc.warmstart, "start from the TV warm start");
  warm_opts(solve);
  jobs_opt(solve);

  auto* warm = app.add_subcommand("warmstart", "TV-regularized Euler solve and structure detection");
  problem_opts(warm);
  warm->add_option("--T", rc.horizons, "horizon")->delimiter(',');
  warm_opts(warm);

  auto* check = app.add_subcommand("gradcheck", "compare gradients with central differences");
  problem_opts(check);
  check->add_option("--T", rc.horizons, "horizon (goddard: terminal time)")->delimiter(',');
  start_opts(check);
  ode_opt(check);
  warm_opts(check);

  auto* prof = app.add_subcommand("profile", "dC/ds over a grid of switch points");
  problem_opts(prof);
  prof->add_option("--T", rc.horizons, "horizon")->delimiter(',');
  prof->add_option("--grid", rc.grid, "lo:hi:count or comma list")->required();
  ode_opt(prof);
  jobs_opt(prof);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }

  try {
    if (solve->parsed()) return cmd_solve(rc, out, err);
    if (warm->parsed()) return cmd_warmstart(rc, out, err);
    if (check->parsed()) return cmd_gradcheck(rc, out, err);
    if (prof->parsed()) return cmd_profile(rc, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace spa::cli
