#include "cli.hpp"

#include "mrk/adapt.hpp"
#include "mrk/bench.hpp"
#include "mrk/scan.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>

namespace mrk::cli {

using nlohmann::json;

std::string format_ranges(const IndexList& indices) {
  std::string out;
  std::size_t k = 0;
  while (k < indices.size()) {
    std::size_t end = k;
    while (end + 1 < indices.size() && indices[end + 1] == indices[end] + 1) ++end;
    if (!out.empty()) out += ',';
    out += std::to_string(indices[k] + 1);
    if (end > k) out += '-' + std::to_string(indices[end] + 1);
    k = end + 1;
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  if (trim(text).empty()) return parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    parts.push_back(trim(text.substr(start, pos == std::string_view::npos ? text.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <class T>
T parse_number(std::string_view s, std::string_view what) {
  T value{};
  s = trim(s);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw std::invalid_argument("invalid " + std::string(what) + " '" + std::string(s) + "'");
  return value;
}

template <class T>
std::vector<T> parse_list(std::string_view text, std::string_view what) {
  std::vector<T> out;
  for (auto part : split(text, ',')) out.push_back(parse_number<T>(part, what));
  return out;
}

}  // namespace

IndexList parse_ranges(std::string_view text, Index n) {
  IndexList out;
  for (auto part : split(text, ',')) {
    const std::size_t dash = part.find('-');
    const Index lo = parse_number<Index>(part.substr(0, dash), "index range");
    const Index hi = dash == std::string_view::npos ? lo : parse_number<Index>(part.substr(dash + 1), "index range");
    if (lo < 1 || hi < lo || hi > n)
      throw std::invalid_argument("index range '" + std::string(part) + "' outside 1.." + std::to_string(n));
    for (Index i = lo; i <= hi; ++i) out.push_back(i - 1);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Exit status of a finished integration.
struct IntegrationFailure : std::runtime_error {
  IntegrationFailure(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

std::string flag_name(const std::string& key) {
  std::string name = "--" + key;
  std::replace(name.begin(), name.end(), '_', '-');
  return name;
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return format_number(v.get<double>());
  throw UsageError("config value " + v.dump() + " is not a scalar");
}

/// Flags equivalent to a JSON config object. Arrays become comma lists and
/// `params` entries become repeated --param key=value.
std::vector<std::string> config_flags(const json& config) {
  if (!config.is_object()) throw UsageError("config file must hold a JSON object");
  std::vector<std::string> flags;
  for (const auto& [key, value] : config.items()) {
    if (key == "command" || key == "config") continue;
    if (key == "params") {
      if (!value.is_object()) throw UsageError("config 'params' must be an object");
      for (const auto& [pk, pv] : value.items()) {
        flags.push_back("--param");
        flags.push_back(pk + "=" + pv.dump());
      }
      continue;
    }
    std::string text;
    if (value.is_array()) {
      for (std::size_t k = 0; k < value.size(); ++k) text += (k ? "," : "") + scalar_text(value[k]);
    } else {
      text = scalar_text(value);
    }
    flags.push_back(flag_name(key));
    flags.push_back(text);
  }
  return flags;
}

/// Inserts the flags of `--config FILE` directly after the subcommand so
/// that explicit flags, parsed later, take precedence.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) path = args[k + 1];
    else if (args[k].rfind("--config=", 0) == 0) path = args[k].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  json config;
  try {
    config = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config file '" + path + "': " + e.what());
  }
  const auto flags = config_flags(config);
  args.insert(args.begin() + 1, flags.begin(), flags.end());
  return args;
}

json parse_params(const std::vector<std::string>& entries) {
  json params = json::object();
  for (const auto& entry : entries) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--param expects key=value, got '" + entry + "'");
    const std::string key = entry.substr(0, eq);
    const std::string text = entry.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    params[key] = value.is_discarded() ? json(text) : value;
  }
  return params;
}

std::filesystem::path prepare_dir(const std::string& out) {
  std::filesystem::path dir(out.empty() ? "." : out);
  std::filesystem::create_directories(dir);
  return dir;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  return f;
}

// ---------------------------------------------------------------- solve

struct SolveOptions {
  std::string problem;
  std::vector<std::string> params;
  std::uint64_t seed = 42;
  std::string method = "esdirk3";
  std::string mode = "single";
  std::string interp = "dense";
  std::string jacobian = "JacB";
  SolverConfig config;
  double dt = 0.0;
  std::string indices;
  std::string out = ".";
};

json stats_json(const IntegrationResult& r) {
  const StepStats& s = r.stats;
  return json{{"accepted_global", s.accepted_global},
              {"rejected_global_error", s.rejected_global_error},
              {"rejected_global_convergence", s.rejected_global_convergence},
              {"accepted_fast", s.accepted_fast},
              {"rejected_fast_error", s.rejected_fast_error},
              {"rejected_fast_convergence", s.rejected_fast_convergence},
              {"global_rhs_calls", s.global_rhs_calls},
              {"global_jacobians", s.global_jacobians},
              {"local_rhs_calls", s.local_rhs_calls},
              {"local_jacobians", s.local_jacobians},
              {"newton_iterations", s.newton_iterations},
              {"factorizations", s.factorizations},
              {"global_stage_refreshes", s.global_stage_refreshes},
              {"local_stage_refreshes", s.local_stage_refreshes},
              {"wall_time_s", s.wall_time}};
}

void write_solution(const std::filesystem::path& path, const IntegrationResult& r) {
  auto f = open_output(path);
  f << 't';
  for (Index i : r.output_indices) f << ",y" << i + 1;
  f << '\n';
  for (std::size_t k = 0; k < r.output_times.size(); ++k) {
    f << format_number(r.output_times[k]);
    for (Index j = 0; j < r.outputs[k].size(); ++j) f << ',' << format_number(r.outputs[k](j));
    f << '\n';
  }
}

void write_activity(const std::filesystem::path& path, const IntegrationResult& r, Index n) {
  auto f = open_output(path);
  f << "step,kind,t_start,t_end,active\n";
  const std::string all = n > 1 ? "1-" + std::to_string(n) : "1";
  for (const auto& a : r.activity) {
    const bool global = a.kind == StepKind::global;
    f << a.step_index << ',' << (global ? "global" : "fast") << ',' << format_number(a.t_start) << ','
      << format_number(a.t_end) << ",\"" << (global ? all : format_ranges(a.active)) << "\"\n";
  }
}

int cmd_solve(SolveOptions o, std::ostream& log) {
  json params = parse_params(o.params);
  if (o.problem == "heating" && !params.contains("seed")) params["seed"] = o.seed;
  const auto problem = make_benchmark(o.problem, params);
  const ButcherTableau& method = get_method(o.method);

  SolverConfig& c = o.config;
  c.mode = integration_mode_from_string(o.mode);
  c.interp = interp_kind_from_string(o.interp);
  c.jacobian_strategy = jacobian_strategy_from_string(o.jacobian);
  const double span = problem->t_end() - problem->t0();
  c.output_times = uniform_grid(problem->t0(), problem->t_end(), o.dt > 0.0 ? o.dt : span / 100.0);
  if (!o.indices.empty()) c.output_indices = parse_ranges(o.indices, problem->size());
  c.record_activity = true;

  const IntegrationResult r = integrate(*problem, method, c);

  const auto dir = prepare_dir(o.out);
  write_solution(dir / "solution.csv", r);
  write_activity(dir / "activity.csv", r, problem->size());
  json stats = stats_json(r);
  stats["status"] = std::string(to_string(r.status));
  stats["partial"] = !r.ok();
  stats["message"] = r.message;
  stats["t_final"] = r.t_final;
  stats["problem"] = o.problem;
  stats["params"] = params;
  stats["method"] = o.method;
  stats["mode"] = o.mode;
  stats["rtol"] = c.rtol;
  stats["atol"] = c.atol;
  stats["phi"] = c.phi;
  stats["beta"] = c.beta;
  auto f = open_output(dir / "stats.json");
  f << stats.dump(2) << '\n';

  if (!r.ok()) {
    const int code = r.status == IntegrationStatus::nonfinite ? kExitNumeric : kExitIntegration;
    throw IntegrationFailure(code, "integration stopped at t = " + format_number(r.t_final) + ": " + r.message);
  }
  log << "solve: " << r.stats.accepted_global << " global and " << r.stats.accepted_fast
      << " fast steps accepted; outputs in " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- stability

struct StabilityOptions {
  ModelParams model;
  std::string method = "erk4";
  std::string interp = "hermite";
  std::string kappa = "0.9e-5,0.9e-4,0.9e-3,0.9e-2,0.9e-1,0.9";
  std::string M = "2,4,8,16,32,64,128";
  int c_max = 100;
  std::string c_grid;
  double rho_tol = kDefaultRhoTol;
  int workers = 0;
  std::string out = ".";
};

int cmd_stability(const StabilityOptions& o, std::ostream& log) {
  const auto kappas = parse_list<double>(o.kappa, "kappa");
  const auto Ms = parse_list<int>(o.M, "M");
  if (kappas.empty()) throw UsageError("--kappa list is empty");
  if (Ms.empty()) throw UsageError("--M list is empty");
  if (std::any_of(Ms.begin(), Ms.end(), [](int m) { return m < 1; })) throw UsageError("--M entries must be >= 1");
  std::vector<double> grid = o.c_grid.empty() ? std::vector<double>{} : parse_list<double>(o.c_grid, "C");
  if (grid.empty()) {
    if (o.c_max < 1) throw UsageError("--c-max must be >= 1");
    grid = default_c_grid(o.c_max);
  }
  const ButcherTableau& method = get_method(o.method);
  const InterpKind interp = interp_kind_from_string(o.interp);

  std::vector<ScanCell> cells;
  for (double kappa : kappas)
    for (int M : Ms) {
      ScanCell cell{o.model, M};
      cell.params.kappa = kappa;
      cells.push_back(cell);
    }
  const auto results = scan_cells(cells, method, interp, grid, o.rho_tol, o.workers);

  const auto dir = prepare_dir(o.out);
  {
    auto f = open_output(dir / "scan.csv");
    f << "kappa,M,C,rho,stable\n";
    for (std::size_t k = 0; k < cells.size(); ++k)
      for (const auto& p : results[k].points)
        f << format_number(cells[k].params.kappa) << ',' << cells[k].M << ',' << format_number(p.C) << ','
          << format_number(p.rho) << ',' << (p.stable ? 1 : 0) << '\n';
  }
  {
    auto f = open_output(dir / "table.csv");
    f << "kappa";
    for (int M : Ms) f << ",M=" << M;
    f << '\n';
    for (std::size_t i = 0; i < kappas.size(); ++i) {
      f << format_number(kappas[i]);
      for (std::size_t j = 0; j < Ms.size(); ++j) f << ',' << results[i * Ms.size() + j].limit.table_entry();
      f << '\n';
    }
  }
  log << "stability: " << cells.size() << " cells x " << grid.size() << " C values; outputs in " << dir.string()
      << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- accuracy

struct AccuracyOptions {
  ModelParams model{"4dof", 50.0, 1e-3, 0.01, 1.0, 1.0};
  std::string method = "erk4";
  std::string interp = "hermite";
  std::string C = "0.01,0.1,0.5,1,2,3,4,5";
  int M = 10;
  double t_final = 1.0;
  std::string out = ".";
};

int cmd_accuracy(const AccuracyOptions& o, std::ostream& log) {
  const auto Cs = parse_list<double>(o.C, "C");
  if (Cs.empty()) throw UsageError("--C list is empty");
  if (o.M < 1) throw UsageError("--M must be >= 1");
  if (!(o.t_final > 0.0)) throw UsageError("--t-final must be positive");
  const ButcherTableau& method = get_method(o.method);
  const InterpKind interp = interp_kind_from_string(o.interp);
  const auto model = o.model.build();

  const auto dir = prepare_dir(o.out);
  auto f = open_output(dir / "errors.csv");
  f << "C,single_rate_error,multirate_error\n";
  for (double C : Cs) {
    if (!(C > 0.0)) throw UsageError("C values must be positive");
    const auto single = propagator_error(model, method, interp, PropagatorMode::single, o.M, C, o.t_final);
    const auto multi = propagator_error(model, method, interp, PropagatorMode::multi, o.M, C, o.t_final);
    f << format_number(C) << ',' << format_number(single.error) << ',' << format_number(multi.error) << '\n';
  }
  log << "accuracy: " << Cs.size() << " C values; outputs in " << dir.string() << '\n';
  return kExitOk;
}

void add_config_flag(CLI::App* app) {
  app->add_option("--config", "JSON file with option values; explicit flags override it");
}

void add_solver_flags(CLI::App* app, SolveOptions& o) {
  SolverConfig& c = o.config;
  app->add_option("--problem", o.problem, "inverter, burgers, heating, zero or decay")->required();
  app->add_option("--param", o.params, "problem parameter override key=value")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app->add_option("--seed", o.seed, "seed of the heating switch schedule");
  app->add_option("--method", o.method, "erk4, erk4-owren, esdirk3 or esdirk4");
  app->add_option("--mode", o.mode, "single or multi");
  app->add_option("--interp", o.interp, "dense, hermite or linear");
  app->add_option("--jacobian", o.jacobian, "JacA or JacB");
  app->add_option("--rtol", c.rtol);
  app->add_option("--atol", c.atol);
  app->add_option("--alpha", c.safety.alpha, "step size safety factor");
  app->add_option("--alpha-min", c.safety.alpha_min);
  app->add_option("--alpha-max", c.safety.alpha_max);
  app->add_option("--beta", c.beta, "acceptance threshold");
  app->add_option("--phi", c.phi, "maximum fraction of fast components");
  app->add_option("--h0", c.h0, "initial step (0 selects automatically)");
  app->add_option("--h-min", c.h_min, "smallest step (0 selects automatically)");
  app->add_option("--newton-max-iters", c.newton_max_iters);
  app->add_option("--jac-a-refresh-period", c.jac_a_refresh_period);
  app->add_option("--extrapolate-guess", c.extrapolate_guess, "true or false");
  app->add_option("--max-attempts", c.max_attempts);
  app->add_option("--dt", o.dt, "output grid spacing (default: span / 100)");
  app->add_option("--indices", o.indices, "sampled components as 1-based ranges, e.g. 1-3,10");
  app->add_option("--out", o.out, "output directory");
}

void add_model_flags(CLI::App* app, ModelParams& m) {
  app->add_option("--model", m.kind, "2dof or 4dof");
  app->add_option("--alpha", m.alpha, "fast time scale ratio");
  app->add_option("--gamma1", m.gamma1, "4-DOF damping of the slow mass");
  app->add_option("--omega1", m.omega1, "4-DOF slow frequency");
  app->add_option("--beta", m.beta, "4-DOF damping ratio of the fast mass");
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& log) {
  CLI::App app{"Multi-rate Runge-Kutta toolkit", "mrk"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  SolveOptions solve;
  auto* solve_cmd = app.add_subcommand("solve", "integrate a benchmark problem");
  add_config_flag(solve_cmd);
  add_solver_flags(solve_cmd, solve);

  StabilityOptions stab;
  auto* stab_cmd = app.add_subcommand("stability", "scan multi-rate stability over C");
  add_config_flag(stab_cmd);
  add_model_flags(stab_cmd, stab.model);
  stab_cmd->add_option("--method", stab.method);
  stab_cmd->add_option("--interp", stab.interp);
  stab_cmd->add_option("--kappa", stab.kappa, "comma-separated coupling values");
  stab_cmd->add_option("--M", stab.M, "comma-separated sub-step counts");
  stab_cmd->add_option("--c-max", stab.c_max, "integer C grid 1..c_max");
  stab_cmd->add_option("--c-grid", stab.c_grid, "explicit comma-separated C grid");
  stab_cmd->add_option("--rho-tol", stab.rho_tol);
  stab_cmd->add_option("--workers", stab.workers, "threads (0: MRK_NUM_WORKERS or all)");
  stab_cmd->add_option("--out", stab.out);

  AccuracyOptions acc;
  auto* acc_cmd = app.add_subcommand("accuracy", "propagator error over a C sweep");
  add_config_flag(acc_cmd);
  add_model_flags(acc_cmd, acc.model);
  acc_cmd->add_option("--kappa", acc.model.kappa);
  acc_cmd->add_option("--method", acc.method);
  acc_cmd->add_option("--interp", acc.interp);
  acc_cmd->add_option("--C", acc.C, "comma-separated C values");
  acc_cmd->add_option("--M", acc.M);
  acc_cmd->add_option("--t-final", acc.t_final);
  acc_cmd->add_option("--out", acc.out);

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
    if (solve_cmd->parsed()) return cmd_solve(solve, log);
    if (stab_cmd->parsed()) return cmd_stability(stab, log);
    return cmd_accuracy(acc, log);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, log);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const IntegrationFailure& e) {
    log << "error: " << e.what() << '\n';
    return e.code;
  } catch (const nlohmann::json::exception& e) {
    log << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    log << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    log << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  }
}

}  // namespace mrk::cli
