// SPDX-License-Identifier: Apache-2.0
// liblab command line: simulate, check, rate, moments, burgers, report.
// Exit codes: 0 success, 1 failed checks or runtime failure, 2 bad input.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "liblab/checks.hpp"
#include "liblab/config.hpp"
#include "liblab/free_moments.hpp"
#include "liblab/matrix_sim.hpp"
#include "liblab/parse.hpp"
#include "liblab/rate.hpp"
#include "liblab/report.hpp"

namespace {

using namespace liblab;

// Input the user can fix: bad flags, bad config, bad expressions.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int threads_from_env(int flag) {
  if (const char* env = std::getenv("LIBLAB_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw UsageError("LIBLAB_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  return flag;
}

std::vector<std::string> split_suites(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

struct SimulateArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> samples;
  int threads = 1;
};

int run_simulate(const SimulateArgs& a) {
  RunConfig rc = load_run_config(a.config);
  SimConfig cfg = rc.sim;
  if (a.seed) cfg.seed = *a.seed;
  if (a.samples) cfg.samples = *a.samples;
  cfg.threads = threads_from_env(rc.sim_keys.count("threads") ? cfg.threads : a.threads);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  UnitaryPathEnsemble e;
  try {
    e = simulate_paths(cfg);
  } catch (const std::length_error& err) {
    throw ConfigError(err.what());
  }
  write_path_store(a.out, e);
  std::cout << "wrote " << e.size() << " samples, " << e.grid.size() << " snapshots, N=" << cfg.N << " to " << a.out
            << "\nconfig hash " << std::hex << e.hash << std::dec << "\n";
  return 0;
}

struct CheckArgs {
  std::string suite = "all";
  std::string config;
  std::string report;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

int run_check(const CheckArgs& a) {
  std::optional<RunConfig> rc;
  if (!a.config.empty()) rc = load_run_config(a.config);
  CheckOptions o = rc ? check_options(*rc) : CheckOptions{};
  if (a.seed) o.seed = *a.seed;
  o.threads = threads_from_env(rc && rc->sim_keys.count("threads") ? o.threads : a.threads);

  std::vector<std::string> names = split_suites(a.suite);
  if (rc && a.suite == "all" && !rc->checks.empty()) names = rc->checks;
  if (std::find(names.begin(), names.end(), "all") != names.end()) names = check_suite_names();
  const auto& known = check_suite_names();
  for (const auto& n : names)
    if (std::find(known.begin(), known.end(), n) == known.end()) throw UsageError("unknown check suite '" + n + "'");

  CheckRunner runner(o);
  std::vector<CheckReport> all;
  for (const auto& n : names) {
    auto rs = runner.run(n);
    for (const auto& r : rs)
      std::cout << (r.pass ? "PASS " : "FAIL ") << r.name() << "  observed=" << format_value(r.observed)
                << " expected=" << format_value(r.expected) << (r.note.empty() ? "" : "  (" + r.note + ")") << "\n";
    all.insert(all.end(), rs.begin(), rs.end());
  }

  if (!a.report.empty()) {
    std::filesystem::path p(a.report);
    std::string ext = p.extension().string();
    if (ext != ".json" && ext != ".csv") throw UsageError("--report must end in .json or .csv");
    std::string dir = p.parent_path().empty() ? "." : p.parent_path().string();
    emit_report(all, dir, {ext.substr(1)}, p.stem().string());
  } else if (rc) {
    emit_report(all, rc->output.dir, rc->output.formats);
  }

  const auto failed = std::count_if(all.begin(), all.end(), [](const CheckReport& r) { return !r.pass; });
  std::cout << all.size() - static_cast<std::size_t>(failed) << "/" << all.size() << " checks passed\n";
  return failed ? 1 : 0;
}

struct RateArgs {
  std::string config, a;
  std::optional<double> T, grid_step;
  int threads = 1;
};

int run_rate(const RateArgs& args) {
  RunConfig rc = load_run_config(args.config);
  RateSpec rs = rc.rate.value_or(RateSpec{});
  if (!args.a.empty()) {
    try {
      rs.a = parse_poly(args.a);
    } catch (const ParseError& e) {
      throw UsageError(std::string("--a: ") + e.what());
    }
    if (!approx_equal(rs.a.adjoint(), rs.a)) throw UsageError("--a: polynomial must be self-adjoint");
  }
  if (rs.a.is_zero() && !rc.rate) throw ConfigError("$.rate.a: required (or pass --a)");
  if (args.T) rs.T = *args.T;
  if (args.grid_step) rs.grid_step = *args.grid_step;

  SimConfig cfg = rc.sim;
  cfg.threads = threads_from_env(rc.sim_keys.count("threads") ? cfg.threads : args.threads);
  const Tick T = to_ticks(rs.T), step = to_ticks(rs.grid_step);
  if (step <= 0 || step % cfg.dt_ticks() != 0) throw UsageError("grid step must be a positive multiple of dt");
  if (T > to_ticks(cfg.T)) throw UsageError("rate horizon exceeds the simulated T");
  std::vector<Tick> grid;
  for (Tick t = 0; t <= T; t += step) grid.push_back(t);
  for (Tick t : rs.a.letter_times({Kind::U})) grid.push_back(t);
  if (cfg.drift)
    for (Tick t : cfg.drift->potential.letter_times({Kind::U})) grid.push_back(t);
  for (Tick t : grid)
    if (t % cfg.dt_ticks() != 0) throw UsageError("letter time " + format_time(t) + " is not on the dt grid");
  for (Tick t : grid) cfg.snapshot_times.push_back(to_seconds(t));
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("$.sim: ") + e.what());
  }
  UnitaryPathEnsemble e = simulate_paths(cfg);
  EmpiricalOracle oracle(e);
  Sigma0FrbmOracle sigma0(e.x);
  RateTerm r = rate_term_parts(oracle, sigma0, rs.a, cfg.n, T, grid);
  std::cout << "quantity,value\n"
            << "final_value," << format_number(r.final_value) << "\n"
            << "sigma0_frbm," << format_number(r.initial) << "\n"
            << "gradient_energy," << format_number(r.energy) << "\n"
            << "rate_term," << format_number(r.value()) << "\n";
  if (cfg.drift)
    std::cout << "rate_of_potential," << format_number(rate_of_potential(oracle, cfg.drift->potential, cfg.n, grid))
              << "\n";
  return 0;
}

int run_moments(const std::vector<int>& ns, const std::vector<double>& ts) {
  std::cout << "n,t,m_n(t)\n";
  for (int n : ns) {
    if (n < 0) throw UsageError("--n must be non-negative");
    for (double t : ts) std::cout << n << ',' << format_number(t) << ',' << format_number(ubm_moment(n, t)) << '\n';
  }
  return 0;
}

int run_burgers(const std::vector<double>& ts, const std::vector<std::string>& zs) {
  std::vector<Complex> points;
  for (const auto& s : zs) {
    NCPoly p;
    try {
      p = parse_poly(s);
    } catch (const ParseError& e) {
      throw UsageError("--z '" + s + "': " + e.what());
    }
    if (p.degree() != 0) throw UsageError("--z '" + s + "' is not a complex literal");
    points.push_back(p.coeff(Word{}));
  }
  std::cout << "t,Re z,Im z,residual\n";
  for (double t : ts)
    for (Complex z : points) {
      double r;
      try {
        r = burgers_residual(t, z);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      std::cout << format_number(t) << ',' << format_number(z.real()) << ',' << format_number(z.imag()) << ','
                << format_number(r) << '\n';
    }
  return 0;
}

int run_report(const std::string& input, const std::string& dir, const std::vector<std::string>& formats) {
  std::ifstream in(input);
  if (!in) throw UsageError(input + ": cannot open report");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(input + ": " + e.what());
  }
  std::vector<CheckReport> rs;
  try {
    rs = reports_from_json(j);
  } catch (const std::exception& e) {
    throw UsageError(input + ": not a report file (" + e.what() + ")");
  }
  for (const auto& f : emit_report(rs, dir, formats, std::filesystem::path(input).stem().string()))
    std::cout << "wrote " << f << "\n";
  const bool ok = std::all_of(rs.begin(), rs.end(), [](const CheckReport& r) { return r.pass; });
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"liblab: free stochastic calculus and unitary Brownian motion toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", LIBLAB_VERSION);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "simulate unitary Brownian paths into a path store");
  s->add_option("--config", sim.config, "run config (JSON)")->required();
  s->add_option("--out", sim.out, "path store output file")->required();
  s->add_option("--seed", sim.seed, "override the config seed");
  s->add_option("--samples", sim.samples, "override the sample count");
  s->add_option("--threads", sim.threads, "worker threads (LIBLAB_THREADS overrides)")->check(CLI::PositiveNumber);

  CheckArgs chk;
  auto* c = app.add_subcommand("check", "run named verification suites");
  c->add_option("--suite", chk.suite, "comma-separated suite names, or all");
  c->add_option("--config", chk.config, "run config (JSON)");
  c->add_option("--report", chk.report, "report file (.json or .csv); data tables go next to it");
  c->add_option("--seed", chk.seed, "override the seed");
  c->add_option("--threads", chk.threads, "worker threads (LIBLAB_THREADS overrides)")->check(CLI::PositiveNumber);

  RateArgs rate;
  auto* r = app.add_subcommand("rate", "rate functional of a test polynomial on a simulated ensemble");
  r->add_option("--config", rate.config, "run config (JSON)")->required();
  r->add_option("--a", rate.a, "self-adjoint test polynomial (overrides rate.a)");
  r->add_option("--T", rate.T, "horizon (overrides rate.T)");
  r->add_option("--grid-step", rate.grid_step, "integration grid step (overrides rate.grid_step)");
  r->add_option("--threads", rate.threads, "worker threads (LIBLAB_THREADS overrides)")->check(CLI::PositiveNumber);

  std::vector<int> mn = {1, 2, 3};
  std::vector<double> mt = {1.0};
  auto* m = app.add_subcommand("moments", "moments of the free unitary Brownian motion as CSV");
  m->add_option("--n", mn, "powers");
  m->add_option("--t", mt, "times")->check(CLI::NonNegativeNumber);

  std::vector<double> bt = {0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<std::string> bz = {"0+3i", "1+2.5i", "-2+2.5i", "3+2.2i", "-0.5+4i"};
  auto* b = app.add_subcommand("burgers", "Burgers characteristic residuals of the semicircle transform as CSV");
  b->add_option("--t", bt, "times");
  b->add_option("--z", bz, "points as complex literals a+bi");

  std::string rin, rdir = ".";
  std::vector<std::string> rfmt = {"csv"};
  auto* rep = app.add_subcommand("report", "re-emit a JSON report as CSV/JSON plus data tables");
  rep->add_option("--input", rin, "JSON report")->required();
  rep->add_option("--out", rdir, "output directory");
  rep->add_option("--format", rfmt, "json and/or csv")->check(CLI::IsMember({"json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*s) return run_simulate(sim);
    if (*c) return run_check(chk);
    if (*r) return run_rate(rate);
    if (*m) return run_moments(mn, mt);
    if (*b) return run_burgers(bt, bz);
    if (*rep) return run_report(rin, rdir, rfmt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
