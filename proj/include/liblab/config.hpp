// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "liblab/checks.hpp"
#include "liblab/matrix_sim.hpp"
#include "liblab/parse.hpp"

namespace liblab {

// Schema violations; the message starts with the JSON path of the field.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RateSpec {
  NCPoly a;
  double T = 1.0;
  double grid_step = 0.01;
};

struct OutputSpec {
  std::string dir = ".";
  std::vector<std::string> formats = {"json", "csv"};
};

struct RunConfig {
  SimConfig sim;
  std::set<std::string> sim_keys;  // fields present in the document
  std::vector<std::string> checks;
  std::optional<RateSpec> rate;
  OutputSpec output;
};

namespace config_detail {

using json = nlohmann::json;

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) { throw ConfigError(path + ": " + msg); }

inline void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) fail(path + "." + k, "unknown key");
  }
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

inline long long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<long long>();
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

inline std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> v;
  for (std::size_t k = 0; k < j.size(); ++k) v.push_back(number(j[k], path + "[" + std::to_string(k) + "]"));
  return v;
}

inline NCPoly poly(const json& j, const std::string& path) {
  try {
    return parse_poly(string(j, path));
  } catch (const ParseError& e) {
    fail(path, e.what());
  }
}

inline XRecipe x_recipe(const json& j, const std::string& path) {
  only_keys(j, path, {"i", "j", "kind", "lo", "hi", "path"});
  XRecipe r;
  if (j.contains("i")) r.i = static_cast<int>(integer(j["i"], path + ".i"));
  if (j.contains("j")) r.j = static_cast<int>(integer(j["j"], path + ".j"));
  if (j.contains("kind")) r.kind = string(j["kind"], path + ".kind");
  if (j.contains("lo")) r.lo = number(j["lo"], path + ".lo");
  if (j.contains("hi")) r.hi = number(j["hi"], path + ".hi");
  if (j.contains("path")) r.path = string(j["path"], path + ".path");
  if (r.kind != "diagonal_grid" && r.kind != "zero" && r.kind != "file")
    fail(path + ".kind", "must be one of diagonal_grid, zero, file");
  return r;
}

inline void sim(const json& j, RunConfig& rc) {
  const std::string p = "$.sim";
  only_keys(j, p,
            {"N", "n", "T", "dt", "snapshot_times", "horizons", "samples", "seed", "R", "x_spec", "scheme", "threads",
             "memory_cap_bytes"});
  SimConfig& s = rc.sim;
  for (const auto& [k, v] : j.items()) rc.sim_keys.insert(k);
  if (j.contains("N")) s.N = static_cast<int>(integer(j["N"], p + ".N"));
  if (j.contains("n")) s.n = static_cast<int>(integer(j["n"], p + ".n"));
  if (j.contains("T")) s.T = number(j["T"], p + ".T");
  if (j.contains("dt")) s.dt = number(j["dt"], p + ".dt");
  if (j.contains("snapshot_times")) s.snapshot_times = numbers(j["snapshot_times"], p + ".snapshot_times");
  if (j.contains("horizons")) s.horizons = numbers(j["horizons"], p + ".horizons");
  if (j.contains("samples")) s.samples = static_cast<int>(integer(j["samples"], p + ".samples"));
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) fail(p + ".seed", "expected a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("R")) s.R = number(j["R"], p + ".R");
  if (j.contains("x_spec")) {
    if (!j["x_spec"].is_array()) fail(p + ".x_spec", "expected an array");
    s.x_spec.clear();
    for (std::size_t k = 0; k < j["x_spec"].size(); ++k)
      s.x_spec.push_back(x_recipe(j["x_spec"][k], p + ".x_spec[" + std::to_string(k) + "]"));
  }
  if (j.contains("scheme")) {
    std::string sc = string(j["scheme"], p + ".scheme");
    if (sc == "exponential") s.scheme = Scheme::kExponential;
    else if (sc == "euler") s.scheme = Scheme::kEuler;
    else fail(p + ".scheme", "must be exponential or euler");
  }
  if (j.contains("threads")) s.threads = static_cast<int>(integer(j["threads"], p + ".threads"));
  if (j.contains("memory_cap_bytes"))
    s.memory_cap_bytes = static_cast<std::size_t>(integer(j["memory_cap_bytes"], p + ".memory_cap_bytes"));
}

inline void drift(const json& j, RunConfig& rc) {
  const std::string p = "$.drift";
  only_keys(j, p, {"potential", "mode", "inner_samples"});
  if (!j.contains("potential")) fail(p + ".potential", "required");
  DriftSpec d;
  d.potential = poly(j["potential"], p + ".potential");
  if (!approx_equal(d.potential.adjoint(), d.potential)) fail(p + ".potential", "must be self-adjoint");
  if (j.contains("mode")) {
    std::string m = string(j["mode"], p + ".mode");
    if (m == "symbolic") d.mode = DriftMode::kSymbolic;
    else if (m == "mc") d.mode = DriftMode::kMonteCarlo;
    else fail(p + ".mode", "must be symbolic or mc");
  }
  if (j.contains("inner_samples")) d.inner_samples = static_cast<int>(integer(j["inner_samples"], p + ".inner_samples"));
  rc.sim.drift = std::move(d);
}

}  // namespace config_detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  namespace cd = config_detail;
  cd::only_keys(j, "$", {"sim", "drift", "checks", "rate", "output"});
  RunConfig rc;
  if (j.contains("sim")) cd::sim(j["sim"], rc);
  if (j.contains("drift")) cd::drift(j["drift"], rc);
  if (j.contains("checks")) {
    const auto& c = j["checks"];
    if (!c.is_array()) cd::fail("$.checks", "expected an array of suite names");
    const auto& known = check_suite_names();
    for (std::size_t k = 0; k < c.size(); ++k) {
      std::string name = cd::string(c[k], "$.checks[" + std::to_string(k) + "]");
      if (name != "all" && std::find(known.begin(), known.end(), name) == known.end())
        cd::fail("$.checks[" + std::to_string(k) + "]", "unknown suite '" + name + "'");
      rc.checks.push_back(name);
    }
  }
  if (j.contains("rate")) {
    const auto& r = j["rate"];
    cd::only_keys(r, "$.rate", {"a", "T", "grid_step"});
    if (!r.contains("a")) cd::fail("$.rate.a", "required");
    RateSpec rs;
    rs.a = cd::poly(r["a"], "$.rate.a");
    if (!approx_equal(rs.a.adjoint(), rs.a)) cd::fail("$.rate.a", "must be self-adjoint");
    if (r.contains("T")) rs.T = cd::number(r["T"], "$.rate.T");
    if (r.contains("grid_step")) rs.grid_step = cd::number(r["grid_step"], "$.rate.grid_step");
    if (!(rs.T > 0)) cd::fail("$.rate.T", "must be positive");
    if (!(rs.grid_step > 0)) cd::fail("$.rate.grid_step", "must be positive");
    rc.rate = std::move(rs);
  }
  if (j.contains("output")) {
    const auto& o = j["output"];
    cd::only_keys(o, "$.output", {"dir", "formats"});
    if (o.contains("dir")) rc.output.dir = cd::string(o["dir"], "$.output.dir");
    if (o.contains("formats")) {
      if (!o["formats"].is_array()) cd::fail("$.output.formats", "expected an array");
      rc.output.formats.clear();
      for (std::size_t k = 0; k < o["formats"].size(); ++k) {
        const std::string path = "$.output.formats[" + std::to_string(k) + "]";
        std::string f = cd::string(o["formats"][k], path);
        if (f != "json" && f != "csv") cd::fail(path, "must be json or csv");
        rc.output.formats.push_back(f);
      }
    }
  }
  try {
    rc.sim.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("$.sim: ") + e.what());
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file + ": cannot open config file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(file + ": " + e.what());
  }
  return parse_run_config(j);
}

// Check options drawn from the config: only fields the document sets
// override the battery defaults.
inline CheckOptions check_options(const RunConfig& rc) {
  CheckOptions o;
  if (rc.sim_keys.count("seed")) o.seed = rc.sim.seed;
  if (rc.sim_keys.count("threads")) o.threads = rc.sim.threads;
  if (rc.sim_keys.count("N")) o.N = rc.sim.N;
  if (rc.sim_keys.count("samples")) o.samples = rc.sim.samples;
  if (rc.sim_keys.count("dt")) o.dt = rc.sim.dt;
  if (rc.sim.drift) o.potential = rc.sim.drift->potential;
  return o;
}

}  // namespace liblab
