// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "liblab/config.hpp"
#include "liblab/report.hpp"

using namespace liblab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string config_error(const json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("liblab_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(RunConfig, UnknownKeysAreReportedWithTheirPath) {
  EXPECT_NE(config_error(json::parse(R"j({"sim": {"N": 8, "samplez": 3}})j")).find("$.sim.samplez"), std::string::npos);
  EXPECT_NE(config_error(json::parse(R"j({"simm": {}})j")).find("$.simm"), std::string::npos);
  EXPECT_NE(config_error(json::parse(R"j({"rate": {"a": "1*x(1)", "step": 1}})j")).find("$.rate.step"),
            std::string::npos);
}

TEST(RunConfig, TypeErrorsNameTheOffendingField) {
  EXPECT_NE(config_error(json::parse(R"j({"sim": {"N": "eight"}})j")).find("$.sim.N"), std::string::npos);
  EXPECT_NE(config_error(json::parse(R"j({"sim": {"snapshot_times": [0.1, "x"]}})j")).find("$.sim.snapshot_times[1]"),
            std::string::npos);
  EXPECT_NE(config_error(json::parse(R"j({"output": {"formats": ["xml"]}})j")).find("$.output.formats[0]"),
            std::string::npos);
}

TEST(RunConfig, PotentialsAndTestPolynomialsMustBeSelfAdjoint) {
  EXPECT_NE(config_error(json::parse(R"j({"drift": {"potential": "1*x(1)*u(1,0.5)"}})j")).find("self-adjoint"),
            std::string::npos);
  EXPECT_NE(config_error(json::parse(R"j({"rate": {"a": "(0+1i)*x(1)"}})j")).find("$.rate.a"), std::string::npos);
  EXPECT_EQ(config_error(json::parse(R"j({"rate": {"a": "1*x(1)*u(1,0.5) + 1*u*(1,0.5)*x(1)"}})j")), "");
}

TEST(RunConfig, UnknownSuitesAndBadSimulationValuesAreRejected) {
  EXPECT_NE(config_error(json::parse(R"j({"checks": ["lemma4_4_moments", "nope"]})j")).find("$.checks[1]"),
            std::string::npos);
  EXPECT_EQ(config_error(json::parse(R"j({"checks": ["all"]})j")), "");
  EXPECT_NE(config_error(json::parse(R"j({"sim": {"N": 0}})j")).find("$.sim"), std::string::npos);
  EXPECT_NE(config_error(json::parse(R"j({"sim": {"dt": -0.1}})j")).find("$.sim"), std::string::npos);
}

TEST(RunConfig, MissingFileAndMalformedJsonAreConfigErrors) {
  EXPECT_THROW(load_run_config("/nonexistent/liblab.json"), ConfigError);
  const fs::path d = scratch_dir("malformed");
  fs::create_directories(d);
  std::ofstream(d / "bad.json") << "{\"sim\": ";
  EXPECT_THROW(load_run_config((d / "bad.json").string()), ConfigError);
}

TEST(RunConfig, ShippedSampleConfigsParse) {
  for (const char* name : {"driftless.json", "drifted.json", "quick_checks.json"}) {
    const auto file = fs::path(LIBLAB_CONFIG_DIR) / name;
    EXPECT_NO_THROW(load_run_config(file.string())) << file;
  }
  RunConfig d = load_run_config((fs::path(LIBLAB_CONFIG_DIR) / "drifted.json").string());
  ASSERT_TRUE(d.sim.drift.has_value());
  ASSERT_TRUE(d.rate.has_value());
  EXPECT_EQ(d.output.formats, std::vector<std::string>{"csv"});
}

TEST(RunConfig, CheckOptionsOnlyOverrideWhatTheDocumentSets) {
  RunConfig rc = parse_run_config(json::parse(R"j({"sim": {"N": 24, "seed": 5}})j"));
  CheckOptions o = check_options(rc);
  EXPECT_EQ(o.N, 24);
  EXPECT_EQ(o.seed, 5u);
  EXPECT_FALSE(o.samples.has_value());
  EXPECT_FALSE(o.dt.has_value());
  EXPECT_EQ(check_options(parse_run_config(json::object())).seed, CheckOptions{}.seed);
}

TEST(Report, EmptyListGivesAHeaderOnlyCsv) {
  std::ostringstream os;
  write_csv({}, os);
  EXPECT_EQ(os.str(), "name,observed,expected,tol,stderr,pass\n");
}

TEST(Report, CsvRowsEscapeCommasAndLeaveStderrBlankForExactChecks) {
  std::ostringstream os;
  write_csv({make_report("s", "a,b", "", 0.5, 0.5, 1e-9)}, os);
  EXPECT_EQ(os.str(), "name,observed,expected,tol,stderr,pass\ns.a;b,0.5,0.5,1e-09,,true\n");
}

TEST(Report, JsonRoundTripPreservesEveryField) {
  CheckReport a = make_report("suite", "check", "N=4", Complex(0.25, -1.5), Complex(0.0, -1.5), 0.3, 0.01, "note");
  a.table = {{0.0, 1.0, 2.0}, {0.5, 1.5, 2.5}};
  CheckReport b = failed_report("other", "", "thrown");
  json j = reports_json({a, b});
  EXPECT_EQ(j.at("version"), LIBLAB_VERSION);
  auto back = reports_from_json(json::parse(j.dump()));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name(), a.name());
  EXPECT_EQ(back[0].params, a.params);
  EXPECT_EQ(back[0].observed, a.observed);
  EXPECT_EQ(back[0].expected, a.expected);
  EXPECT_EQ(back[0].tol, a.tol);
  EXPECT_EQ(back[0].stderr, a.stderr);
  EXPECT_EQ(back[0].pass, a.pass);
  EXPECT_EQ(back[0].note, a.note);
  EXPECT_EQ(back[0].table, a.table);
  EXPECT_FALSE(back[1].stderr.has_value());
  EXPECT_FALSE(back[1].pass);
  EXPECT_EQ(back[1].note, failed_report("other", "", "thrown").note);
}

TEST(Report, EmitWritesReportFilesAndOneTablePerPlotReport) {
  const fs::path d = scratch_dir("emit");
  CheckReport hist = make_report("lemma4_10_semicircle", "histogram mass", "", 1.0, 1.0, 0.02);
  // Empirical column: a triangle of unit mass on [0, 2].
  hist.table = {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, {2.0, 0.0, 0.0}};
  auto files = emit_report({hist, make_report("s", "c", "", 0.0, 0.0, 0.0)}, d.string(), {"json", "csv"});
  ASSERT_EQ(files.size(), 3u);
  EXPECT_TRUE(fs::exists(d / "report.json"));
  EXPECT_TRUE(fs::exists(d / "report.csv"));
  const fs::path table = d / "lemma4_10_semicircle.histogram_mass.dat";
  ASSERT_TRUE(fs::exists(table));

  std::istringstream in(slurp(table));
  std::string line;
  std::vector<std::array<double, 3>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::array<double, 3> r{};
    ls >> r[0] >> r[1] >> r[2];
    rows.push_back(r);
  }
  double mass = 0.0;
  for (std::size_t k = 0; k + 1 < rows.size(); ++k) mass += 0.5 * (rows[k + 1][0] - rows[k][0]) * (rows[k][1] + rows[k + 1][1]);
  EXPECT_NEAR(mass, 1.0, 0.02);
}

TEST(Report, UnknownFormatAndUnwritableDirectoryThrow) {
  EXPECT_THROW(emit_report({}, scratch_dir("fmt").string(), {"xml"}), std::invalid_argument);
  const fs::path d = scratch_dir("blocked");
  fs::create_directories(d.parent_path());
  std::ofstream(d) << "a file, not a directory";
  EXPECT_THROW(emit_report({}, (d / "sub").string(), {"json"}), std::runtime_error);
  fs::remove(d);
}
