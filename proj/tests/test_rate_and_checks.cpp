// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cmath>

#include <gtest/gtest.h>

#include "liblab/checks.hpp"
#include "support/generators.hpp"

using namespace liblab;
using namespace liblab::letters;

namespace {

// A state given by an explicit rule, used as an independent oracle.
class FnOracle : public TraceOracle {
 public:
  explicit FnOracle(std::function<Complex(const Word&)> f) : f_(std::move(f)) {}
  Complex operator()(const Word& w) const override { return f_(w); }

 private:
  std::function<Complex(const Word&)> f_;
};

XMatrices two_x(int N) {
  SimConfig c;
  c.N = N;
  c.x_spec = {XRecipe{0, 1, "diagonal_grid", {}, {}, {}}, XRecipe{0, 2, "diagonal_grid", 0.0, 1.0, {}}};
  return make_x_matrices(c);
}

std::vector<Tick> uniform_grid(double T, double step) {
  std::vector<Tick> g;
  for (Tick t = 0; t <= to_ticks(T); t += to_ticks(step)) g.push_back(t);
  return g;
}

NCPoly hermitian_test_poly() {
  NCPoly a(Word{x(1), u(1, 0.5)});
  a += NCPoly(Word{u(1, 0.3), x(2), u_star(1, 0.7)}, Complex(0.0, 0.5));
  return a + a.adjoint();
}

UnitaryPathEnsemble one_sample(const UnitaryPathEnsemble& e, std::size_t s) {
  UnitaryPathEnsemble r = e;
  r.samples = {e.samples[s]};
  return r;
}

}  // namespace

TEST(RateTerm, VanishesForTheUnit) {
  Sigma0FrbmOracle s0(two_x(8));
  EXPECT_NEAR(rate_term(s0, s0, NCPoly(1.0), 1, to_ticks(1.0), uniform_grid(1.0, 0.1)), 0.0, 1e-14);
}

TEST(RateTerm, NonPositiveAtTheFreeBrownianState) {
  Sigma0FrbmOracle s0(two_x(8));
  const NCPoly a = hermitian_test_poly();
  RateTerm r = rate_term_parts(s0, s0, a, 1, to_ticks(1.0), uniform_grid(1.0, 0.05));
  EXPECT_NEAR(r.final_value, r.initial, 1e-12);
  EXPECT_GT(r.energy, 0.0);
  EXPECT_LE(r.value(), 0.0);
}

TEST(RateTerm, ScalesLinearlyAndQuadraticallyInTheTestPolynomial) {
  Sigma0FrbmOracle s0(two_x(8));
  const NCPoly a = hermitian_test_poly();
  const auto grid = uniform_grid(1.0, 0.05);
  RateTerm r1 = rate_term_parts(s0, s0, a, 1, to_ticks(1.0), grid);
  RateTerm r2 = rate_term_parts(s0, s0, 2.0 * a, 1, to_ticks(1.0), grid);
  EXPECT_NEAR(r2.final_value, 2 * r1.final_value, 1e-12);
  EXPECT_NEAR(r2.initial, 2 * r1.initial, 1e-12);
  EXPECT_NEAR(r2.energy, 4 * r1.energy, 1e-12 * std::max(1.0, r1.energy));
}

TEST(RateTerm, RejectsNonSelfAdjointInput) {
  Sigma0FrbmOracle s0(two_x(8));
  EXPECT_THROW(rate_term(s0, s0, NCPoly(Word{x(1), u(1, 0.5)}), 1, to_ticks(1.0), {}), std::invalid_argument);
}

TEST(RateOfPotential, ZeroAndQuadraticScaling) {
  Sigma0FrbmOracle s0(two_x(8));
  const auto grid = uniform_grid(1.0, 0.05);
  EXPECT_EQ(rate_of_potential(s0, NCPoly{}, 1, grid), 0.0);
  const NCPoly c = hermitian_test_poly();
  const double v1 = rate_of_potential(s0, c, 1, grid), v3 = rate_of_potential(s0, 3.0 * c, 1, grid);
  EXPECT_GT(v1, 0.0);
  EXPECT_NEAR(v3, 9.0 * v1, 1e-12 * v3);
}

// c = f + f* with f = (y(s) − y(r))·x₁ has projected gradient
// i(y_t x₁ − x₁ y_t*) on (r, s], y_t = e^{t/2}u_t. With x₁ free from u_t the
// energy density is 2e^t τ(x²) − 2e^t Re τ(u x u x), where
// τ(u x u x) = τ(x)²τ(u²) + τ(x²)τ(u)² − τ(x)²τ(u)².
TEST(RateOfPotential, ClosedFormForACoordinateIncrement) {
  const double r = 0.2, s = 0.6;
  XMatrices xs = two_x(8);
  Sigma0FrbmOracle s0(xs);
  const NCPoly f = (y(1, s) - y(1, r)) * NCPoly(x(1));
  const NCPoly c = f + f.adjoint();
  const Matrix& x1 = xs.at({0, 1});
  const double m1 = x1.trace().real() / 8.0, m2 = (x1 * x1).trace().real() / 8.0;
  auto density = [&](double t) {
    const double tu = std::exp(-t / 2), tu2 = std::exp(-t) * (1 - t);
    const double uxux = m1 * m1 * tu2 + m2 * tu * tu - m1 * m1 * tu * tu;
    return 2 * std::exp(t) * (m2 - uxux);
  };
  double expected = 0.0;
  const int K = 4000;
  for (int k = 0; k < K; ++k) {
    const double a = r + (s - r) * k / K, b = r + (s - r) * (k + 1) / K;
    expected += 0.5 * (b - a) * (density(a) + density(b)) / 2.0;
  }
  EXPECT_NEAR(rate_of_potential(s0, c, 1, uniform_grid(1.0, 0.001)), expected, 1e-6);
}

TEST(RateOfPotential, DriftedEnsemblesAtTwoResolutionsAgree) {
  const NCPoly c = NCPoly(Word{x(1), u(1, 1.0)}) + NCPoly(Word{u_star(1, 1.0), x(1)});
  auto run = [&](int N, int samples) {
    SimConfig cfg;
    cfg.N = N;
    cfg.T = 1.0;
    cfg.dt = 0.01;
    cfg.samples = samples;
    cfg.seed = 1000 + N;
    cfg.x_spec = {XRecipe{}};
    cfg.drift = DriftSpec{c};
    std::vector<double> snaps;
    for (int k = 1; k < 20; ++k) snaps.push_back(k * 0.05);
    cfg.snapshot_times = snaps;
    return simulate_paths(cfg);
  };
  const auto grid = uniform_grid(1.0, 0.05);
  auto e64 = run(64, 12), e128 = run(128, 6);
  const double v128 = rate_of_potential(EmpiricalOracle(e128), c, 1, grid);
  std::vector<Complex> per;
  for (std::size_t s = 0; s < e64.size(); ++s) per.push_back(rate_of_potential(EmpiricalOracle(one_sample(e64, s)), c, 1, grid));
  const auto est = estimate(per);
  EXPECT_LE(std::abs(v128 - est.mean.real()), 3.0 * est.stderr) << v128 << " vs " << est.mean << " ± " << est.stderr;
}

TEST(GirsanovExponent, ZeroPotentialAndZeroStart) {
  SimConfig cfg;
  cfg.N = 6;
  cfg.T = 0.2;
  cfg.dt = 0.01;
  cfg.x_spec = {XRecipe{}};
  const auto grid = uniform_grid(0.2, 0.01);
  std::vector<double> sn;
  for (Tick t : grid) sn.push_back(to_seconds(t));
  cfg.snapshot_times = sn;
  auto e = simulate_paths(cfg);
  for (double v : girsanov_exponent(e.sample(0), NCPoly{}, grid, 1.0)) EXPECT_EQ(v, 0.0);
  const NCPoly c = 0.1 * (NCPoly(Word{x(1), u(1, 0.2)}) + NCPoly(Word{u_star(1, 0.2), x(1)}));
  auto I = girsanov_exponent(e.sample(0), c, grid, 1.0);
  EXPECT_NEAR(I.front(), 0.0, 1e-12);
  EXPECT_NE(I.back(), 0.0);
}

TEST(GirsanovExponent, ExponentialMartingaleHasUnitMeanAtSmallN) {
  CheckOptions o;
  o.N = 4;
  o.samples = 300;
  o.dt = 0.005;
  auto rs = checks::girsanov_battery(o);
  ASSERT_FALSE(rs.empty());
  const auto& m = rs.front();
  ASSERT_TRUE(m.stderr.has_value());
  EXPECT_LE(std::abs(m.observed - 1.0), 3.0 * *m.stderr) << m.observed << " ± " << *m.stderr;
  for (const auto& r : rs) EXPECT_TRUE(r.pass) << r.name() << " " << r.note;
}

TEST(TracialDistance, HandComputedOnATinyCorpus) {
  Corpus c;
  c.m_max = 2;
  c.times = {to_ticks(0.5)};
  c.x = {x(1)};
  c.R = 1.0;
  FnOracle a([](const Word& w) { return Complex(0.1 * static_cast<double>(w.size())); });
  FnOracle b([](const Word& w) { return w.size() == 2 ? Complex(0.5) : Complex(0.1 * static_cast<double>(w.size())); });
  // Length-1 words agree; length-2 words differ by 0.3. Weights 2^{−1}(2R)^{−m}
  // on the running maximum: ½·(½·0 + ¼·0.3).
  EXPECT_NEAR(tracial_distance(a, b, c), 0.5 * 0.25 * 0.3, 1e-15);
}

TEST(TracialDistance, MetricPropertiesOnRandomStates) {
  Corpus c;
  c.m_max = 3;
  c.times = {to_ticks(0.25), to_ticks(0.5)};
  c.x = {x(1)};
  testgen::Gen g(501);
  auto random_state = [&g](std::uint64_t salt) {
    const double s = g.uniform(-1, 1);
    return FnOracle([s, salt](const Word& w) {
      std::size_t h = salt;
      for (const auto& l : w.letters()) h = h * 1315423911u + static_cast<std::size_t>(l.t + 7 * l.star + 13 * int(l.kind));
      return Complex(std::sin(s * static_cast<double>(h % 1000)), 0.0);
    });
  };
  for (int k = 0; k < 30; ++k) {
    FnOracle a = random_state(k), b = random_state(k + 100), d = random_state(k + 200);
    EXPECT_EQ(tracial_distance(a, a, c), 0.0);
    EXPECT_GE(tracial_distance(a, b, c), 0.0);
    EXPECT_DOUBLE_EQ(tracial_distance(a, b, c), tracial_distance(b, a, c));
    EXPECT_LE(tracial_distance(a, d, c), tracial_distance(a, b, c) + tracial_distance(b, d, c) + 1e-15);
  }
}

TEST(TracialDistance, IndependentDriftlessEnsemblesAreWithinNoise) {
  auto run = [](std::uint64_t seed) {
    SimConfig cfg;
    cfg.N = 64;
    cfg.T = 0.5;
    cfg.dt = 0.01;
    cfg.samples = 16;
    cfg.seed = seed;
    cfg.snapshot_times = {0.25};
    cfg.x_spec = {XRecipe{}};
    return simulate_paths(cfg);
  };
  auto e1 = run(1), e2 = run(2);
  Corpus c;
  c.m_max = 2;
  c.times = {to_ticks(0.25), to_ticks(0.5)};
  c.x = {x(1)};
  auto d = tracial_distance_estimate(EmpiricalOracle(e1), EmpiricalOracle(e2), c);
  EXPECT_LE(d.distance, 2.0 * d.noise);
  EXPECT_GT(d.noise, 0.0);
}

TEST(CheckReport, PassRuleUsesTheLargerOfToleranceAndThreeStderr) {
  EXPECT_TRUE(make_report("s", "c", "", 1.05, 1.0, 0.1).pass);
  EXPECT_FALSE(make_report("s", "c", "", 1.2, 1.0, 0.1).pass);
  EXPECT_TRUE(make_report("s", "c", "", 1.2, 1.0, 0.1, 0.07).pass);
  EXPECT_FALSE(make_report("s", "c", "", std::nan(""), 1.0, 1e9).pass);
  EXPECT_FALSE(failed_report("s", "c", "boom").pass);
  EXPECT_EQ(make_report("s", "c", "", 0.0, 0.0, 0.0).name(), "s.c");
  EXPECT_EQ(make_report("s", "", "", 0.0, 0.0, 0.0).name(), "s");
}

TEST(CheckRunner, KnowsEverySuiteAndRejectsUnknownNames) {
  const auto& names = check_suite_names();
  EXPECT_EQ(names.size(), 18u);
  for (const char* required : {"lemma6_1_intertwine", "lemma3_8_gradient", "lemma6_3_gradient", "lemma4_1_martingale",
                               "lemma4_5_covariance", "eq4_3_isometry", "lemma4_6_selfadjoint",
                               "lemma4_7_infinitesimal", "cor4_13_sde_residual", "lemma4_10_semicircle",
                               "thm3_12_residual", "thm5_4_convergence", "sec6_3_rate_relation"})
    EXPECT_NE(std::find(names.begin(), names.end(), required), names.end()) << required;
  CheckRunner runner{CheckOptions{}};
  EXPECT_THROW(runner.run("no_such_suite"), std::invalid_argument);
}

TEST(CheckRunner, SymbolicAndClosedFormSuitesPassQuickly) {
  CheckRunner runner{CheckOptions{}};
  const auto t0 = std::chrono::steady_clock::now();
  for (const char* s : {"lemma6_1_intertwine", "lemma3_8_gradient", "lemma6_3_gradient", "nc_algebra_properties",
                        "lemma4_4_closed_form", "lemma4_10_burgers", "sec6_3_rate_relation"})
    for (const auto& r : runner.run(s)) EXPECT_TRUE(r.pass) << r.name() << " " << r.note;
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 30.0);
}

TEST(CheckRunner, SmallDriftlessBatteryIsDeterministicAndComplete) {
  CheckOptions o;
  o.N = 12;
  o.samples = 8;
  auto a = checks::driftless_battery(o), b = checks::driftless_battery(o);
  for (const char* s : {"lemma4_4_moments", "lemma4_1_martingale", "lemma4_5_covariance", "eq4_3_isometry",
                        "lemma4_6_selfadjoint", "lemma4_7_infinitesimal", "cor4_13_sde_residual"}) {
    ASSERT_TRUE(a.count(s)) << s;
    ASSERT_FALSE(a.at(s).empty()) << s;
    for (std::size_t k = 0; k < a.at(s).size(); ++k) {
      EXPECT_TRUE(std::isfinite(std::abs(a.at(s)[k].observed))) << a.at(s)[k].name();
      EXPECT_EQ(a.at(s)[k].observed, b.at(s)[k].observed) << a.at(s)[k].name();
    }
  }
}

TEST(CheckRunner, ThreadCountDoesNotChangeResults) {
  CheckOptions o;
  o.N = 8;
  o.samples = 6;
  auto a = checks::driftless_battery(o);
  o.threads = 3;
  auto b = checks::driftless_battery(o);
  for (const auto& [s, rs] : a)
    for (std::size_t k = 0; k < rs.size(); ++k) EXPECT_EQ(rs[k].observed, b.at(s)[k].observed) << rs[k].name();
}

TEST(CheckRunner, SemicircleHistogramIsNormalized) {
  CheckOptions o;
  o.N = 32;
  o.samples = 2;
  auto rs = checks::semicircle_battery(o);
  auto it = std::find_if(rs.begin(), rs.end(), [](const CheckReport& r) { return !r.table.empty(); });
  ASSERT_NE(it, rs.end());
  // Trapezoid over bin centres of the empirical column, independent of the report's own mass.
  double mass = 0.0;
  for (std::size_t k = 0; k + 1 < it->table.size(); ++k)
    mass += 0.5 * (it->table[k + 1][0] - it->table[k][0]) * (it->table[k][1] + it->table[k + 1][1]);
  EXPECT_NEAR(mass, 1.0, 0.02);
  double theory = 0.0;
  for (std::size_t k = 0; k + 1 < it->table.size(); ++k)
    theory += 0.5 * (it->table[k + 1][0] - it->table[k][0]) * (it->table[k][2] + it->table[k + 1][2]);
  EXPECT_NEAR(theory, 1.0, 0.02);
}
