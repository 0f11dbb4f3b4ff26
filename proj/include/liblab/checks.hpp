// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "liblab/cond_expect.hpp"
#include "liblab/derivation.hpp"
#include "liblab/free_moments.hpp"
#include "liblab/matrix_sim.hpp"
#include "liblab/oracle.hpp"
#include "liblab/rate.hpp"

namespace liblab {

struct CheckReport {
  std::string suite;
  std::string check;
  std::string params;
  Complex observed = 0.0;
  Complex expected = 0.0;
  double tol = 0.0;
  std::optional<double> stderr;  // stochastic checks only
  bool pass = false;
  std::string note;
  // Plot-ready rows (x, empirical, theoretical), if the check produces any.
  std::vector<std::array<double, 3>> table;

  std::string name() const { return check.empty() ? suite : suite + "." + check; }
};

// pass ⇔ |observed − expected| ≤ max(tol, 3·stderr)
inline CheckReport make_report(std::string suite, std::string check, std::string params, Complex observed,
                               Complex expected, double tol, std::optional<double> stderr = {},
                               std::string note = {}) {
  CheckReport r{std::move(suite), std::move(check), std::move(params), observed, expected, tol, stderr, false,
                std::move(note), {}};
  const double band = std::max(tol, 3.0 * stderr.value_or(0.0));
  r.pass = std::isfinite(std::abs(observed - expected)) && std::abs(observed - expected) <= band;
  return r;
}

// Anything a check throws becomes a failed report rather than a crash.
inline CheckReport failed_report(const std::string& suite, const std::string& check, const std::string& what) {
  CheckReport r;
  r.suite = suite;
  r.check = check;
  r.observed = std::numeric_limits<double>::quiet_NaN();
  r.note = "error: " + what;
  return r;
}

// Defaults reproduce the documented battery; the overrides exist for quick
// runs and for the CLI.
struct CheckOptions {
  std::uint64_t seed = 20240601;
  int threads = 1;
  std::optional<int> N;
  std::optional<int> samples;
  std::optional<double> dt;
  std::optional<NCPoly> potential;  // drift potential for the drifted and Girsanov checks
  int symbolic_cases = 0;           // 0: per-suite default
};

inline const std::vector<std::string>& check_suite_names() {
  static const std::vector<std::string> names = {
      "lemma6_1_intertwine", "lemma3_8_gradient",    "lemma6_3_gradient",       "nc_algebra_properties",
      "lemma4_4_closed_form", "lemma4_10_burgers",   "lemma4_4_moments",        "lemma4_1_martingale",
      "lemma4_5_covariance", "eq4_3_isometry",       "lemma4_6_selfadjoint",    "lemma4_7_infinitesimal",
      "cor4_13_sde_residual", "lemma4_10_semicircle", "eq5_2_girsanov_martingale", "thm3_12_residual",
      "thm5_4_convergence",  "sec6_3_rate_relation"};
  return names;
}

namespace checks {

inline XRecipe recipe(int i, int j, std::optional<double> lo = {}, std::optional<double> hi = {}) {
  XRecipe r;
  r.i = i;
  r.j = j;
  r.lo = lo;
  r.hi = hi;
  return r;
}

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Random polynomial generators for the symbolic corpora

class PolyGen {
 public:
  explicit PolyGen(std::uint64_t seed) : rng_(seed) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return uniform(0, 1) == 1; }
  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
  }
  Complex coefficient() {
    std::uniform_int_distribution<int> d(-3, 3);
    Complex c(d(rng_), d(rng_));
    return c == Complex(0.0) ? Complex(1.0) : c;
  }

  Letter lib_letter(int families, const std::vector<double>& times) {
    return letters::xl(uniform(1, families), uniform(1, 2), pick(times));
  }

  Word lib_word(int degree, int families, const std::vector<double>& times) {
    Word w;
    for (int k = 0; k < degree; ++k) w.push(lib_letter(families, times));
    return w;
  }

  // Letters over x_j and u_i(t)^{(*)}.
  Letter xu_letter(int n, const std::vector<double>& times) {
    if (uniform(0, 2) == 0) return letters::x(uniform(1, 2));
    return letters::u(uniform(1, n), pick(times), coin());
  }

  NCPoly xu_poly(int terms, int max_degree, int n, const std::vector<double>& times) {
    NCPoly p;
    for (int k = 0; k < terms; ++k) {
      Word w;
      const int d = uniform(0, max_degree);
      for (int m = 0; m < d; ++m) w.push(xu_letter(n, times));
      p += NCPoly(w, coefficient());
    }
    return p;
  }

  NCPoly lib_poly(int terms, int max_degree, int families, const std::vector<double>& times) {
    NCPoly p;
    for (int k = 0; k < terms; ++k) p += NCPoly(lib_word(uniform(0, max_degree), families, times), coefficient());
    return p;
  }

 private:
  std::mt19937_64 rng_;
};

// Elements of ts in (r, s]; half the draws land there so the indicator is
// exercised on both sides.
inline std::vector<double> window(const std::vector<double>& ts, double r, double s) {
  std::vector<double> w;
  for (double t : ts)
    if (t > r && t <= s) w.push_back(t);
  return w.empty() ? ts : w;
}

inline int cases_or(const CheckOptions& o, int def) { return o.symbolic_cases > 0 ? o.symbolic_cases : def; }

// Counts mismatches over a corpus and reports the count against zero.
inline CheckReport mismatch_report(const std::string& suite, const std::string& check, const std::string& params,
                                   int cases, int mismatches, const std::string& first) {
  return make_report(suite, check, params + " cases=" + std::to_string(cases), mismatches, 0.0, 0.0, {},
                     mismatches ? "first mismatch: " + first : "");
}

// ---------------------------------------------------------------------------
// Symbolic suites

// ᵘΠ^t∘ᵘ𝔇_{t,i}(ᵘa) against −i·ᵘ(Π^t∘𝔇_{t,i}a): the left side runs the
// unitary-alphabet derivation on the lifted word, the right side the
// liberation derivation followed by the lift.
inline std::vector<CheckReport> lemma6_1_intertwine(const CheckOptions& o) {
  const std::string suite = "lemma6_1_intertwine";
  PolyGen g(o.seed ^ 0x61);
  const std::vector<double> times = {0.0, 0.3, 0.7, 1.0};
  const std::vector<double> ts = {0.2, 0.5, 1.0};
  const int cases = cases_or(o, 100);
  int bad = 0;
  std::string first;
  for (int k = 0; k < cases; ++k) {
    // Draws with a vanishing derivative say nothing; redraw those.
    int n = 0, i = 0;
    Tick t = 0;
    NCPoly a;
    do {
      n = g.uniform(1, 3);
      a = NCPoly(g.lib_word(g.uniform(1, 6), n + 1, times));
      t = to_ticks(g.pick(ts));
      i = g.uniform(1, n);
    } while (D_lib(t, i, a).is_zero());
    NCPoly lhs = pi_t(t, D_u(t, i, lift_u(a, n)), n);
    NCPoly rhs = (-kI) * lift_u(pi_t(t, D_lib(t, i, a), n), n);
    if (!(lhs == rhs)) {
      if (!bad++) first = a.str() + " at t=" + format_time(t) + ", i=" + std::to_string(i);
    }
  }
  return {mismatch_report(suite, "", "degree<=6 n<=3 nonzero derivative", cases, bad, first)};
}

// E(Π^t 𝔇_{t,i}((y_{i'}(s) − y_{i'}(r))a)) = δ_{i,i'}·i·1_{(r,s]}(t)·y_i(t)·a
// for a with letters at times ≤ r.
inline std::vector<CheckReport> lemma3_8_gradient(const CheckOptions& o) {
  const std::string suite = "lemma3_8_gradient";
  PolyGen g(o.seed ^ 0x38);
  const std::vector<double> grid = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const std::vector<double> ts = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1};
  const int cases = cases_or(o, 50);
  int bad = 0;
  std::string first;
  for (int k = 0; k < cases; ++k) {
    int ri = g.uniform(0, 4), si = g.uniform(ri + 1, 5);
    const double r = grid[static_cast<std::size_t>(ri)], s = grid[static_cast<std::size_t>(si)];
    std::vector<double> past(grid.begin(), grid.begin() + ri + 1);
    const NCPoly a = g.xu_poly(g.uniform(1, 2), 3, 2, past);
    const int i = g.uniform(1, 2), ip = g.uniform(0, 3) ? i : 3 - i;
    const double t = g.coin() ? g.pick(window(ts, r, s)) : g.pick(ts);
    TracePoly lhs = projected_gradient((y(ip, s) - y(ip, r)) * a, i, to_ticks(t));
    NCPoly rhs;
    if (i == ip && t > r && t <= s) rhs = kI * y(i, t) * a;
    if (!approx_equal(lhs, TracePoly(rhs), 1e-12)) {
      if (!bad++)
        first = "a=" + a.str() + " r=" + fmt(r) + " s=" + fmt(s) + " t=" + fmt(t) + " i=" + std::to_string(i) +
                " i'=" + std::to_string(ip);
    }
  }
  return {mismatch_report(suite, "", "tol=1e-12", cases, bad, first)};
}

// E(Π^t 𝔇_{t,i}((e^s x̊(s) − e^r x̊(r))a)) = δ_{i,i'}·1_{(r,s]}(t)·[a, e^t x_ij(t)]
// with x̊ = x_{i'j} − Tr(x_{i'j}); one-letter trace symbols are compared up
// to their time-independence.
inline std::vector<CheckReport> lemma6_3_gradient(const CheckOptions& o) {
  const std::string suite = "lemma6_3_gradient";
  PolyGen g(o.seed ^ 0x63);
  const std::vector<double> grid = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const std::vector<double> ts = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1};
  const int cases = cases_or(o, 50);
  int bad = 0;
  std::string first;
  for (int k = 0; k < cases; ++k) {
    const int n = g.uniform(1, 2);
    int ri = g.uniform(0, 4), si = g.uniform(ri + 1, 5);
    const double r = grid[static_cast<std::size_t>(ri)], s = grid[static_cast<std::size_t>(si)];
    std::vector<double> past(grid.begin(), grid.begin() + ri + 1);
    const NCPoly a = g.lib_poly(g.uniform(1, 2), 3, n + 1, past);
    const int i = g.uniform(1, n), ip = g.uniform(0, 3) ? i : g.uniform(1, n), j = g.uniform(1, 2);
    const double t = g.coin() ? g.pick(window(ts, r, s)) : g.pick(ts);
    const Tick T = to_ticks(t);
    auto centred = [&](double tm) {
      Letter l = letters::xl(ip, j, tm);
      return TracePoly(NCPoly(l)) - TracePoly::trace_of(Word(l));
    };
    TracePoly arg = (std::exp(s) * centred(s) - std::exp(r) * centred(r)) * TracePoly(a);
    TracePoly lhs =
        cond_expect_past(arg.map_carriers([&](const NCPoly& q) { return pi_t(T, D_lib(T, i, q), n); }), T);
    NCPoly rhs;
    if (i == ip && t > r && t <= s) {
      NCPoly xt = NCPoly(letters::xl(i, j, t)) * std::exp(t);
      rhs = a * xt - xt * a;
    }
    if (!approx_equal(with_stationary_marginals(lhs), with_stationary_marginals(TracePoly(rhs)), 1e-12)) {
      if (!bad++)
        first = "a=" + a.str() + " r=" + fmt(r) + " s=" + fmt(s) + " t=" + fmt(t) + " i=" + std::to_string(i) +
                " i'=" + std::to_string(ip) + " j=" + std::to_string(j);
    }
  }
  return {mismatch_report(suite, "", "tol=1e-12", cases, bad, first)};
}

// Leibniz rules, homomorphism and involution properties on random corpora.
inline std::vector<CheckReport> nc_algebra_properties(const CheckOptions& o) {
  const std::string suite = "nc_algebra_properties";
  PolyGen g(o.seed ^ 0xa1);
  const std::vector<double> times = {0.0, 0.25, 0.5, 0.75, 1.0};
  const int cases = cases_or(o, 200);
  std::vector<CheckReport> out;
  auto run = [&](const std::string& name, const std::function<bool(std::string&)>& one) {
    int bad = 0;
    std::string first, desc;
    for (int k = 0; k < cases; ++k)
      if (!one(desc) && !bad++) first = desc;
    out.push_back(mismatch_report(suite, name, "", cases, bad, first));
  };
  auto xu = [&] { return g.xu_poly(g.uniform(1, 3), 3, 2, times); };
  auto lib = [&] { return g.lib_poly(g.uniform(1, 3), 3, 3, times); };

  run("leibniz_u", [&](std::string& d) {
    NCPoly a = xu(), b = xu();
    Tick t = to_ticks(g.pick(times));
    int i = g.uniform(1, 2);
    d = a.str() + " | " + b.str();
    return delta_u(t, i, a * b) == sandwich(NCPoly(1.0), delta_u(t, i, a), b) + sandwich(a, delta_u(t, i, b), NCPoly(1.0));
  });
  run("leibniz_lib", [&](std::string& d) {
    NCPoly a = lib(), b = lib();
    Tick t = to_ticks(g.pick(times));
    int i = g.uniform(1, 2);
    d = a.str() + " | " + b.str();
    return delta_lib(t, i, a * b) ==
           sandwich(NCPoly(1.0), delta_lib(t, i, a), b) + sandwich(a, delta_lib(t, i, b), NCPoly(1.0));
  });
  run("time_shift_homomorphism", [&](std::string& d) {
    NCPoly a = xu(), b = xu(), c = lib(), e = lib();
    Tick t = to_ticks(g.pick(times));
    d = a.str() + " | " + b.str();
    return pi_t(t, a * b) == pi_t(t, a) * pi_t(t, b) && pi_t(t, c * e, 2) == pi_t(t, c, 2) * pi_t(t, e, 2);
  });
  run("lift_homomorphism", [&](std::string& d) {
    NCPoly a = lib(), b = lib();
    d = a.str() + " | " + b.str();
    return lift_u(a * b, 2) == lift_u(a, 2) * lift_u(b, 2) && lift_u(a.adjoint(), 2) == lift_u(a, 2).adjoint();
  });
  run("adjoint_involution", [&](std::string& d) {
    NCPoly a = xu(), b = xu();
    d = a.str() + " | " + b.str();
    return a.adjoint().adjoint() == a && (a * b).adjoint() == b.adjoint() * a.adjoint();
  });
  run("cyclic_gradient_agrees", [&](std::string& d) {
    NCPoly a = xu();
    Tick t = to_ticks(g.pick(times));
    int i = g.uniform(1, 2);
    d = a.str();
    return approx_equal(D_u(t, i, a), D_u_cyclic(t, i, a), 1e-12);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form suites

inline std::vector<CheckReport> lemma4_4_closed_form(const CheckOptions&) {
  const std::string suite = "lemma4_4_closed_form";
  std::vector<CheckReport> out;
  out.push_back(make_report(suite, "m1", "t=1", ubm_moment(1, 1.0), std::exp(-0.5), 1e-10));
  out.push_back(make_report(suite, "m2", "t=1", ubm_moment(2, 1.0), 0.0, 1e-8));
  // m_2(t) = e^{−t}(1 − t), m_3(t) = e^{−3t/2}(1 − 3t + 3t²/2)
  for (double t : {0.25, 0.5, 2.0}) {
    out.push_back(make_report(suite, "m2", "t=" + fmt(t), ubm_moment(2, t), std::exp(-t) * (1 - t), 1e-8));
    out.push_back(make_report(suite, "m3", "t=" + fmt(t), ubm_moment(3, t),
                              std::exp(-1.5 * t) * (1 - 3 * t + 1.5 * t * t), 1e-8));
  }
  return out;
}

inline std::vector<CheckReport> lemma4_10_burgers(const CheckOptions&) {
  const std::string suite = "lemma4_10_burgers";
  std::vector<CheckReport> out;
  double worst = 0.0;
  for (double t : {0.25, 0.5, 1.0, 2.0, 4.0})
    for (Complex z : {Complex(0.0, 3.0), Complex(1.0, 2.5), Complex(-2.0, 2.5), Complex(3.0, 2.2), Complex(-0.5, 4.0)})
      worst = std::max(worst, burgers_residual(t, z));
  out.push_back(make_report(suite, "residual", "5x5 (t,z) grid", worst, 0.0, 1e-12));
  out.push_back(make_report(suite, "density_at_zero", "t=1", semicircle_density(1.0, 0.0), 1.0 / std::numbers::pi, 1e-12));
  // G(z) = Σ_k m_k / z^{k+1}
  const Complex z(0.0, 5.0);
  Complex series = 0.0;
  for (int k = 0; k <= 40; ++k) series += semicircle_moment(k, 1.0) / std::pow(z, k + 1);
  out.push_back(make_report(suite, "moment_series", "t=1 z=5i", series, semicircle_cauchy(1.0, z), 1e-6));
  out.push_back(make_report(suite, "cauchy_3i", "t=1 z=3i", semicircle_cauchy(1.0, Complex(0.0, 3.0)),
                            Complex(0.0, (std::sqrt(13.0) - 3.0) / 2.0) * -1.0, 1e-12));
  return out;
}

// ---------------------------------------------------------------------------
// Driftless battery: one ensemble, per-sample statistics

inline double relative_anti_hermitian(const Matrix& b) {
  const double nb = b.norm();
  return nb == 0.0 ? 0.0 : (0.5 * (b - b.adjoint())).norm() / nb;
}

struct DriftlessParams {
  int N = 128;
  int samples = 200;
  double dt = 1e-3;
};

inline std::map<std::string, std::vector<CheckReport>> driftless_battery(const CheckOptions& o) {
  DriftlessParams P;
  if (o.N) P.N = *o.N;
  if (o.samples) P.samples = *o.samples;
  if (o.dt) P.dt = *o.dt;
  const double r = 0.25, s = 0.5;
  const std::vector<double> hs = {0.2, 0.1, 0.05};  // infinitesimal-covariance increments from r
  const std::vector<double> deltas = {0.04, 0.02, 0.01};  // one-step SDE residual from s
  std::set<double> b_times = {r, s, 1.0};
  for (double h : hs) b_times.insert(r + h);
  for (double d : deltas) b_times.insert(s + d);

  SimConfig cfg;
  cfg.N = P.N;
  cfg.n = 2;
  cfg.T = 1.0;
  cfg.dt = P.dt;
  cfg.horizons = {1.0, s};
  cfg.samples = P.samples;
  cfg.seed = o.seed;
  cfg.x_spec = {recipe(0, 1)};
  cfg.snapshot_times = {b_times.begin(), b_times.end()};
  cfg.validate();
  const XMatrices xs = make_x_matrices(cfg);
  const Matrix& X = xs.at({0, 1});
  const int N = P.N;
  const Matrix I = Matrix::Identity(N, N);
  std::vector<Tick> keep;
  for (double t : b_times) keep.push_back(to_ticks(t));
  const Tick T_r = to_ticks(r), T_s = to_ticks(s), T_1 = to_ticks(1.0);

  // Per-sample statistic rows, one column per named quantity.
  std::vector<std::map<std::string, Complex>> rows(static_cast<std::size_t>(P.samples));
  parallel_for(P.samples, o.threads, [&](int smp) {
    std::vector<StochasticIntegral> b(2, StochasticIntegral(N));
    std::map<Tick, std::vector<Matrix>> bs;
    auto obs = [&](const StepEvent& ev) {
      for (int i = 0; i < 2; ++i)
        if (ev.propagator[static_cast<std::size_t>(i)].size()) b[static_cast<std::size_t>(i)].advance(ev.t1 - ev.t0, ev.propagator[static_cast<std::size_t>(i)]);
      if (std::binary_search(keep.begin(), keep.end(), ev.t1)) bs[ev.t1] = {b[0].value(), b[1].value()};
    };
    Snapshots snaps = simulate_sample(cfg, xs, nullptr, smp, keep, obs);
    auto U = [&](int i, Tick t) -> const Matrix& { return snaps.at(t)[static_cast<std::size_t>(i - 1)]; };
    auto Y = [&](int i, Tick t) -> Matrix { return std::exp(to_seconds(t) / 2) * U(i, t); };
    auto tr = [&](const Matrix& m) { return m.trace() / static_cast<double>(N); };
    auto& row = rows[static_cast<std::size_t>(smp)];

    row["m1"] = tr(U(1, T_1));
    row["m2"] = tr(U(1, T_1) * U(1, T_1));
    row["m3"] = tr(U(1, T_1) * U(1, T_1) * U(1, T_1));

    // Martingale increments against past test matrices.
    const std::vector<std::pair<std::string, Matrix>> past = {
        {"I", I}, {"U1(r)", U(1, T_r)}, {"U2(r)", U(2, T_r)}, {"X", X}, {"U1(r)XU1(r)*", U(1, T_r) * X * U(1, T_r).adjoint()}};
    for (int i = 1; i <= 2; ++i) {
      Matrix dY = Y(i, T_s) - Y(i, T_r);
      for (const auto& [name, A] : past) row["mart" + std::to_string(i) + ":" + name] = tr(dY * A.adjoint());
    }

    const Matrix dY1 = Y(1, T_s) - Y(1, T_r), dY2 = Y(2, T_s) - Y(2, T_r);
    row["cov11"] = tr(dY1 * dY1.adjoint());
    row["cov12"] = tr(dY1 * dY2.adjoint());
    row["cov11:X2"] = tr(dY1 * X * X * dY1.adjoint());

    const Matrix db = bs.at(T_1)[0] - bs.at(T_s)[0];
    row["iso:0.5-1"] = tr(db * db);
    row["iso:0-1"] = tr(bs.at(T_1)[0] * bs.at(T_1)[0]);
    row["antiherm"] = relative_anti_hermitian(bs.at(T_1)[0]);

    // ⟨Δb_i a Δb_j b⟩ / h against δ_ij tr(a)tr(b) for past a, b.
    const std::vector<std::tuple<std::string, Matrix, Matrix>> pairs = {
        {"1,1", I, I}, {"U1(r),U1(r)*", U(1, T_r), U(1, T_r).adjoint()}, {"X,X", X, X}, {"U2(r)X,U1(r)", U(2, T_r) * X, U(1, T_r)}};
    for (double h : hs) {
      const Tick th = to_ticks(r + h);
      const Matrix d1 = bs.at(th)[0] - bs.at(T_r)[0], d2 = bs.at(th)[1] - bs.at(T_r)[1];
      for (const auto& [name, a, bb] : pairs) {
        const Complex phi = tr(a) * tr(bb);
        row["inf11:" + name + ":" + fmt(h)] = tr(d1 * a * d1 * bb) / h - phi;
        row["inf12:" + name + ":" + fmt(h)] = tr(d1 * a * d2 * bb) / h;
      }
    }

    // One-step SDE residual ΔU − iΔb·U + ½U·Δ (no drift).
    for (double d : deltas) {
      const Tick td = to_ticks(s + d);
      const Matrix& U0 = U(1, T_s);
      Matrix res = U(1, td) - U0 - kI * (bs.at(td)[0] - bs.at(T_s)[0]) * U0 + 0.5 * d * U0;
      row["sde:" + fmt(d)] = tr(res) / d;
    }
  });

  auto col = [&](const std::string& key) {
    std::vector<Complex> v;
    for (const auto& row : rows) v.push_back(row.at(key));
    return estimate(v);
  };
  const std::string params = "N=" + std::to_string(P.N) + " samples=" + std::to_string(P.samples) + " dt=" + fmt(P.dt);
  auto rep = [&](const std::string& suite, const std::string& check, const std::string& key, Complex expected,
                 double tol, const std::string& extra = "") {
    TraceEstimate e = col(key);
    return make_report(suite, check, params + (extra.empty() ? "" : " " + extra), e.mean, expected, tol, e.stderr);
  };

  std::map<std::string, std::vector<CheckReport>> out;
  auto& mom = out["lemma4_4_moments"];
  mom.push_back(rep("lemma4_4_moments", "m1", "m1", std::exp(-0.5), 0.02, "t=1"));
  mom.push_back(rep("lemma4_4_moments", "m2", "m2", 0.0, 0.02, "t=1"));
  mom.push_back(rep("lemma4_4_moments", "m3", "m3", ubm_moment(3, 1.0), 0.02, "t=1"));

  auto& mart = out["lemma4_1_martingale"];
  for (int i = 1; i <= 2; ++i)
    for (std::string name : {"I", "U1(r)", "U2(r)", "X", "U1(r)XU1(r)*"})
      mart.push_back(rep("lemma4_1_martingale", "Z" + std::to_string(i) + " vs " + name,
                         "mart" + std::to_string(i) + ":" + name, 0.0, 0.02, "r=0.25 s=0.5"));

  const double kappa = std::exp(s) - std::exp(r);
  const Complex trX2 = (X * X).trace() / static_cast<double>(N);
  auto& cov = out["lemma4_5_covariance"];
  cov.push_back(rep("lemma4_5_covariance", "i=j a=b=1", "cov11", kappa, 0.05 * kappa, "r=0.25 s=0.5"));
  cov.push_back(rep("lemma4_5_covariance", "i!=j a=b=1", "cov12", 0.0, 0.02, "r=0.25 s=0.5"));
  cov.push_back(rep("lemma4_5_covariance", "i=j a=x^2 b=1", "cov11:X2", kappa * trX2, 0.05 * std::abs(kappa * trX2),
                    "r=0.25 s=0.5"));

  auto& iso = out["eq4_3_isometry"];
  iso.push_back(rep("eq4_3_isometry", "r=0.5 s=1", "iso:0.5-1", 0.5, 0.05 * 0.5));
  iso.push_back(rep("eq4_3_isometry", "r=0 s=1", "iso:0-1", 1.0, 0.05));

  auto& sa = out["lemma4_6_selfadjoint"];
  {
    double worst = 0.0;
    for (const auto& row : rows) worst = std::max(worst, row.at("antiherm").real());
    sa.push_back(make_report("lemma4_6_selfadjoint", "max relative anti-Hermitian part", params + " t=1", worst, 0.0, 0.05));
  }

  auto& inf = out["lemma4_7_infinitesimal"];
  for (const std::string name : {"1,1", "U1(r),U1(r)*", "X,X", "U2(r)X,U1(r)"}) {
    for (double h : hs) {
      inf.push_back(rep("lemma4_7_infinitesimal", "i=j " + name + " h=" + fmt(h), "inf11:" + name + ":" + fmt(h), 0.0,
                        0.05, "r=0.25"));
      inf.push_back(rep("lemma4_7_infinitesimal", "i!=j " + name + " h=" + fmt(h), "inf12:" + name + ":" + fmt(h), 0.0,
                        0.05, "r=0.25"));
    }
    // The remainder, divided by h, must not grow as h shrinks.
    TraceEstimate big = col("inf11:" + name + ":" + fmt(hs.front())), small = col("inf11:" + name + ":" + fmt(hs.back()));
    inf.push_back(make_report("lemma4_7_infinitesimal", "remainder trend " + name, params,
                              std::max(0.0, std::abs(small.mean) - std::abs(big.mean)), 0.0, 0.0,
                              std::hypot(big.stderr, small.stderr), "|rem(h)|/h at h=0.05 minus at h=0.2, clipped at 0"));
  }

  auto& sde = out["cor4_13_sde_residual"];
  for (double d : deltas)
    sde.push_back(rep("cor4_13_sde_residual", "|tr E residual|/dt dt=" + fmt(d), "sde:" + fmt(d), 0.0, 0.01, "t=0.5"));
  {
    TraceEstimate big = col("sde:" + fmt(deltas.front())), small = col("sde:" + fmt(deltas.back()));
    sde.push_back(make_report("cor4_13_sde_residual", "shrinks with dt", params,
                              std::max(0.0, std::abs(small.mean) - 0.5 * std::abs(big.mean)), 0.0, 0.0,
                              std::hypot(big.stderr, small.stderr),
                              "residual/dt at dt=0.01 minus half of it at dt=0.04, clipped at 0"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Semicircle battery at larger N

struct SemicircleParams {
  int N = 256;
  int samples = 8;
  double dt = 1e-3;
};

inline std::vector<CheckReport> semicircle_battery(const CheckOptions& o) {
  const std::string suite = "lemma4_10_semicircle";
  SemicircleParams P;
  if (o.N) P.N = *o.N;
  if (o.samples) P.samples = *o.samples;
  if (o.dt) P.dt = *o.dt;
  SimConfig cfg;
  cfg.N = P.N;
  cfg.n = 1;
  cfg.T = 1.0;
  cfg.dt = P.dt;
  cfg.samples = P.samples;
  cfg.seed = o.seed ^ 0x410;
  cfg.validate();
  const XMatrices xs;
  const std::vector<Complex> zs = {{0.0, 3.0}, {0.0, 2.0}, {1.5, 1.0}, {-0.5, 0.5}};
  std::vector<std::vector<Complex>> res(static_cast<std::size_t>(P.samples));
  std::vector<Eigen::VectorXd> eig(static_cast<std::size_t>(P.samples));
  std::vector<double> anti(static_cast<std::size_t>(P.samples));
  parallel_for(P.samples, o.threads, [&](int smp) {
    StochasticIntegral b(P.N);
    simulate_sample(cfg, xs, nullptr, smp, {}, [&](const StepEvent& ev) { b.advance(ev.t1 - ev.t0, ev.propagator[0]); });
    const auto k = static_cast<std::size_t>(smp);
    anti[k] = relative_anti_hermitian(b.value());
    Matrix h = hermitian_part(b.value());
    for (Complex z : zs) res[k].push_back(resolvent_trace(h, z));
    eig[k] = hermitian_eigenvalues(h);
  });
  const std::string params = "N=" + std::to_string(P.N) + " samples=" + std::to_string(P.samples) + " dt=" + fmt(P.dt) + " t=1";
  std::vector<CheckReport> out;
  for (std::size_t m = 0; m < zs.size(); ++m) {
    std::vector<Complex> v;
    for (const auto& r : res) v.push_back(r[m]);
    TraceEstimate e = estimate(v);
    out.push_back(make_report(suite, "resolvent z=" + format_complex(zs[m]), params, e.mean,
                              semicircle_cauchy(1.0, zs[m]), 0.02, e.stderr));
  }
  double lam = 0.0, worst_anti = 0.0;
  std::vector<double> all;
  for (std::size_t k = 0; k < eig.size(); ++k) {
    for (int m = 0; m < eig[k].size(); ++m) {
      lam = std::max(lam, std::abs(eig[k][m]));
      all.push_back(eig[k][m]);
    }
    worst_anti = std::max(worst_anti, anti[k]);
  }
  out.push_back(make_report(suite, "spectral radius", params, lam, 0.0, 2.1, {}, "all eigenvalues within [-2.1, 2.1]"));
  out.push_back(make_report(suite, "relative anti-Hermitian part", params, worst_anti, 0.0, 0.05));

  // Histogram of the pooled spectrum against the semicircle density.
  const int bins = 50;
  const double lo = -2.5, hi = 2.5, w = (hi - lo) / bins;
  std::vector<double> counts(bins, 0.0);
  for (double x : all) {
    int k = static_cast<int>(std::floor((x - lo) / w));
    if (k >= 0 && k < bins) counts[static_cast<std::size_t>(k)] += 1.0;
  }
  CheckReport hist;
  double mass = 0.0;
  std::vector<std::array<double, 3>> table;
  for (int k = 0; k < bins; ++k) {
    const double x = lo + (k + 0.5) * w;
    const double emp = counts[static_cast<std::size_t>(k)] / (static_cast<double>(all.size()) * w);
    table.push_back({x, emp, semicircle_density(1.0, x)});
    if (k) mass += 0.5 * w * (table[static_cast<std::size_t>(k - 1)][1] + emp);
  }
  hist = make_report(suite, "histogram mass", params + " bins=50 on [-2.5,2.5]", mass, 1.0, 0.02, {},
                     "trapezoid integral of the empirical density");
  hist.table = std::move(table);
  out.push_back(std::move(hist));
  return out;
}

// ---------------------------------------------------------------------------
// Girsanov martingale

inline NCPoly default_potential() {
  using namespace letters;
  return 0.1 * (NCPoly(Word{x(1), u(1, 0.5)}) + NCPoly(Word{u_star(1, 0.5), x(1)}));
}

struct GirsanovParams {
  int N = 8;
  int samples = 500;
  double dt = 1e-3;
  double T = 0.5;
};

inline std::vector<CheckReport> girsanov_battery(const CheckOptions& o) {
  const std::string suite = "eq5_2_girsanov_martingale";
  GirsanovParams P;
  if (o.N) P.N = *o.N;
  if (o.samples) P.samples = *o.samples;
  if (o.dt) P.dt = *o.dt;
  const NCPoly c = o.potential.value_or(default_potential());
  SimConfig cfg;
  cfg.N = P.N;
  cfg.n = 1;
  cfg.T = P.T;
  cfg.dt = P.dt;
  cfg.samples = P.samples;
  cfg.seed = o.seed ^ 0x52;
  cfg.x_spec = {recipe(0, 1), recipe(0, 2)};
  cfg.validate();
  const XMatrices xs = make_x_matrices(cfg);
  std::vector<Tick> grid;
  for (int k = 0; k <= cfg.steps(); ++k) grid.push_back(k * cfg.dt_ticks());
  const std::string params = "N=" + std::to_string(P.N) + " samples=" + std::to_string(P.samples) + " dt=" + fmt(P.dt) +
                             " T=" + fmt(P.T) + " c=" + c.str();
  std::vector<CheckReport> out;
  try {
    GirsanovExponent G(c, cfg.n, grid, cfg.R);
    std::vector<Complex> w(static_cast<std::size_t>(P.samples));
    std::vector<double> start(static_cast<std::size_t>(P.samples));
    const double N2 = static_cast<double>(P.N) * P.N;
    parallel_for(P.samples, o.threads, [&](int smp) {
      Snapshots snaps = simulate_sample(cfg, xs, nullptr, smp, grid);
      SamplePath path(cfg.N, cfg.n, &xs, &snaps);
      std::vector<double> I = G(path);
      w[static_cast<std::size_t>(smp)] = std::exp(N2 * I.back());
      start[static_cast<std::size_t>(smp)] = std::abs(I.front());
    });
    TraceEstimate e = estimate(w);
    out.push_back(make_report(suite, "E exp(N^2 I(T))", params, e.mean, 1.0, 0.0, e.stderr));
    out.push_back(make_report(suite, "I(0)", params, *std::max_element(start.begin(), start.end()), 0.0, 1e-12));
    out.push_back(make_report(suite, "bound", params, 0.0, 0.0, 0.0, {},
                              "every path stayed in [" + fmt(G.lower_bound()) + ", " + fmt(G.upper_bound()) + "]"));
  } catch (const std::exception& ex) {
    out.push_back(failed_report(suite, "E exp(N^2 I(T))", ex.what()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Drifted battery: the identity behind the rate function and convergence in N

inline std::vector<NCPoly> drifted_test_polys() {
  using namespace letters;
  auto w = [](std::initializer_list<Letter> ls) { return NCPoly(Word(ls)); };
  auto sym = [](const NCPoly& p) { return p + p.adjoint(); };
  return {
      sym(w({u(1, 0.5)})),
      sym(w({u(1, 0.5), u(1, 0.5)})),
      sym(w({x(1), u(1, 0.5)})),
      sym(w({x(1), u(1, 0.5), x(1), u_star(1, 0.5)})),
      sym(w({u(1, 0.25), u(1, 0.5)})),
      sym(w({x(1), u(1, 0.5), x(1), u(1, 0.5)})),
      sym(w({u(1, 0.5), u(1, 0.5), u(1, 0.5)})),
      sym(w({u(1, 0.3), x(1), u_star(1, 0.3), x(1)})),
      kI * (w({u(1, 0.5)}) - w({u_star(1, 0.5)})),
      sym(w({x(1), u(1, 0.2), u_star(1, 0.5)})),
  };
}

struct DriftedParams {
  std::vector<int> Ns = {32, 64, 128};
  std::vector<int> samples = {200, 100, 50};
  double dt = 1e-3;
  double T = 0.5;
  int blocks = 20;  // quadrature and control-variate blocks on [0, T]
};

// Per-sample residual of
//   tr π_N(a)(T) = σ0^frBM(a) + ∫ Σ_i tr(G_i(a,t) ξ_i(t)) dt + Σ_i ∫ tr(G_i(a,t) dH_i),
// G_i(a,t) = π_N(E(Π^t 𝔇_{t,i} a)). The stochastic integral has mean zero and
// serves as a control variate; its integrand is frozen on coarse blocks.
struct DriftedRun {
  int N = 0;
  UnitaryPathEnsemble ensemble;
  std::vector<TraceEstimate> mean_residual;  // per test polynomial, control variate applied
  // Root mean square over samples of the per-sample residual
  // tr π_N(a)(T) − σ0(a) − ∫⟨G, ξ⟩, i.e. of the identity for the empirical
  // state itself; stderr by the delta method.
  std::vector<TraceEstimate> rms_residual;
};

inline DriftedRun drifted_run(const CheckOptions& o, const NCPoly& c, const std::vector<NCPoly>& as, int N,
                              int samples, const DriftedParams& P, const std::vector<double>& keep_times) {
  SimConfig cfg;
  cfg.N = N;
  cfg.n = 1;
  cfg.T = P.T;
  cfg.dt = P.dt;
  cfg.samples = samples;
  cfg.seed = o.seed ^ 0x312;
  cfg.x_spec = {recipe(0, 1)};
  cfg.drift = DriftSpec{c, DriftMode::kSymbolic, 16};
  cfg.threads = o.threads;
  std::set<double> keep(keep_times.begin(), keep_times.end());
  for (const auto& a : as)
    for (Tick t : a.letter_times({Kind::U})) keep.insert(to_seconds(t));
  cfg.snapshot_times = {keep.begin(), keep.end()};
  cfg.validate();

  const Tick T = to_ticks(P.T), h = T / P.blocks;
  if (h * P.blocks != T || h % cfg.dt_ticks() != 0 || P.blocks % 2)
    throw std::invalid_argument("drifted battery: blocks must split T evenly on the dt grid");
  const int n = cfg.n;
  const std::size_t A = as.size(), J = static_cast<std::size_t>(P.blocks);

  // Symbolic gradients at every block node, on both sides of a possible jump.
  auto side_grads = [&](const NCPoly& p, Side side) {
    std::vector<std::vector<TracePoly>> g(J + 1);
    for (std::size_t j = 0; j <= J; ++j)
      for (int i = 1; i <= n; ++i) g[j].push_back(projected_gradient(p, i, static_cast<Tick>(j) * h, side));
    return g;
  };
  std::vector<std::vector<std::vector<TracePoly>>> ga_at, ga_right;
  for (const auto& a : as) {
    ga_at.push_back(side_grads(a, Side::kAt));
    ga_right.push_back(side_grads(a, Side::kRightLimit));
  }
  const auto gc_at = side_grads(c, Side::kAt), gc_right = side_grads(c, Side::kRightLimit);

  Sigma0FrbmOracle sigma0(make_x_matrices(cfg));
  std::vector<double> s0;
  for (const auto& a : as) s0.push_back(sigma0.value(TracePoly(a)).real());

  struct State {
    std::vector<Matrix> dH;                      // per component, summed over the current block
    std::vector<std::vector<Matrix>> G;          // per a, per component: right-limit gradient at the block start
    std::vector<std::vector<double>> f_at, f_right;  // per node, per a: Σ_i tr(G_i ξ_i)
    std::vector<double> mart;                    // per a
  };
  std::vector<State> st(static_cast<std::size_t>(samples));

  auto node_values = [&](State& s, const PathView& path, std::size_t j) {
    std::vector<Matrix> xi_at, xi_right;
    for (int i = 0; i < n; ++i) {
      xi_at.push_back(hermitian_part(eval_trace_poly(gc_at[j][static_cast<std::size_t>(i)], path)));
      xi_right.push_back(hermitian_part(eval_trace_poly(gc_right[j][static_cast<std::size_t>(i)], path)));
    }
    std::vector<double> fa(A), fr(A);
    s.G.assign(A, {});
    for (std::size_t k = 0; k < A; ++k) {
      for (int i = 0; i < n; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        Matrix gat = eval_trace_poly(ga_at[k][j][iu], path);
        Matrix gr = eval_trace_poly(ga_right[k][j][iu], path);
        fa[k] += detail::trace_of_product(gat, xi_at[iu]).real();
        fr[k] += detail::trace_of_product(gr, xi_right[iu]).real();
        s.G[k].push_back(std::move(gr));
      }
    }
    s.f_at[j] = std::move(fa);
    s.f_right[j] = std::move(fr);
  };

  // The t = 0 node is evaluated before the first step from the identity path.
  const XMatrices xs0 = make_x_matrices(cfg);
  for (int smp = 0; smp < samples; ++smp) {
    State& s = st[static_cast<std::size_t>(smp)];
    s.f_at.assign(J + 1, {});
    s.f_right.assign(J + 1, {});
    s.mart.assign(A, 0.0);
    s.dH.assign(static_cast<std::size_t>(n), Matrix::Zero(N, N));
  }
  {
    Snapshots zero = {{0, std::vector<Matrix>(static_cast<std::size_t>(n), Matrix::Identity(N, N))}};
    SamplePath p0(N, n, &xs0, &zero);
    State proto;
    proto.f_at.assign(J + 1, {});
    proto.f_right.assign(J + 1, {});
    node_values(proto, p0, 0);
    for (auto& s : st) {
      s.G = proto.G;
      s.f_at[0] = proto.f_at[0];
      s.f_right[0] = proto.f_right[0];
    }
  }

  DriftedRun run;
  run.N = N;
  run.ensemble = simulate_paths(cfg, [&](int smp, const StepEvent& ev) {
    State& s = st[static_cast<std::size_t>(smp)];
    for (int i = 0; i < n; ++i) s.dH[static_cast<std::size_t>(i)] += ev.dH[static_cast<std::size_t>(i)];
    if (ev.t1 % h) return;
    for (std::size_t k = 0; k < A; ++k)
      for (int i = 0; i < n; ++i)
        s.mart[k] +=
            detail::trace_of_product(s.G[k][static_cast<std::size_t>(i)], s.dH[static_cast<std::size_t>(i)]).real();
    for (auto& m : s.dH) m.setZero();
    node_values(s, ev.path, static_cast<std::size_t>(ev.t1 / h));
  });

  const double hs = to_seconds(h);
  for (std::size_t k = 0; k < A; ++k) {
    std::vector<Complex> res, sq;
    for (int smp = 0; smp < samples; ++smp) {
      const State& s = st[static_cast<std::size_t>(smp)];
      double integral = 0.0;  // composite Simpson; jumps sit on even nodes
      for (std::size_t j = 0; j + 2 <= J; j += 2)
        integral += hs / 3 * (s.f_right[j][k] + 4 * s.f_at[j + 1][k] + s.f_at[j + 2][k]);
      SamplePath path = run.ensemble.sample(static_cast<std::size_t>(smp));
      const double final_value = eval_poly(as[k], path).trace().real() / N;
      const double raw = final_value - s0[k] - integral;
      sq.push_back(raw * raw);
      res.push_back(raw - s.mart[k]);
    }
    run.mean_residual.push_back(estimate(res));
    TraceEstimate ms = estimate(sq);
    const double rms = std::sqrt(ms.mean.real());
    run.rms_residual.push_back({rms, rms > 0 ? ms.stderr / (2 * rms) : 0.0, ms.samples});
  }
  return run;
}

inline std::map<std::string, std::vector<CheckReport>> drifted_battery(const CheckOptions& o) {
  DriftedParams P;
  if (o.dt) P.dt = *o.dt;
  if (o.N) {
    P.Ns = {*o.N / 4, *o.N / 2, *o.N};
  }
  if (o.samples) P.samples = {*o.samples * 4, *o.samples * 2, *o.samples};  // the override sets the largest N
  const NCPoly c = o.potential.value_or(default_potential());
  const auto as = drifted_test_polys();
  const std::vector<double> corpus_times = {0.1, 0.2, 0.3, 0.4, 0.5};

  std::vector<DriftedRun> runs;
  for (std::size_t m = 0; m < P.Ns.size(); ++m)
    runs.push_back(drifted_run(o, c, as, P.Ns[m], P.samples[m], P, corpus_times));

  std::map<std::string, std::vector<CheckReport>> out;
  auto& r312 = out["thm3_12_residual"];
  const std::string base = "c=" + c.str() + " T=" + fmt(P.T) + " dt=" + fmt(P.dt);
  for (std::size_t k = 0; k < as.size(); ++k) {
    const std::string p = base + " a=" + as[k].str();
    const std::string tag = "a" + std::to_string(k + 1);
    for (const auto& run : runs)
      r312.push_back(make_report("thm3_12_residual", tag + " mean N=" + std::to_string(run.N),
                                 p + " samples=" + std::to_string(run.ensemble.size()), run.mean_residual[k].mean, 0.0,
                                 0.01, run.mean_residual[k].stderr, "ensemble mean, martingale control variate applied"));
    for (std::size_t m = 0; m + 1 < runs.size(); ++m) {
      const TraceEstimate &lo = runs[m].rms_residual[k], &hi = runs[m + 1].rms_residual[k];
      r312.push_back(make_report(
          "thm3_12_residual", tag + " rms N=" + std::to_string(runs[m].N) + "->" + std::to_string(runs[m + 1].N), p,
          std::max(0.0, hi.mean.real() - lo.mean.real()), 0.0, 0.0, std::hypot(lo.stderr, hi.stderr),
          "rms of the per-sample residual " + fmt(lo.mean.real()) + " -> " + fmt(hi.mean.real()) +
              "; increase clipped at 0"));
    }
  }
  int smaller = 0;
  std::string detail_note;
  for (std::size_t k = 0; k < as.size(); ++k) {
    const double lo = runs.back().rms_residual[k].mean.real(), hi = runs.front().rms_residual[k].mean.real();
    smaller += lo < hi;
    detail_note += (k ? " " : "") + std::string("a") + std::to_string(k + 1) + ":" + fmt(hi) + "->" + fmt(lo);
  }
  r312.push_back(make_report("thm3_12_residual",
                             "count rms R(N=" + std::to_string(P.Ns.back()) + ") < rms R(N=" + std::to_string(P.Ns.front()) + ")",
                             base, smaller, static_cast<double>(as.size()), 2.0, {}, detail_note));

  Corpus corpus;
  corpus.l_max = 1;
  corpus.m_max = 3;
  for (double t : corpus_times) corpus.times.push_back(to_ticks(t));
  corpus.x = {letters::x(1)};
  corpus.n = 1;
  corpus.R = 1.0;
  auto& r54 = out["thm5_4_convergence"];
  std::vector<DistanceEstimate> ds;
  for (std::size_t m = 0; m + 1 < runs.size(); ++m) {
    EmpiricalOracle a(runs[m].ensemble), b(runs[m + 1].ensemble);
    ds.push_back(tracial_distance_estimate(a, b, corpus));
    r54.push_back(make_report("thm5_4_convergence",
                              "d(N=" + std::to_string(runs[m].N) + ", N=" + std::to_string(runs[m + 1].N) + ")",
                              base + " corpus m<=3 times 0.1..0.5", ds.back().distance, 0.0, 0.05, {},
                              "noise level " + fmt(ds.back().noise)));
  }
  for (std::size_t m = 0; m + 1 < ds.size(); ++m)
    r54.push_back(make_report("thm5_4_convergence", "non-increasing step " + std::to_string(m + 1), base,
                              std::max(0.0, ds[m + 1].distance - ds[m].distance), 0.0, 0.0,
                              std::hypot(ds[m].noise, ds[m + 1].noise),
                              "increase of the distance, clipped at 0; band from the per-word standard errors"));
  return out;
}

// ---------------------------------------------------------------------------
// Rate relation between the liberation alphabet and its lift

inline NCPoly default_liberation_potential() {
  using namespace letters;
  NCPoly a = NCPoly(Word{xl(1, 1, 0.5), xl(2, 1, 0.3)});
  return 0.1 * (a + a.adjoint()) + 0.05 * NCPoly(Word{xl(1, 1, 0.2), xl(3, 1, 0.0), xl(1, 1, 0.2)});
}

inline std::vector<CheckReport> sec6_3_rate_relation(const CheckOptions& o) {
  const std::string suite = "sec6_3_rate_relation";
  const int n = 2;
  const NCPoly c = default_liberation_potential();
  const NCPoly cu = lift_u(c, n);
  std::vector<Tick> grid;
  for (int k = 0; k <= 10; ++k) grid.push_back(to_ticks(0.05 * k));

  auto integrand_lib = [&](Tick t, Side side) {
    TracePoly e;
    for (int i = 1; i <= n; ++i) {
      TracePoly g = projected_gradient_lib(c, i, t, n, side);
      e += (g * g.adjoint()).trace();
    }
    return e;
  };
  auto integrand_u = [&](Tick t, Side side) {
    TracePoly e;
    for (int i = 1; i <= n; ++i) {
      TracePoly g = projected_gradient(cu, i, t, side);
      e += (g * g.adjoint()).trace();
    }
    return e;
  };

  std::vector<CheckReport> out;
  int bad = 0;
  std::string first;
  std::vector<std::tuple<Tick, Side, TracePoly, TracePoly>> forms;
  for (Tick t : grid)
    for (Side side : {Side::kAt, Side::kRightLimit}) {
      TracePoly l = lift_u(integrand_lib(t, side), n), u = integrand_u(t, side);
      if (!approx_equal(l, u, 1e-12) && !bad++) first = "t=" + format_time(t);
      forms.emplace_back(t, side, integrand_lib(t, side), u);
    }
  out.push_back(mismatch_report(suite, "symbolic integrands", "c=" + c.str() + " n=2", static_cast<int>(forms.size()),
                                bad, first));

  SimConfig cfg;
  cfg.N = o.N.value_or(16);
  cfg.n = n;
  cfg.T = 0.5;
  cfg.dt = o.dt.value_or(1e-3);
  cfg.samples = o.samples.value_or(40);
  cfg.seed = o.seed ^ 0x63;
  cfg.threads = o.threads;
  cfg.x_spec = {recipe(1, 1), recipe(2, 1), recipe(3, 1, -0.5, 1.0)};
  for (Tick t : grid) cfg.snapshot_times.push_back(to_seconds(t));
  const std::string params = "N=" + std::to_string(cfg.N) + " samples=" + std::to_string(cfg.samples);
  try {
    UnitaryPathEnsemble e = simulate_paths(cfg);
    EmpiricalOracle oracle(e);
    double worst = 0.0;
    for (const auto& [t, side, l, u] : forms)
      worst = std::max(worst, std::abs(oracle.value(l) - oracle.value(u)));
    out.push_back(make_report(suite, "integrands under a shared oracle", params, worst, 0.0, 1e-10));
    const double rl = rate_of_potential_lib(oracle, c, n, grid), ru = rate_of_potential(oracle, cu, n, grid);
    out.push_back(make_report(suite, "rate of potential", params + " lib=" + fmt(rl), ru, rl, 1e-10));
  } catch (const std::exception& ex) {
    out.push_back(failed_report(suite, "integrands under a shared oracle", ex.what()));
  }
  return out;
}

}  // namespace checks

// Runs named suites, sharing the expensive ensembles between suites that use
// the same one.
class CheckRunner {
 public:
  explicit CheckRunner(CheckOptions o) : o_(std::move(o)) {}

  std::vector<CheckReport> run(const std::string& suite) {
    try {
      return dispatch(suite);
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      return {failed_report(suite, "", e.what())};
    }
  }

  const CheckOptions& options() const { return o_; }

 private:
  CheckOptions o_;
  std::optional<std::map<std::string, std::vector<CheckReport>>> driftless_, drifted_;

  std::vector<CheckReport> dispatch(const std::string& s) {
    using namespace checks;
    if (s == "lemma6_1_intertwine") return lemma6_1_intertwine(o_);
    if (s == "lemma3_8_gradient") return lemma3_8_gradient(o_);
    if (s == "lemma6_3_gradient") return lemma6_3_gradient(o_);
    if (s == "nc_algebra_properties") return nc_algebra_properties(o_);
    if (s == "lemma4_4_closed_form") return lemma4_4_closed_form(o_);
    if (s == "lemma4_10_burgers") return lemma4_10_burgers(o_);
    if (s == "lemma4_10_semicircle") return semicircle_battery(o_);
    if (s == "eq5_2_girsanov_martingale") return girsanov_battery(o_);
    if (s == "sec6_3_rate_relation") return sec6_3_rate_relation(o_);
    if (s == "thm3_12_residual" || s == "thm5_4_convergence") {
      if (!drifted_) drifted_ = drifted_battery(o_);
      return drifted_->at(s);
    }
    static const std::set<std::string> driftless = {"lemma4_4_moments",     "lemma4_1_martingale",
                                                    "lemma4_5_covariance",  "eq4_3_isometry",
                                                    "lemma4_6_selfadjoint", "lemma4_7_infinitesimal",
                                                    "cor4_13_sde_residual"};
    if (driftless.count(s)) {
      if (!driftless_) driftless_ = driftless_battery(o_);
      return driftless_->at(s);
    }
    throw std::invalid_argument("unknown check suite '" + s + "'");
  }
};

inline std::vector<CheckReport> check_suite(const std::string& name, const CheckOptions& o = {}) {
  return CheckRunner(o).run(name);
}

}  // namespace liblab
