// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "liblab/cond_expect.hpp"
#include "liblab/trace_poly.hpp"

namespace liblab {

using Matrix = Eigen::MatrixXcd;
using Rng = std::mt19937_64;

// Independent stream for a key tuple; the stream for (seed, keys...) never
// depends on which worker draws from it.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto k : keys) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Stream tags keep outer and inner (grafted) draws apart.
inline constexpr std::uint64_t kOuterStream = 0x6f75746572ULL;
inline constexpr std::uint64_t kInnerStream = 0x696e6e6572ULL;

// GUE increment with E[tr_N(ΔH²)] = dt: diagonal N(0, dt/N), off-diagonal
// real and imaginary parts N(0, dt/2N).
inline Matrix sample_hermitian_increment(int N, double dt, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sd_diag = std::sqrt(dt / N), sd_off = std::sqrt(dt / (2.0 * N));
  Matrix h(N, N);
  for (int c = 0; c < N; ++c) {
    h(c, c) = sd_diag * gauss(rng);
    for (int r = c + 1; r < N; ++r) {
      double re = sd_off * gauss(rng);
      double im = sd_off * gauss(rng);
      h(r, c) = {re, im};
      h(c, r) = {re, -im};
    }
  }
  return h;
}

inline constexpr double kHermitianTolerance = 1e-8;

// (A + A*)/2; *deviation receives ‖A − A*‖_F / max(1, ‖A‖_F).
inline Matrix hermitian_part(const Matrix& a, double* deviation = nullptr) {
  if (deviation) *deviation = (a - a.adjoint()).norm() / std::max(1.0, a.norm());
  return (a + a.adjoint()) / 2.0;
}

// exp(iA) for Hermitian A. Degree-9 Taylor polynomial in B = iA/2^s,
// evaluated as C0 + B³(C1 + B³(C2 + B³·C3)) with C_j in span{I, B, B²}, then
// squared s times. s is the least value for which the remainder bound
//   Σ_{k≥10} ‖B³‖^⌊k/3⌋ ‖B^(k mod 3)‖ / k!
// falls below 2^-53·‖I‖_F. For the small generators of a time step s = 0.
inline Matrix expi_hermitian(const Matrix& a) {
  const auto N = a.rows();
  const double unit = std::sqrt(static_cast<double>(N));
  int s = std::max(0, static_cast<int>(std::ceil(std::log2(std::max(a.norm(), 1e-300)))));
  Matrix b, b2, b3;
  for (;; ++s) {
    b = (kI / std::ldexp(1.0, s)) * a;
    b2 = b * b;
    b3 = b2 * b;
    const double f[3] = {unit, b.norm(), b2.norm()}, f3 = b3.norm();
    double bound = 0.0, fact = 3628800.0;  // 10!
    for (int k = 10; k < 40; ++k) {
      bound += std::pow(f3, k / 3) * (k % 3 ? f[k % 3] : 1.0) / fact;
      fact *= k + 1;
    }
    if (bound <= 0x1p-53 * unit) break;
  }
  auto combo = [&](double c0, double c1, double c2) {
    Matrix m = c1 * b + c2 * b2;
    m.diagonal().array() += c0;
    return m;
  };
  Matrix p = combo(1.0 / 720, 1.0 / 5040, 1.0 / 40320) + b3 / 362880.0;
  p = p * b3 + combo(1.0 / 6, 1.0 / 24, 1.0 / 120);
  p = p * b3 + combo(1.0, 1.0, 0.5);
  for (int k = 0; k < s; ++k) p = p * p;
  return p;
}

enum class Scheme { kExponential, kEuler };

// Propagator E of one step, U' = E·U: E = exp(i(dH + ξ dt)). The Euler
// variant E = I + i(dH + ξ dt) − (dt/2)I is only there for cross-checks; it
// does not stay on the unitary group.
inline Matrix step_propagator(const Matrix& dH, double dt, const Matrix* drift = nullptr,
                              Scheme scheme = Scheme::kExponential) {
  Matrix gen = dH;
  if (drift) {
    double dev = 0.0;
    Matrix h = hermitian_part(*drift, &dev);
    if (dev > kHermitianTolerance)
      throw std::invalid_argument("drift is not Hermitian (relative deviation " + std::to_string(dev) + ")");
    gen += dt * h;
  }
  if (scheme == Scheme::kEuler) {
    Matrix e = kI * gen;
    e.diagonal().array() += 1.0 - 0.5 * dt;
    return e;
  }
  return expi_hermitian(gen);
}

inline Matrix step_ubm(const Matrix& U, const Matrix& dH, double dt, const Matrix* drift = nullptr,
                       Scheme scheme = Scheme::kExponential) {
  return step_propagator(dH, dt, drift, scheme) * U;
}

// ---------------------------------------------------------------------------
// Configuration

struct XRecipe {
  int i = 0;  // 0 for the plain family x_j, otherwise x_(i,j)
  int j = 1;
  std::string kind = "diagonal_grid";  // diagonal_grid | zero | file
  std::optional<double> lo, hi;        // diagonal_grid range, default [−R, R]
  std::string path;                    // file: N×N real entries, whitespace separated
};

enum class DriftMode { kSymbolic, kMonteCarlo };

struct DriftSpec {
  NCPoly potential;
  DriftMode mode = DriftMode::kSymbolic;
  int inner_samples = 16;
};

struct SimConfig {
  int N = 64;
  int n = 1;
  double T = 1.0;
  double dt = 1e-3;
  std::vector<double> snapshot_times;  // 0 and T are always kept
  std::vector<double> horizons;        // per component, default T; U_i is not simulated past it
  int samples = 1;
  std::uint64_t seed = 1;
  double R = 1.0;
  std::vector<XRecipe> x_spec;
  std::optional<DriftSpec> drift;
  Scheme scheme = Scheme::kExponential;
  int threads = 1;
  std::size_t memory_cap_bytes = std::size_t{2} << 30;

  Tick dt_ticks() const { return to_ticks(dt); }
  Tick horizon_ticks(int i) const {
    return horizons.empty() ? to_ticks(T) : to_ticks(horizons.at(static_cast<std::size_t>(i - 1)));
  }
  int steps() const { return static_cast<int>(to_ticks(T) / dt_ticks()); }

  std::vector<Tick> snapshot_ticks() const {
    std::set<Tick> ts = {0, to_ticks(T)};
    for (double t : snapshot_times) ts.insert(to_ticks(t));
    return {ts.begin(), ts.end()};
  }

  void validate() const {
    auto bad = [](const std::string& m) { throw std::invalid_argument("SimConfig: " + m); };
    if (N < 1) bad("N must be positive");
    if (n < 1) bad("n must be positive");
    if (!(dt > 0.0) || dt_ticks() <= 0) bad("dt must be positive");
    if (!(T > 0.0)) bad("T must be positive");
    if (to_ticks(T) % dt_ticks() != 0) bad("T must be a multiple of dt");
    if (samples < 1) bad("samples must be positive");
    if (!(R > 0.0)) bad("R must be positive");
    if (threads < 1) bad("threads must be positive");
    if (!horizons.empty()) {
      if (static_cast<int>(horizons.size()) != n) bad("horizons must list one time per component");
      for (int i = 1; i <= n; ++i)
        if (horizon_ticks(i) < 0 || horizon_ticks(i) > to_ticks(T) || horizon_ticks(i) % dt_ticks() != 0)
          bad("horizon of component " + std::to_string(i) + " must be a multiple of dt in [0, T]");
    }
    for (Tick t : snapshot_ticks()) {
      if (t > to_ticks(T)) bad("snapshot time " + format_time(t) + " exceeds T");
      if (t % dt_ticks() != 0) bad("snapshot time " + format_time(t) + " is not a multiple of dt");
    }
    for (const auto& x : x_spec) {
      if (x.j < 1 || x.i < 0) bad("x_spec index out of range");
      if (x.kind != "diagonal_grid" && x.kind != "zero" && x.kind != "file") bad("unknown x recipe '" + x.kind + "'");
      if (x.kind == "file" && x.path.empty()) bad("x recipe 'file' needs a path");
    }
    if (drift) {
      if (!(drift->potential.adjoint() == drift->potential) &&
          !approx_equal(drift->potential.adjoint(), drift->potential))
        bad("drift potential must be self-adjoint");
      if (drift->inner_samples < 1) bad("inner_samples must be positive");
    }
  }
};

// Canonical text of every field that influences the simulated paths.
inline std::string config_fingerprint(const SimConfig& c) {
  std::ostringstream s;
  s.precision(17);
  s << "N=" << c.N << ";n=" << c.n << ";T=" << to_ticks(c.T) << ";dt=" << c.dt_ticks() << ";samples=" << c.samples
    << ";seed=" << c.seed << ";R=" << c.R << ";scheme=" << (c.scheme == Scheme::kEuler ? "euler" : "exp")
    << ";tick=" << kTickSeconds << ";horizons=";
  for (int i = 1; i <= c.n && !c.horizons.empty(); ++i) s << c.horizon_ticks(i) << ",";
  s << ";snap=";
  for (Tick t : c.snapshot_ticks()) s << t << ",";
  for (const auto& x : c.x_spec)
    s << ";x(" << x.i << "," << x.j << ")=" << x.kind << ":" << x.lo.value_or(-c.R) << ":" << x.hi.value_or(c.R) << ":"
      << x.path;
  if (c.drift)
    s << ";drift=" << c.drift->potential.str() << ":" << (c.drift->mode == DriftMode::kSymbolic ? "sym" : "mc") << ":"
      << c.drift->inner_samples;
  return s.str();
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t config_hash(const SimConfig& c) { return fnv1a(config_fingerprint(c)); }

// ---------------------------------------------------------------------------
// Deterministic matrices

using XMatrices = std::map<std::pair<int, int>, Matrix>;

inline double operator_norm_hermitian(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline Matrix make_x_matrix(const XRecipe& r, int N, double R) {
  Matrix x = Matrix::Zero(N, N);
  if (r.kind == "diagonal_grid") {
    double lo = r.lo.value_or(-R), hi = r.hi.value_or(R);
    for (int k = 0; k < N; ++k) x(k, k) = N == 1 ? lo : lo + (hi - lo) * k / (N - 1.0);
  } else if (r.kind == "file") {
    std::ifstream in(r.path);
    if (!in) throw std::invalid_argument("x recipe: cannot open " + r.path);
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        double v;
        if (!(in >> v)) throw std::invalid_argument("x recipe: " + r.path + " holds fewer than N*N entries");
        x(a, b) = v;
      }
    if ((x - x.adjoint()).norm() > 1e-12 * std::max(1.0, x.norm()))
      throw std::invalid_argument("x recipe: matrix in " + r.path + " is not symmetric");
  } else if (r.kind != "zero") {
    throw std::invalid_argument("x recipe: unknown kind '" + r.kind + "'");
  }
  if (N > 0 && operator_norm_hermitian(x) > R * (1 + 1e-12))
    throw std::invalid_argument("x recipe for x(" + std::to_string(r.i) + "," + std::to_string(r.j) +
                                ") violates the norm cap R = " + std::to_string(R));
  return x;
}

inline XMatrices make_x_matrices(const SimConfig& c) {
  XMatrices xs;
  for (const auto& r : c.x_spec) xs[{r.i, r.j}] = make_x_matrix(r, c.N, c.R);
  return xs;
}

// ---------------------------------------------------------------------------
// Evaluation of words on matrices

// Read access to one realization: unitaries at retained times and the
// deterministic matrices.
class PathView {
 public:
  virtual ~PathView() = default;
  virtual int dim() const = 0;
  virtual int components() const = 0;
  virtual const Matrix& unitary(int i, Tick t) const = 0;
  virtual const Matrix& x(int i, int j) const = 0;
};

using Snapshots = std::map<Tick, std::vector<Matrix>>;  // time -> U_1..U_n

class SamplePath : public PathView {
 public:
  SamplePath(int N, int n, const XMatrices* x, const Snapshots* snaps) : N_(N), n_(n), x_(x), snaps_(snaps) {}

  int dim() const override { return N_; }
  int components() const override { return n_; }

  const Matrix& unitary(int i, Tick t) const override {
    if (i < 1 || i > n_) throw std::out_of_range("unitary index " + std::to_string(i) + " out of range");
    auto it = snaps_->find(t);
    if (it == snaps_->end()) throw std::out_of_range("no snapshot at t = " + format_time(t));
    const Matrix& m = it->second[static_cast<std::size_t>(i - 1)];
    if (m.size() == 0)
      throw std::out_of_range("component " + std::to_string(i) + " was not simulated up to t = " + format_time(t));
    return m;
  }

  const Matrix& x(int i, int j) const override {
    auto it = x_->find({i, j});
    if (it == x_->end())
      throw std::out_of_range("no matrix for x(" + std::to_string(i) + "," + std::to_string(j) + ")");
    return it->second;
  }

 private:
  int N_, n_;
  const XMatrices* x_;
  const Snapshots* snaps_;
};

// X^lib_ij(t) = U_i(t) X_(i,j) U_i(t)* for i ≤ n; later families never move.
inline Matrix liberation_snapshot(const PathView& p, Tick t, int i, int j) {
  if (i < 1 || i > p.components() + 1) throw std::out_of_range("liberation index " + std::to_string(i));
  const Matrix& x = p.x(i, j);
  if (i > p.components() || t == 0) return x;
  const Matrix& u = p.unitary(i, t);
  return u * x * u.adjoint();
}

namespace detail {

inline Matrix letter_matrix(const Letter& l, const PathView& p) {
  switch (l.kind) {
    case Kind::X:
      return p.x(l.i, l.j);
    case Kind::XL:
      return liberation_snapshot(p, l.t, l.i, l.j);
    case Kind::U: {
      if (l.i < 1 || l.i > p.components()) throw std::out_of_range("unitary index " + std::to_string(l.i));
      if (l.t == 0) return Matrix::Identity(p.dim(), p.dim());
      const Matrix& u = p.unitary(l.i, l.t);
      return l.star ? Matrix(u.adjoint()) : u;
    }
    default:
      throw std::invalid_argument("letter " + l.str() + " has no matrix realization");
  }
}

// tr_N(A B) without forming the product.
inline Complex trace_of_product(const Matrix& a, const Matrix& b) {
  return (a.transpose().cwiseProduct(b)).sum() / static_cast<double>(a.rows());
}

}  // namespace detail

inline Matrix eval_word(const Word& w, const PathView& p) {
  const int N = p.dim();
  if (w.empty()) return Matrix::Identity(N, N);
  Matrix acc = detail::letter_matrix(w[0], p);
  for (std::size_t k = 1; k < w.size(); ++k) acc = acc * detail::letter_matrix(w[k], p);
  return acc;
}

inline Complex eval_word_trace(const Word& w, const PathView& p) {
  if (w.empty()) return 1.0;
  if (w.size() == 1) return detail::letter_matrix(w[0], p).trace() / static_cast<double>(p.dim());
  return detail::trace_of_product(eval_word(w.slice(0, w.size() - 1), p), detail::letter_matrix(w[w.size() - 1], p));
}

inline Matrix eval_poly(const NCPoly& q, const PathView& p) {
  Matrix r = Matrix::Zero(p.dim(), p.dim());
  for (const auto& [w, c] : q.terms()) r += c * eval_word(w, p);
  return r;
}

namespace detail {
inline Complex trace_symbols(const std::vector<Word>& traces, const PathView& p, std::map<Word, Complex>& cache) {
  Complex s = 1.0;
  for (const auto& w : traces) {
    auto it = cache.find(w);
    if (it == cache.end()) it = cache.emplace(w, eval_word_trace(w, p)).first;
    s *= it->second;
  }
  return s;
}
}  // namespace detail

// Σ c·Π tr_N(symbols)·π_N(carrier)
inline Matrix eval_trace_poly(const TracePoly& tp, const PathView& p) {
  std::map<Word, Complex> cache;
  Matrix r = Matrix::Zero(p.dim(), p.dim());
  for (const auto& [k, c] : tp.terms()) r += c * detail::trace_symbols(k.traces, p, cache) * eval_word(k.carrier, p);
  return r;
}

inline Complex eval_trace_poly_scalar(const TracePoly& tp, const PathView& p) {
  std::map<Word, Complex> cache;
  Complex r = 0.0;
  for (const auto& [k, c] : tp.terms()) r += c * detail::trace_symbols(k.traces, p, cache) * eval_word_trace(k.carrier, p);
  return r;
}

// ---------------------------------------------------------------------------
// Estimates

struct TraceEstimate {
  Complex mean;
  double stderr = 0.0;
  std::size_t samples = 0;
};

// Pairwise summation over the index order, so the result never depends on
// how the values were produced.
template <class T>
T pairwise_sum(const T* v, std::size_t n) {
  if (n == 0) return T{};
  if (n == 1) return v[0];
  std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline TraceEstimate estimate(const std::vector<Complex>& v) {
  TraceEstimate e;
  e.samples = v.size();
  if (v.empty()) return e;
  e.mean = pairwise_sum(v.data(), v.size()) / static_cast<double>(v.size());
  if (v.size() > 1) {
    std::vector<double> dev(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) dev[k] = std::norm(v[k] - e.mean);
    double var = pairwise_sum(dev.data(), dev.size()) / static_cast<double>(v.size() - 1);
    e.stderr = std::sqrt(var / static_cast<double>(v.size()));
  }
  return e;
}

// Runs f(0..count−1) on up to `threads` workers; f must write only to its
// own slot.
template <class F>
void parallel_for(int count, int threads, F&& f) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int k = 0; k < count; ++k) f(k);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int k; (k = next.fetch_add(1)) < count;) f(k);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
        next = count;
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Drift fields

class DriftField {
 public:
  virtual ~DriftField() = default;
  // Drift matrices for every component at grid step k (time t), from the
  // path up to t. An empty result means no drift at this step.
  virtual std::vector<Matrix> at(int k, Tick t, const PathView& path, int sample) const = 0;
  // Past times the drift reads besides the current one.
  virtual std::vector<Tick> retained_times() const = 0;
};

// ξ_i(t_k) = π_N(E(Π^t 𝔇_{t,i} c)) with the trace polynomials precomputed per
// grid time; zero past the last u-time of c. The step from t_k covers
// (t_k, t_k + dt], so the gradient is taken just right of t_k.
class SymbolicDrift : public DriftField {
 public:
  SymbolicDrift(const NCPoly& c, int n, Tick dt, int steps) : n_(n), retained_(c.letter_times({Kind::U})) {
    Tick last = retained_.empty() ? -1 : retained_.back();
    for (int k = 0; k <= steps && k * dt < last; ++k) {
      std::vector<TracePoly> g;
      for (int i = 1; i <= n; ++i) g.push_back(projected_gradient(c, i, k * dt, Side::kRightLimit));
      grad_.push_back(std::move(g));
    }
  }

  std::vector<Matrix> at(int k, Tick, const PathView& path, int) const override {
    if (k >= static_cast<int>(grad_.size())) return {};
    std::vector<Matrix> out;
    for (int i = 0; i < n_; ++i) {
      double dev = 0.0;
      out.push_back(hermitian_part(eval_trace_poly(grad_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)], path), &dev));
      if (dev > kHermitianTolerance)
        throw std::runtime_error("symbolic drift at step " + std::to_string(k) + " is not Hermitian");
    }
    return out;
  }

  std::vector<Tick> retained_times() const override { return retained_; }

  const TracePoly& gradient(int k, int i) const {
    return grad_.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(i - 1));
  }
  int active_steps() const { return static_cast<int>(grad_.size()); }

 private:
  int n_;
  std::vector<Tick> retained_;
  std::vector<std::vector<TracePoly>> grad_;
};

// ---------------------------------------------------------------------------
// Simulation

// Components past their horizon have empty dH and propagator.
struct StepEvent {
  int k;  // the step just taken ends at grid index k
  Tick t0, t1;
  const std::vector<Matrix>& U1;
  const std::vector<Matrix>& dH;
  const std::vector<Matrix>& propagator;  // U1 = propagator·U0
  const std::vector<Matrix>& drift;  // at t0; empty when driftless
  const PathView& path;              // state at t1
};

using StepObserver = std::function<void(const StepEvent&)>;

namespace detail {

// Current unitaries plus retained past ones.
class LivePath : public PathView {
 public:
  LivePath(int N, int n, const XMatrices* x) : N_(N), n_(n), x_(x) {}
  int dim() const override { return N_; }
  int components() const override { return n_; }
  const Matrix& unitary(int i, Tick t) const override {
    if (i < 1 || i > n_) throw std::out_of_range("unitary index " + std::to_string(i) + " out of range");
    const Matrix* m = nullptr;
    if (t == now) {
      m = &current[static_cast<std::size_t>(i - 1)];
      if (t > horizon[static_cast<std::size_t>(i - 1)]) m = nullptr;
    } else {
      auto it = kept.find(t);
      if (it == kept.end()) throw std::out_of_range("path holds no unitary at t = " + format_time(t));
      m = &it->second[static_cast<std::size_t>(i - 1)];
    }
    if (!m || m->size() == 0)
      throw std::out_of_range("component " + std::to_string(i) + " was not simulated up to t = " + format_time(t));
    return *m;
  }
  const Matrix& x(int i, int j) const override {
    auto it = x_->find({i, j});
    if (it == x_->end())
      throw std::out_of_range("no matrix for x(" + std::to_string(i) + "," + std::to_string(j) + ")");
    return it->second;
  }

  Tick now = 0;
  std::vector<Tick> horizon;
  std::vector<Matrix> current;
  Snapshots kept;

 private:
  int N_, n_;
  const XMatrices* x_;
};

}  // namespace detail

// One path of the n-component process on the grid k·dt, k = 0..steps.
// Returns the unitaries at `keep` times (plus whatever the drift retains).
inline Snapshots simulate_sample(const SimConfig& cfg, const XMatrices& xs, const DriftField* drift, int sample,
                                 const std::vector<Tick>& keep, const StepObserver& observer = {}) {
  const int N = cfg.N, n = cfg.n, K = cfg.steps();
  const Tick dt = cfg.dt_ticks();
  const double h = to_seconds(dt);
  std::set<Tick> wanted(keep.begin(), keep.end());
  if (drift)
    for (Tick t : drift->retained_times()) wanted.insert(t);

  std::vector<Rng> rng;
  for (int i = 1; i <= n; ++i)
    rng.push_back(make_stream(cfg.seed, {kOuterStream, static_cast<std::uint64_t>(sample), static_cast<std::uint64_t>(i)}));

  detail::LivePath live(N, n, &xs);
  live.current.assign(static_cast<std::size_t>(n), Matrix::Identity(N, N));
  for (int i = 1; i <= n; ++i) live.horizon.push_back(cfg.horizon_ticks(i));
  auto retained = [&] {
    std::vector<Matrix> r = live.current;
    for (int i = 0; i < n; ++i)
      if (live.now > live.horizon[static_cast<std::size_t>(i)]) r[static_cast<std::size_t>(i)] = Matrix();
    return r;
  };
  if (wanted.count(0)) live.kept[0] = live.current;

  std::vector<Matrix> dH(static_cast<std::size_t>(n)), prop(static_cast<std::size_t>(n)), xi;
  for (int k = 0; k < K; ++k) {
    const Tick t0 = k * dt, t1 = (k + 1) * dt;
    live.now = t0;
    if (drift) {
      try {
        xi = drift->at(k, t0, live, sample);
      } catch (const std::exception& e) {
        throw std::runtime_error("drift evaluation failed at step " + std::to_string(k) + ": " + e.what());
      }
    }
    for (int i = 0; i < n; ++i) {
      auto iu = static_cast<std::size_t>(i);
      if (t1 > live.horizon[iu]) {
        dH[iu] = prop[iu] = Matrix();
        continue;
      }
      dH[iu] = sample_hermitian_increment(N, h, rng[iu]);
      prop[iu] = step_propagator(dH[iu], h, xi.empty() ? nullptr : &xi[iu], cfg.scheme);
      live.current[iu] = prop[iu] * live.current[iu];
    }
    live.now = t1;
    if (wanted.count(t1)) live.kept[t1] = retained();
    if (observer) observer(StepEvent{k + 1, t0, t1, live.current, dH, prop, xi, live});
  }
  Snapshots out;
  for (Tick t : keep) {
    auto it = live.kept.find(t);
    if (it != live.kept.end()) out.emplace(t, it->second);
  }
  return out;
}

inline std::unique_ptr<DriftField> make_drift(const SimConfig& cfg);

struct UnitaryPathEnsemble {
  SimConfig config;
  XMatrices x;
  std::vector<Tick> grid;
  std::vector<Snapshots> samples;
  std::uint64_t seed = 0;
  std::uint64_t hash = 0;

  SamplePath sample(std::size_t s) const { return SamplePath(config.N, config.n, &x, &samples.at(s)); }
  std::size_t size() const { return samples.size(); }
};

inline std::size_t snapshot_bytes(const SimConfig& c) {
  std::size_t mats = 0;
  for (Tick t : c.snapshot_ticks())
    for (int i = 1; i <= c.n; ++i) mats += t <= c.horizon_ticks(i);
  return static_cast<std::size_t>(c.samples) * mats * static_cast<std::size_t>(c.N) * static_cast<std::size_t>(c.N) *
         sizeof(Complex);
}

// `observer`, if given, sees every step of every sample; with several
// threads it must only touch per-sample state.
inline UnitaryPathEnsemble simulate_paths(const SimConfig& cfg,
                                          const std::function<void(int, const StepEvent&)>& observer = {}) {
  cfg.validate();
  if (snapshot_bytes(cfg) > cfg.memory_cap_bytes)
    throw std::length_error("snapshot storage of " + std::to_string(snapshot_bytes(cfg)) +
                            " bytes exceeds the memory cap of " + std::to_string(cfg.memory_cap_bytes) + " bytes");
  UnitaryPathEnsemble e;
  e.config = cfg;
  e.x = make_x_matrices(cfg);
  e.grid = cfg.snapshot_ticks();
  e.seed = cfg.seed;
  e.hash = config_hash(cfg);
  e.samples.resize(static_cast<std::size_t>(cfg.samples));
  auto drift = make_drift(cfg);
  parallel_for(cfg.samples, cfg.threads, [&](int s) {
    StepObserver obs;
    if (observer) obs = [&observer, s](const StepEvent& ev) { observer(s, ev); };
    e.samples[static_cast<std::size_t>(s)] = simulate_sample(cfg, e.x, drift.get(), s, e.grid, obs);
  });
  return e;
}

inline TraceEstimate eval_trace_estimate(const Word& w, const UnitaryPathEnsemble& e) {
  std::vector<Complex> v(e.size());
  for (std::size_t s = 0; s < e.size(); ++s) v[s] = eval_word_trace(w, e.sample(s));
  return estimate(v);
}

inline TraceEstimate eval_trace_estimate(const TracePoly& tp, const UnitaryPathEnsemble& e) {
  std::vector<Complex> v(e.size());
  for (std::size_t s = 0; s < e.size(); ++s) v[s] = eval_trace_poly_scalar(tp, e.sample(s));
  return estimate(v);
}

// ---------------------------------------------------------------------------
// Stochastic integral b and resolvents

// b_Δ accumulated step by step from Y(t) = e^{t/2}U(t):
//   b += −i (Z(t1) − Z(t0)) Y(t0)^{-1},  Z increments dY − iξ(t0)Y(t0)Δ,
// i.e. b += −i(e^{Δ/2} U(t1)U(t0)* − I) − ξ(t0)Δ.
class StochasticIntegral {
 public:
  explicit StochasticIntegral(int N) : b_(Matrix::Zero(N, N)) {}
  StochasticIntegral() = default;

  void advance(Tick t0, const Matrix& U0, Tick t1, const Matrix& U1, const Matrix* xi0 = nullptr) {
    advance(t1 - t0, Matrix(U1 * U0.adjoint()), xi0);
  }

  // Same step given E = U(t1)U(t0)^{-1} directly.
  void advance(Tick dt, const Matrix& propagator, const Matrix* xi0 = nullptr) {
    const double d = to_seconds(dt);
    b_ += (-kI * std::exp(d / 2)) * propagator;
    b_.diagonal().array() += kI;
    if (xi0) b_ -= d * *xi0;
  }

  const Matrix& value() const { return b_; }

 private:
  Matrix b_;
};

// b_Δ at each grid time from stored snapshots (grid must start at 0 and be a
// subset of the snapshots). The drift, if any, is sampled at the left end of
// each grid interval.
inline std::vector<Matrix> stochastic_integral_b(const PathView& p, int i, const std::vector<Tick>& grid,
                                                 const std::function<Matrix(Tick)>& xi = {}) {
  if (grid.empty() || grid.front() != 0) throw std::invalid_argument("stochastic_integral_b: grid must start at 0");
  const int N = p.dim();
  StochasticIntegral b(N);
  std::vector<Matrix> out = {b.value()};
  auto U = [&](Tick t) { return t == 0 ? Matrix(Matrix::Identity(N, N)) : p.unitary(i, t); };
  for (std::size_t k = 1; k < grid.size(); ++k) {
    Matrix x0;
    if (xi) x0 = xi(grid[k - 1]);
    b.advance(grid[k - 1], U(grid[k - 1]), grid[k], U(grid[k]), xi ? &x0 : nullptr);
    out.push_back(b.value());
  }
  return out;
}

// tr_N((zI − A)^{-1}) by LU.
inline Complex resolvent_trace(const Matrix& a, Complex z) {
  const auto N = a.rows();
  Matrix m = -a;
  m.diagonal().array() += z;
  Eigen::PartialPivLU<Matrix> lu(m);
  if (!(lu.rcond() > 1e-14)) throw std::domain_error("resolvent_trace: zI − A is singular");
  return lu.inverse().trace() / static_cast<double>(N);
}

inline Eigen::VectorXd hermitian_eigenvalues(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

// ---------------------------------------------------------------------------
// Grafted conditional expectation

namespace detail {

// U^t(s) = V(s − t)U(t) for s > t, the recorded path otherwise.
class GraftedPath : public PathView {
 public:
  GraftedPath(const PathView& past, Tick t, const Snapshots& inner) : past_(past), t_(t), inner_(inner) {
    for (const auto& [s, vs] : inner_) {
      std::vector<Matrix> g;
      for (int i = 1; i <= past.components(); ++i) g.push_back(vs[static_cast<std::size_t>(i - 1)] * past.unitary(i, t));
      grafted_.emplace(s, std::move(g));
    }
  }
  int dim() const override { return past_.dim(); }
  int components() const override { return past_.components(); }
  const Matrix& unitary(int i, Tick s) const override {
    if (s <= t_) return past_.unitary(i, s);
    auto it = grafted_.find(s - t_);
    if (it == grafted_.end()) throw std::out_of_range("graft holds no unitary at t = " + format_time(s));
    return it->second.at(static_cast<std::size_t>(i - 1));
  }
  const Matrix& x(int i, int j) const override { return past_.x(i, j); }

 private:
  const PathView& past_;
  Tick t_;
  const Snapshots& inner_;
  Snapshots grafted_;
};

}  // namespace detail

// One matrix π_N(Π^t p) per inner replica. Inner paths are driftless
// unitary Brownian motions on the outer step size, drawn from streams keyed
// by (seed, outer sample, t, replica).
inline std::vector<Matrix> mc_cond_expect_replicas(const NCPoly& p, Tick t, const PathView& path, int M, Tick dt,
                                                   std::uint64_t seed, int sample, int threads = 1) {
  if (M < 1) throw std::invalid_argument("mc_cond_expect: need at least one inner sample");
  if (dt <= 0) throw std::invalid_argument("mc_cond_expect: dt must be positive");
  const int N = path.dim(), n = path.components();
  for (int i = 1; i <= n; ++i)
    if (t != 0 && path.unitary(i, t).rows() != N) throw std::invalid_argument("mc_cond_expect: dimension mismatch");
  std::vector<Tick> offsets;
  Tick horizon = 0;
  for (Tick s : p.letter_times({Kind::U}))
    if (s > t) {
      if ((s - t) % dt != 0) throw std::invalid_argument("mc_cond_expect: time " + format_time(s) + " is off the grid");
      offsets.push_back(s - t);
      horizon = std::max(horizon, s - t);
    }
  std::vector<Matrix> out(static_cast<std::size_t>(M));
  if (offsets.empty()) {
    Matrix v = eval_poly(p, path);
    for (auto& m : out) m = v;
    return out;
  }
  parallel_for(M, threads, [&](int r) {
    std::vector<Rng> rng;
    Snapshots vs;
    std::vector<Matrix> v(static_cast<std::size_t>(n), Matrix::Identity(N, N));
    for (int i = 1; i <= n; ++i)
      rng.push_back(make_stream(seed, {kInnerStream, static_cast<std::uint64_t>(sample), static_cast<std::uint64_t>(t),
                                       static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(i)}));
    std::set<Tick> want(offsets.begin(), offsets.end());
    const double h = to_seconds(dt);
    for (Tick s = dt; s <= horizon; s += dt) {
      for (int i = 0; i < n; ++i) {
        auto iu = static_cast<std::size_t>(i);
        v[iu] = step_ubm(v[iu], sample_hermitian_increment(N, h, rng[iu]), h);
      }
      if (want.count(s)) vs[s] = v;
    }
    detail::GraftedPath g(path, t, vs);
    out[static_cast<std::size_t>(r)] = eval_poly(p, g);
  });
  return out;
}

inline Matrix mc_cond_expect(const NCPoly& p, Tick t, const PathView& path, int M, Tick dt, std::uint64_t seed,
                             int sample, int threads = 1) {
  auto reps = mc_cond_expect_replicas(p, t, path, M, dt, seed, sample, threads);
  return pairwise_sum(reps.data(), reps.size()) / static_cast<double>(M);
}

// ξ_i(t_k) = E[π_N(𝔇_{t,i}c) | F_t] by inner Monte Carlo.
class MonteCarloDrift : public DriftField {
 public:
  MonteCarloDrift(const NCPoly& c, int n, Tick dt, int M, std::uint64_t seed)
      : c_(c), n_(n), dt_(dt), M_(M), seed_(seed), times_(c.letter_times({Kind::U})) {}

  std::vector<Matrix> at(int, Tick t, const PathView& path, int sample) const override {
    if (times_.empty() || t >= times_.back()) return {};
    std::vector<Matrix> out;
    for (int i = 1; i <= n_; ++i) {
      // Distinct components must not share inner streams.
      Matrix m = mc_cond_expect(D_u(t, i, c_, Side::kRightLimit), t, path, M_, dt_,
                                seed_ ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(i)), sample);
      out.push_back(hermitian_part(m));
    }
    return out;
  }

  std::vector<Tick> retained_times() const override { return times_; }

 private:
  NCPoly c_;
  int n_;
  Tick dt_;
  int M_;
  std::uint64_t seed_;
  std::vector<Tick> times_;
};

inline std::unique_ptr<DriftField> make_drift(const SimConfig& cfg) {
  if (!cfg.drift || cfg.drift->potential.is_zero()) return nullptr;
  if (cfg.drift->mode == DriftMode::kSymbolic)
    return std::make_unique<SymbolicDrift>(cfg.drift->potential, cfg.n, cfg.dt_ticks(), cfg.steps());
  return std::make_unique<MonteCarloDrift>(cfg.drift->potential, cfg.n, cfg.dt_ticks(), cfg.drift->inner_samples,
                                           cfg.seed);
}

// ---------------------------------------------------------------------------
// Path store: "LIBLAB1\0", then N, n, sample count, grid size (uint32),
// grid ticks (int64), tick length (double), seed, config hash (uint64), then
// row-major complex doubles for every (sample, i, t_k).

struct PathStore {
  int N = 0, n = 0;
  std::vector<Tick> grid;
  double tick_seconds = kTickSeconds;
  std::uint64_t seed = 0, hash = 0;
  std::vector<Snapshots> samples;
};

inline constexpr char kPathMagic[8] = {'L', 'I', 'B', 'L', 'A', 'B', '1', '\0'};

inline void write_path_store(const std::string& file, const UnitaryPathEnsemble& e) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + file + " for writing");
  auto put = [&out](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write(kPathMagic, sizeof(kPathMagic));
  put(static_cast<std::uint32_t>(e.config.N));
  put(static_cast<std::uint32_t>(e.config.n));
  put(static_cast<std::uint32_t>(e.samples.size()));
  put(static_cast<std::uint32_t>(e.grid.size()));
  for (Tick t : e.grid) put(static_cast<std::int64_t>(t));
  put(kTickSeconds);
  put(e.seed);
  put(e.hash);
  for (const auto& snaps : e.samples)
    for (int i = 0; i < e.config.n; ++i)
      for (Tick t : e.grid) {
        const Matrix& m = snaps.at(t)[static_cast<std::size_t>(i)];
        if (m.size() == 0)
          throw std::invalid_argument("path store needs every component at every grid time; component " +
                                      std::to_string(i + 1) + " stops before " + format_time(t));
        for (int r = 0; r < m.rows(); ++r)
          for (int c = 0; c < m.cols(); ++c) put(m(r, c));
      }
  if (!out) throw std::runtime_error("write to " + file + " failed");
}

inline PathStore read_path_store(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file);
  auto get = [&in, &file](auto& v) {
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) throw std::runtime_error(file + ": truncated path store");
  };
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kPathMagic, 8) != 0)
    throw std::runtime_error(file + ": not a LIBLAB1 path store");
  std::uint32_t N, n, S, G;
  get(N);
  get(n);
  get(S);
  get(G);
  PathStore ps;
  ps.N = static_cast<int>(N);
  ps.n = static_cast<int>(n);
  for (std::uint32_t k = 0; k < G; ++k) {
    std::int64_t t;
    get(t);
    ps.grid.push_back(t);
  }
  get(ps.tick_seconds);
  get(ps.seed);
  get(ps.hash);
  ps.samples.resize(S);
  for (auto& snaps : ps.samples) {
    for (Tick t : ps.grid) snaps[t].resize(n);
    for (std::uint32_t i = 0; i < n; ++i)
      for (Tick t : ps.grid) {
        Matrix m(N, N);
        for (std::uint32_t r = 0; r < N; ++r)
          for (std::uint32_t c = 0; c < N; ++c) get(m(r, c));
        snaps[t][i] = std::move(m);
      }
  }
  return ps;
}

}  // namespace liblab
