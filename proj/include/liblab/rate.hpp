// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>
#include <vector>

#include "liblab/cond_expect.hpp"
#include "liblab/matrix_sim.hpp"
#include "liblab/oracle.hpp"

namespace liblab {

inline void require_self_adjoint(const NCPoly& a, const char* who) {
  if (!approx_equal(a.adjoint(), a)) throw std::invalid_argument(std::string(who) + ": polynomial is not self-adjoint");
}

// Grid points in [0, T] merged with the letter times of the polynomial, so
// that no subinterval straddles a jump of the gradient.
inline std::vector<Tick> integration_grid(const std::vector<Tick>& grid, const std::vector<Tick>& letter_times, Tick T) {
  std::set<Tick> pts = {0, T};
  for (Tick t : grid)
    if (t >= 0 && t <= T) pts.insert(t);
  for (Tick t : letter_times)
    if (t <= T) pts.insert(t);
  return {pts.begin(), pts.end()};
}

// Composite trapezoid of f over the grid, taking on each subinterval the
// value just right of its left end and the value at its right end.
inline double piecewise_trapezoid(const std::vector<Tick>& pts, const std::function<double(Tick, Side)>& f) {
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k)
    total += 0.5 * to_seconds(pts[k + 1] - pts[k]) * (f(pts[k], Side::kRightLimit) + f(pts[k + 1], Side::kAt));
  return total;
}

// Σ_i ‖E(Π^t 𝔇_{t,i} a)‖² under the oracle, the squared norm of a trace
// polynomial g being the state's value on g·g*.
inline double gradient_energy(const TraceOracle& oracle, const NCPoly& a, int n, Tick t, Side side) {
  double e = 0.0;
  for (int i = 1; i <= n; ++i) {
    TracePoly g = projected_gradient(a, i, t, side);
    if (!g.is_zero()) e += oracle.value(g * g.adjoint()).real();
  }
  return e;
}

struct RateTerm {
  double final_value = 0.0;  // φ^T(a)
  double initial = 0.0;      // σ0^frBM(a)
  double energy = 0.0;       // ∫_0^T Σ_i ‖·‖² dt
  double value() const { return final_value - initial - 0.5 * energy; }
};

// I(φ; a, T) for a single test polynomial.
inline RateTerm rate_term_parts(const TraceOracle& oracle, const TraceOracle& sigma0, const NCPoly& a, int n, Tick T,
                                const std::vector<Tick>& grid) {
  require_self_adjoint(a, "rate_term");
  RateTerm r;
  r.final_value = oracle.value(cond_expect_past(pi_t(T, a), T)).real();
  r.initial = sigma0.value(TracePoly(a)).real();
  auto pts = integration_grid(grid, a.letter_times({Kind::U}), T);
  r.energy = piecewise_trapezoid(pts, [&](Tick t, Side side) { return gradient_energy(oracle, a, n, t, side); });
  return r;
}

inline double rate_term(const TraceOracle& oracle, const TraceOracle& sigma0, const NCPoly& a, int n, Tick T,
                        const std::vector<Tick>& grid) {
  return rate_term_parts(oracle, sigma0, a, n, T, grid).value();
}

// I(φ_c) = ½∫ Σ_i ‖E(Π^t 𝔇_{t,i} c)‖² dt under an approximation of φ_c. The
// integrand vanishes after the last u-time of c.
inline double rate_of_potential(const TraceOracle& oracle_c, const NCPoly& c, int n, const std::vector<Tick>& grid) {
  require_self_adjoint(c, "rate_of_potential");
  auto times = c.letter_times({Kind::U});
  if (times.empty()) return 0.0;
  auto pts = integration_grid(grid, times, times.back());
  return 0.5 * piecewise_trapezoid(pts, [&](Tick t, Side side) { return gradient_energy(oracle_c, c, n, t, side); });
}

// Same quantity on the liberation alphabet: the gradient is taken with the
// liberation derivation and time shift; the oracle must understand XL words.
inline double rate_of_potential_lib(const TraceOracle& oracle, const NCPoly& c, int n, const std::vector<Tick>& grid) {
  require_self_adjoint(c, "rate_of_potential_lib");
  auto times = c.letter_times({Kind::XL});
  if (times.empty()) return 0.0;
  auto pts = integration_grid(grid, times, times.back());
  return 0.5 * piecewise_trapezoid(pts, [&](Tick t, Side side) {
           double e = 0.0;
           for (int i = 1; i <= n; ++i) {
             TracePoly g = projected_gradient_lib(c, i, t, n, side);
             if (!g.is_zero()) e += oracle.value(g * g.adjoint()).real();
           }
           return e;
         });
}

// I_{c,N}(t) on a driftless path:
//   tr_N E[π_N(c)|F_t] − tr_N E[π_N(c)] − ½∫_0^t Σ_i tr_N(E[π_N(𝔇_{s,i}c)|F_s]²) ds,
// with the conditional expectations taken symbolically. The symbolic pieces
// are prepared once per grid and shared by all paths.
class GirsanovExponent {
 public:
  GirsanovExponent(const NCPoly& c, int n, std::vector<Tick> grid, double R) : grid_(std::move(grid)) {
    require_self_adjoint(c, "girsanov_exponent");
    if (grid_.empty() || grid_.front() != 0) throw std::invalid_argument("girsanov_exponent: grid must start at 0");
    for (Tick t : c.letter_times({Kind::U}))
      if (t <= grid_.back() && !std::binary_search(grid_.begin(), grid_.end(), t))
        throw std::invalid_argument("girsanov_exponent: grid must contain the letter time " + format_time(t));
    for (Tick t : grid_) {
      mean_.push_back(cond_expect_past(pi_t(t, c), t));
      std::vector<TracePoly> at, right;
      for (int i = 1; i <= n; ++i) {
        at.push_back(projected_gradient(c, i, t, Side::kAt));
        right.push_back(projected_gradient(c, i, t, Side::kRightLimit));
      }
      grad_at_.push_back(std::move(at));
      grad_right_.push_back(std::move(right));
    }
    // Conditional expectations are contractions and ‖u‖ = 1, so
    // |tr E[c|F_t]| ≤ Λ = Σ|coef|·R^{#x}; each gradient has norm ≤ Λ' =
    // Σ|coef|·(#u)·R^{#x}. Hence −2Λ − ½·T·n·Λ'² ≤ I ≤ 2Λ.
    double lam = 0.0, lam_grad = 0.0;
    for (const auto& [w, coef] : c.terms()) {
      int xs = 0, us = 0;
      for (const auto& l : w.letters()) {
        xs += l.kind == Kind::X;
        us += l.kind == Kind::U;
      }
      lam += std::abs(coef) * std::pow(R, xs);
      lam_grad += std::abs(coef) * us * std::pow(R, xs);
    }
    upper_ = 2 * lam;
    lower_ = -2 * lam - 0.5 * to_seconds(grid_.back()) * n * lam_grad * lam_grad;
  }

  const std::vector<Tick>& grid() const { return grid_; }
  double upper_bound() const { return upper_; }
  double lower_bound() const { return lower_; }

  std::vector<double> operator()(const PathView& p) const {
    std::vector<double> out;
    const double m0 = eval_trace_poly_scalar(mean_[0], p).real();
    double integral = 0.0;
    auto energy = [&](const std::vector<TracePoly>& gs) {
      double e = 0.0;
      for (const auto& g : gs) {
        if (g.is_zero()) continue;
        Matrix G = hermitian_part(eval_trace_poly(g, p));
        e += detail::trace_of_product(G, G).real();
      }
      return e;
    };
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      if (k > 0) {
        // Past-time gradients are evaluated on the path at their own time.
        integral += 0.5 * to_seconds(grid_[k] - grid_[k - 1]) * (energy(grad_right_[k - 1]) + energy(grad_at_[k]));
      }
      double v = eval_trace_poly_scalar(mean_[k], p).real() - m0 - 0.5 * integral;
      if (v > upper_ * (1 + 1e-9) + 1e-12 || v < lower_ * (1 + 1e-9) - 1e-12)
        throw std::logic_error("girsanov_exponent: value " + std::to_string(v) + " at t = " + format_time(grid_[k]) +
                               " violates the bound [" + std::to_string(lower_) + ", " + std::to_string(upper_) + "]");
      out.push_back(v);
    }
    return out;
  }

 private:
  std::vector<Tick> grid_;
  std::vector<TracePoly> mean_;
  std::vector<std::vector<TracePoly>> grad_at_, grad_right_;
  double upper_ = 0.0, lower_ = 0.0;
};

inline std::vector<double> girsanov_exponent(const PathView& p, const NCPoly& c, const std::vector<Tick>& grid,
                                             double R) {
  return GirsanovExponent(c, p.components(), grid, R)(p);
}

// ---------------------------------------------------------------------------
// Truncated tracial distance

struct Corpus {
  int l_max = 1;               // outer sum over ℓ = 1..l_max, times restricted to [0, ℓ]
  int m_max = 2;               // words of length ≤ m_max
  std::vector<Tick> times;     // time grid for u letters
  std::vector<Letter> x;       // x letters in play
  int n = 1;                   // unitary components
  double R = 1.0;
};

struct CorpusWord {
  Word w;
  std::size_t length;
  Tick max_time;
};

// Every word of length 1..m_max over {x_j} ∪ {u_i(t), u_i(t)* : t ∈ times}.
inline std::vector<CorpusWord> corpus_words(const Corpus& c) {
  std::vector<Letter> alphabet = c.x;
  for (int i = 1; i <= c.n; ++i)
    for (Tick t : c.times) {
      alphabet.push_back({Kind::U, i, 0, t, false});
      alphabet.push_back({Kind::U, i, 0, t, true});
    }
  std::vector<CorpusWord> out;
  std::vector<Letter> cur;
  std::function<void()> grow = [&] {
    if (!cur.empty()) {
      Tick mt = 0;
      for (const auto& l : cur)
        if (l.kind == Kind::U) mt = std::max(mt, l.t);
      // Raw letter sequence: a word with cancelling neighbours is still a
      // member of the corpus, its value being that of the reduced word.
      out.push_back({Word(cur), cur.size(), mt});
    }
    if (static_cast<int>(cur.size()) == c.m_max) return;
    for (const auto& l : alphabet) {
      cur.push_back(l);
      grow();
      cur.pop_back();
    }
  };
  grow();
  return out;
}

// Σ_{ℓ≤l_max} Σ_{m≤m_max} 2^{−ℓ}(2R)^{−m} max_{|w|≤m, times ≤ ℓ} |Δ(w)| for any
// per-word nonnegative discrepancy Δ.
inline double corpus_weighted_max(const Corpus& c, const std::vector<CorpusWord>& ws, const std::vector<double>& delta) {
  double d = 0.0;
  for (int l = 1; l <= c.l_max; ++l) {
    const Tick lim = to_ticks(static_cast<double>(l));
    double running = 0.0;
    for (int m = 1; m <= c.m_max; ++m) {
      for (std::size_t k = 0; k < ws.size(); ++k)
        if (static_cast<int>(ws[k].length) == m && ws[k].max_time <= lim) running = std::max(running, delta[k]);
      d += std::ldexp(1.0, -l) * std::pow(2 * c.R, -m) * running;
    }
  }
  return d;
}

inline double tracial_distance(const TraceOracle& a, const TraceOracle& b, const Corpus& c) {
  auto ws = corpus_words(c);
  std::vector<Word> plain;
  for (const auto& cw : ws) plain.push_back(cw.w);
  auto va = a.values(plain), vb = b.values(plain);
  std::vector<double> delta(ws.size());
  for (std::size_t k = 0; k < ws.size(); ++k) delta[k] = std::abs(va[k] - vb[k]);
  return corpus_weighted_max(c, ws, delta);
}

// Distance between two ensemble means together with its noise level: the
// same weighted maximum applied to the per-word standard error of the
// difference.
struct DistanceEstimate {
  double distance = 0.0;
  double noise = 0.0;
};

inline DistanceEstimate tracial_distance_estimate(const EmpiricalOracle& a, const EmpiricalOracle& b, const Corpus& c) {
  auto ws = corpus_words(c);
  std::vector<Word> plain;
  for (const auto& cw : ws) plain.push_back(cw.w);
  auto ea = a.estimates(plain), eb = b.estimates(plain);
  std::vector<double> delta(ws.size()), se(ws.size());
  for (std::size_t k = 0; k < ws.size(); ++k) {
    delta[k] = std::abs(ea[k].mean - eb[k].mean);
    se[k] = std::hypot(ea[k].stderr, eb[k].stderr);
  }
  return {corpus_weighted_max(c, ws, delta), corpus_weighted_max(c, ws, se)};
}

}  // namespace liblab
