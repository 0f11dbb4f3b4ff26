// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "liblab/derivation.hpp"
#include "liblab/free_moments.hpp"
#include "liblab/trace_poly.hpp"

namespace liblab {

inline constexpr std::size_t kMaxExpectationDegree = 12;

namespace detail {

// Trace of a product of powers of mutually free unitary Brownian increments.
// Each factor is g^p, optionally centered (g^p − τ(g^p)).
class FreeIncrementTrace {
 public:
  struct Factor {
    int gen;
    int power;
    bool centered;
    friend auto operator<=>(const Factor&, const Factor&) = default;
  };

  explicit FreeIncrementTrace(std::vector<Tick> gen_duration) : duration_(std::move(gen_duration)) {}

  double tau(std::vector<Factor> seq) {
    // Powers equal to zero: uncentered is the unit, centered is zero.
    for (auto it = seq.begin(); it != seq.end();) {
      if (it->power != 0) {
        ++it;
        continue;
      }
      if (it->centered) return 0.0;
      it = seq.erase(it);
    }
    if (seq.empty()) return 1.0;
    if (seq.size() >= 2 && seq.front().gen == seq.back().gen)
      std::rotate(seq.begin(), seq.end() - 1, seq.end());
    for (std::size_t k = 0; k + 1 < seq.size(); ++k)
      if (seq[k].gen == seq[k + 1].gen) return merged(seq, k);

    auto hit = memo_.find(seq);
    if (hit != memo_.end()) return hit->second;

    double value = 0.0;
    auto first_plain = std::find_if(seq.begin(), seq.end(), [](const Factor& f) { return !f.centered; });
    if (first_plain != seq.end()) {
      // g^p = (g^p − m_p) + m_p
      std::size_t j = static_cast<std::size_t>(first_plain - seq.begin());
      std::vector<Factor> centered = seq;
      centered[j].centered = true;
      std::vector<Factor> dropped = seq;
      dropped.erase(dropped.begin() + static_cast<std::ptrdiff_t>(j));
      value = tau(centered) + moment(seq[j]) * tau(dropped);
    }
    // else: a cyclically alternating product of centered free elements.
    memo_.emplace(std::move(seq), value);
    return value;
  }

 private:
  std::vector<Tick> duration_;
  std::map<std::vector<Factor>, double> memo_;

  double moment(const Factor& f) const { return ubm_moment(f.power, duration_[static_cast<std::size_t>(f.gen)]); }

  // (g^p − a·m_p)(g^q − b·m_q) expanded into uncentered pieces.
  double merged(const std::vector<Factor>& seq, std::size_t k) {
    const Factor f = seq[k], g = seq[k + 1];
    auto with = [&](std::vector<Factor> repl) {
      std::vector<Factor> s(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(k));
      s.insert(s.end(), repl.begin(), repl.end());
      s.insert(s.end(), seq.begin() + static_cast<std::ptrdiff_t>(k + 2), seq.end());
      return tau(std::move(s));
    };
    double v = with({{f.gen, f.power + g.power, false}});
    if (g.centered) v -= moment(g) * with({{f.gen, f.power, false}});
    if (f.centered) v -= moment(f) * with({{g.gen, g.power, false}});
    if (f.centered && g.centered) v += moment(f) * moment(g) * with({});
    return v;
  }
};

}  // namespace detail

// Joint moment τ(w) of a word in free unitary Brownian motion letters (all UT
// or all V). Each letter of index i at time s is rewritten as a product of
// left increments over the sorted times used with that index; increments are
// mutually free and distributed as the process at their duration.
inline double ubm_word_moment(const Word& w) {
  if (w.empty()) return 1.0;
  const Kind kind = w[0].kind;
  std::map<int, std::vector<Tick>> times;
  for (const auto& l : w.letters()) {
    if (!l.free_part() || l.kind != kind)
      throw std::invalid_argument("ubm_word_moment: word must consist of UT letters only or V letters only: " +
                                  w.str());
    times[l.i].push_back(l.t);
  }
  std::map<std::pair<int, Tick>, int> gen_of;  // (index, time) -> increment ending there
  std::vector<Tick> duration;
  std::map<int, std::vector<int>> chain;  // index -> generators in time order
  for (auto& [i, ts] : times) {
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    Tick prev = 0;
    for (Tick s : ts) {
      gen_of[{i, s}] = static_cast<int>(duration.size());
      chain[i].push_back(static_cast<int>(duration.size()));
      duration.push_back(s - prev);
      prev = s;
    }
  }
  using Factor = detail::FreeIncrementTrace::Factor;
  std::vector<Factor> seq;
  auto push = [&seq](int gen, int power) {
    if (!seq.empty() && seq.back().gen == gen) {
      seq.back().power += power;
      if (seq.back().power == 0) seq.pop_back();
      return;
    }
    seq.push_back({gen, power, false});
  };
  for (const auto& l : w.letters()) {
    const auto& c = chain[l.i];
    int last = gen_of[{l.i, l.t}];
    auto end = std::find(c.begin(), c.end(), last) + 1;
    if (!l.star)
      for (auto it = std::make_reverse_iterator(end); it != c.rend(); ++it) push(*it, 1);
    else
      for (auto it = c.begin(); it != end; ++it) push(*it, -1);
  }
  return detail::FreeIncrementTrace(std::move(duration)).tau(std::move(seq));
}

namespace detail {

// Conditional expectation onto the algebra of letters with time ≤ t, which is
// free from the algebra generated by UT/V letters. A word is split into
// alternating past blocks b_0 a_1 b_1 … a_k b_k; centering a_m = τ(a_m) + å_m
// and interior b_m = Tr(b_m) + b̊_m until every block is centered, at which
// point the term vanishes.
class PastExpectation {
 public:
  explicit PastExpectation(Tick t) : t_(t) {}

  void add(const std::vector<Word>& traces, const Word& w, Complex coef) {
    if (w.size() > kMaxExpectationDegree)
      throw std::invalid_argument("conditional expectation: word degree exceeds " +
                                  std::to_string(kMaxExpectationDegree) + ": " + w.str());
    std::vector<Slot> past(1), free;
    for (const auto& l : w.letters()) {
      if (l.free_part()) {
        if (free.size() == past.size()) free.back().w.push(l);
        else free.push_back({Word(l), false});
        continue;
      }
      if (l.kind != Kind::X && l.t > t_)
        throw std::invalid_argument("conditional expectation: letter " + l.str() + " lies after t = " +
                                    format_time(t_));
      if (free.size() == past.size()) past.push_back({Word{}, false});
      past.back().w.push(l);
    }
    if (past.size() == free.size()) past.push_back({Word{}, false});
    run(std::move(past), std::move(free), coef, traces);
  }

  const TracePoly& result() const { return out_; }

 private:
  struct Slot {
    Word w;
    bool centered;
  };

  Tick t_;
  TracePoly out_;
  std::map<Word, double> tau_cache_;

  double tau_free(const Word& a) {
    auto it = tau_cache_.find(a);
    if (it != tau_cache_.end()) return it->second;
    double v = ubm_word_moment(a);
    tau_cache_.emplace(a, v);
    return v;
  }

  // past.size() == free.size() + 1 throughout.
  void run(std::vector<Slot> past, std::vector<Slot> free, Complex coef, std::vector<Word> traces) {
    if (coef == Complex{}) return;
    for (std::size_t m = 0; m < free.size(); ++m) {
      if (!free[m].w.empty()) continue;
      if (free[m].centered) return;
      merge_past(std::move(past), std::move(free), m, coef, std::move(traces));
      return;
    }
    for (std::size_t m = 1; m + 1 < past.size(); ++m) {
      if (!past[m].w.empty()) continue;
      if (past[m].centered) return;
      merge_free(std::move(past), std::move(free), m, coef, std::move(traces));
      return;
    }
    if (free.empty()) {
      out_.add_term(traces, past[0].w, coef);
      return;
    }
    for (std::size_t m = 0; m < free.size(); ++m) {
      if (free[m].centered) continue;
      double tau = tau_free(free[m].w);
      auto centered = free;
      centered[m].centered = true;
      run(past, std::move(centered), coef, traces);
      free[m] = {Word{}, false};
      run(std::move(past), std::move(free), coef * tau, std::move(traces));
      return;
    }
    for (std::size_t m = 1; m + 1 < past.size(); ++m) {
      if (past[m].centered) continue;
      auto centered = past;
      centered[m].centered = true;
      run(std::move(centered), free, coef, traces);
      traces.push_back(past[m].w);
      past[m] = {Word{}, false};
      run(std::move(past), std::move(free), coef, std::move(traces));
      return;
    }
  }

  // Free slot m is the unit: fuse past[m] and past[m+1].
  void merge_past(std::vector<Slot> past, std::vector<Slot> free, std::size_t m, Complex coef,
                  std::vector<Word> traces) {
    const Slot p = past[m], q = past[m + 1];
    free.erase(free.begin() + static_cast<std::ptrdiff_t>(m));
    past.erase(past.begin() + static_cast<std::ptrdiff_t>(m + 1));
    auto branch = [&](Word w, std::vector<Word> extra, Complex c) {
      auto ps = past;
      ps[m] = {std::move(w), false};
      auto tr = traces;
      tr.insert(tr.end(), extra.begin(), extra.end());
      run(std::move(ps), free, c, std::move(tr));
    };
    branch(p.w * q.w, {}, coef);
    if (q.centered) branch(p.w, {q.w}, -coef);
    if (p.centered) branch(q.w, {p.w}, -coef);
    if (p.centered && q.centered) branch(Word{}, {p.w, q.w}, coef);
  }

  // Interior past slot m is the unit: fuse free[m-1] and free[m].
  void merge_free(std::vector<Slot> past, std::vector<Slot> free, std::size_t m, Complex coef,
                  std::vector<Word> traces) {
    const Slot a = free[m - 1], b = free[m];
    past.erase(past.begin() + static_cast<std::ptrdiff_t>(m));
    free.erase(free.begin() + static_cast<std::ptrdiff_t>(m));
    auto branch = [&](Word w, Complex c) {
      auto fs = free;
      fs[m - 1] = {std::move(w), false};
      run(past, std::move(fs), c, traces);
    };
    branch(a.w * b.w, coef);
    if (b.centered) branch(a.w, -coef * tau_free(b.w));
    if (a.centered) branch(b.w, -coef * tau_free(a.w));
    if (a.centered && b.centered) branch(Word{}, coef * tau_free(a.w) * tau_free(b.w));
  }
};

}  // namespace detail

// E onto the past algebra at time t (letters X, U, XL with time ≤ t).
inline TracePoly cond_expect_past(const TracePoly& p, Tick t) {
  detail::PastExpectation e(t);
  for (const auto& [k, c] : p.terms()) e.add(k.traces, k.carrier, c);
  return e.result();
}

inline TracePoly cond_expect_past(const NCPoly& p, Tick t) { return cond_expect_past(TracePoly(p), t); }

// E(Π^t 𝔇_{t,i} a) on the x,u alphabet.
inline TracePoly projected_gradient(const NCPoly& a, int i, Tick t, Side side = Side::kAt) {
  return cond_expect_past(pi_t(t, D_u(t, i, a, side)), t);
}

// E(Π^t 𝔇_{t,i} a) on the liberation alphabet with n moving families.
inline TracePoly projected_gradient_lib(const NCPoly& a, int i, Tick t, int n, Side side = Side::kAt) {
  return cond_expect_past(pi_t(t, D_lib(t, i, a, side), n), t);
}

// Every liberation state has time-independent one-letter marginals,
// τ(x_ij(s)) = τ(x_ij(0)); rewrite such trace symbols to time 0.
inline TracePoly with_stationary_marginals(const TracePoly& p) {
  TracePoly r;
  for (const auto& [k, c] : p.terms()) {
    std::vector<Word> tr;
    for (const auto& w : k.traces) {
      if (w.size() == 1 && w[0].kind == Kind::XL) {
        Letter l = w[0];
        l.t = 0;
        tr.push_back(Word(l));
      } else {
        tr.push_back(w);
      }
    }
    r.add_term(tr, k.carrier, c);
  }
  return r;
}

}  // namespace liblab
