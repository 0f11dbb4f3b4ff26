// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "liblab/poly.hpp"
#include "liblab/trace_poly.hpp"

namespace liblab {

// Indicator side for the derivation's time cutoff. At a letter time t' the
// gradient jumps; kAt uses 1_{t <= t'} (the value at t, which is the limit
// from the left), kRightLimit uses 1_{t < t'}.
enum class Side { kAt, kRightLimit };

namespace detail {
inline bool active(Tick t, Tick letter_t, Side side) {
  return side == Side::kAt ? t <= letter_t : t < letter_t;
}
inline void require_alphabet(const Letter& l, bool liberation) {
  bool ok = liberation ? (l.kind == Kind::XL || l.kind == Kind::X) : (l.kind == Kind::X || l.kind == Kind::U);
  if (!ok)
    throw std::invalid_argument(std::string("letter ") + l.str() + " is outside the " +
                                (liberation ? "liberation" : "x,u") + " alphabet");
}
}  // namespace detail

// δ_{t,i} on the x,u alphabet: Leibniz extension of
//   u_i(t')  ↦  i·u_i(t')u_i(t)* ⊗ u_i(t)
//   u_i(t')* ↦ −i·u_i(t)* ⊗ u_i(t)u_i(t')*
// for t ≤ t', and zero on x letters.
inline TensorNCPoly delta_u(Tick t, int i, const NCPoly& p, Side side = Side::kAt) {
  TensorNCPoly r;
  const Letter ut = {Kind::U, i, 0, t, false};
  const Letter ut_star = ut.adjoint();
  for (const auto& [w, c] : p.terms()) {
    for (std::size_t k = 0; k < w.size(); ++k) {
      const Letter& l = w[k];
      detail::require_alphabet(l, false);
      if (l.kind != Kind::U || l.i != i || !detail::active(t, l.t, side)) continue;
      Word left = w.slice(0, k), right = w.slice(k + 1, w.size());
      if (!l.star) {
        left.push(l);
        left.push(ut_star);
        r.add({left, Word(ut) * right}, kI * c);
      } else {
        left.push(ut_star);
        r.add({left, Word{ut, l} * right}, -kI * c);
      }
    }
  }
  return r;
}

// 𝔇_{t,i} = θ ∘ δ_{t,i}
inline NCPoly D_u(Tick t, int i, const NCPoly& p, Side side = Side::kAt) {
  return theta(delta_u(t, i, p, side));
}

// 𝔇_{t,i} from its explicit cyclic form, written without the tensor step:
//   i·Σ u_i(t) w2 w1 u_i(t') u_i(t)*  over w = w1 u_i(t') w2,
//  −i·Σ u_i(t) u_i(t')* w2 w1 u_i(t)* over w = w1 u_i(t')* w2.
inline NCPoly D_u_cyclic(Tick t, int i, const NCPoly& p, Side side = Side::kAt) {
  NCPoly r;
  const Letter ut = {Kind::U, i, 0, t, false};
  for (const auto& [w, c] : p.terms()) {
    for (std::size_t k = 0; k < w.size(); ++k) {
      const Letter& l = w[k];
      detail::require_alphabet(l, false);
      if (l.kind != Kind::U || l.i != i || !detail::active(t, l.t, side)) continue;
      Word rotated = w.slice(k + 1, w.size()) * w.slice(0, k);
      if (!l.star)
        r.add(Word(ut) * rotated * Word{l, ut.adjoint()}, kI * c);
      else
        r.add(Word{ut, l} * rotated * Word(ut.adjoint()), -kI * c);
    }
  }
  return r;
}

// Time shift Π^t. On the x,u alphabet u_i(t') ↦ ũ_i((t'−t)∨0)·u_i(t∧t').
// On the liberation alphabet x_ij(t') ↦ v_i((t'−t)∨0) x_ij(t∧t') v_i(...)*
// for i ≤ n; families with i > n never move. UT and V letters are fixed.
inline NCPoly pi_t(Tick t, const NCPoly& p, int n = std::numeric_limits<int>::max()) {
  return substitute(p, [&](const Letter& l) -> NCPoly {
    if (l.kind == Kind::U) {
      if (l.t <= t) return NCPoly(l);
      Letter ut = {Kind::UT, l.i, 0, l.t - t, false};
      Letter now = {Kind::U, l.i, 0, t, false};
      return l.star ? NCPoly(Word{now.adjoint(), ut.adjoint()}) : NCPoly(Word{ut, now});
    }
    if (l.kind == Kind::XL) {
      if (l.t <= t) return NCPoly(l);
      Letter now = l;
      now.t = t;
      if (l.i > n) return NCPoly(now);
      Letter v = {Kind::V, l.i, 0, l.t - t, false};
      return NCPoly(Word{v, now, v.adjoint()});
    }
    return NCPoly(l);
  });
}

// δ_{t,i} on the liberation alphabet: Leibniz extension of
//   x_ij(t') ↦ x_ij(t') v ⊗ v* − v ⊗ v* x_ij(t'),  v = v_i(t'−t), t ≤ t'.
inline TensorNCPoly delta_lib(Tick t, int i, const NCPoly& p, Side side = Side::kAt) {
  TensorNCPoly r;
  for (const auto& [w, c] : p.terms()) {
    for (std::size_t k = 0; k < w.size(); ++k) {
      const Letter& l = w[k];
      detail::require_alphabet(l, true);
      if (l.kind != Kind::XL || l.i != i || !detail::active(t, l.t, side)) continue;
      const Letter v = {Kind::V, i, 0, l.t - t, false};
      Word w1 = w.slice(0, k), w2 = w.slice(k + 1, w.size());
      r.add({w1 * Word{l, v}, Word(v.adjoint()) * w2}, c);
      r.add({w1 * Word(v), Word{v.adjoint(), l} * w2}, -c);
    }
  }
  return r;
}

inline NCPoly D_lib(Tick t, int i, const NCPoly& p, Side side = Side::kAt) {
  return theta(delta_lib(t, i, p, side));
}

// Lift from the liberation alphabet: x_ij(t) ↦ u_i(t) x_(i,j) u_i(t)* for
// i ≤ n, x_ij(t) ↦ x_(i,j) for i > n, v_i ↦ ũ_i.
inline NCPoly lift_u(const NCPoly& p, int n) {
  return substitute(p, [&](const Letter& l) -> NCPoly {
    if (l.kind == Kind::XL) {
      Letter x = {Kind::X, l.i, l.j, 0, false};
      if (l.i > n) return NCPoly(x);
      Letter u = {Kind::U, l.i, 0, l.t, false};
      return NCPoly(Word{u, x, u.adjoint()});
    }
    if (l.kind == Kind::V) {
      Letter ut = l;
      ut.kind = Kind::UT;
      return NCPoly(ut);
    }
    return NCPoly(l);
  });
}

inline TracePoly lift_u(const TracePoly& p, int n) {
  return p.map_words([&](const Word& w) { return lift_u(NCPoly(w), n); });
}

// y_i(t) = e^{t/2} u_i(t) and its inverse.
inline NCPoly y(int i, double t) { return NCPoly(letters::u(i, t), std::exp(t / 2)); }
inline NCPoly yinv(int i, double t) { return NCPoly(letters::u_star(i, t), std::exp(-t / 2)); }

}  // namespace liblab
