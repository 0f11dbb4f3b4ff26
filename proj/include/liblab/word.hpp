// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "liblab/time.hpp"

namespace liblab {

// X: time-free matrix family x_(i,j); i = 0 for the plain family x_j.
// XL: liberation process x_ij(t), self-adjoint.
// U: unitary Brownian motion u_i(t).  UT: the free copy ũ_i(t) used by
// the time shift.  V: v_i(t), the liberation analogue of UT.
enum class Kind : std::uint8_t { X, XL, U, UT, V };

struct Letter {
  Kind kind = Kind::X;
  int i = 0;
  int j = 0;
  Tick t = 0;
  bool star = false;

  friend auto operator<=>(const Letter&, const Letter&) = default;

  bool unitary() const { return kind == Kind::U || kind == Kind::UT || kind == Kind::V; }
  // UT and V are the letters projected out by conditional expectation.
  bool free_part() const { return kind == Kind::UT || kind == Kind::V; }

  Letter adjoint() const {
    Letter l = *this;
    if (unitary()) l.star = !star;
    return l;
  }

  bool cancels(const Letter& o) const {
    return unitary() && kind == o.kind && i == o.i && t == o.t && star != o.star;
  }

  std::string str() const {
    switch (kind) {
      case Kind::X:
        return i == 0 ? "x(" + std::to_string(j) + ")"
                      : "x(" + std::to_string(i) + "," + std::to_string(j) + ")";
      case Kind::XL:
        return "xl(" + std::to_string(i) + "," + std::to_string(j) + "," + format_time(t) + ")";
      case Kind::U:
        return std::string(star ? "u*(" : "u(") + std::to_string(i) + "," + format_time(t) + ")";
      case Kind::UT:
        return std::string(star ? "ut*(" : "ut(") + std::to_string(i) + "," + format_time(t) + ")";
      case Kind::V:
        return std::string(star ? "v*(" : "v(") + std::to_string(i) + "," + format_time(t) + ")";
    }
    return "?";
  }
};

namespace letters {
inline Letter x(int j) { return {Kind::X, 0, j, 0, false}; }
inline Letter x(int i, int j) { return {Kind::X, i, j, 0, false}; }
inline Letter xl(int i, int j, double t) { return {Kind::XL, i, j, to_ticks(t), false}; }
inline Letter u(int i, double t, bool star = false) { return {Kind::U, i, 0, to_ticks(t), star}; }
inline Letter ut(int i, double t, bool star = false) { return {Kind::UT, i, 0, to_ticks(t), star}; }
inline Letter v(int i, double t, bool star = false) { return {Kind::V, i, 0, to_ticks(t), star}; }
inline Letter u_star(int i, double t) { return u(i, t, true); }
inline Letter ut_star(int i, double t) { return ut(i, t, true); }
inline Letter v_star(int i, double t) { return v(i, t, true); }
}  // namespace letters

// A word kept in canonical form: adjacent inverse unitary pairs cancelled,
// UT/V letters at time 0 dropped (the free copies start at the unit).
class Word {
 public:
  Word() = default;
  Word(std::initializer_list<Letter> ls) { for (const auto& l : ls) push(l); }
  explicit Word(const std::vector<Letter>& ls) { for (const auto& l : ls) push(l); }
  explicit Word(const Letter& l) { push(l); }

  const std::vector<Letter>& letters() const { return letters_; }
  std::size_t size() const { return letters_.size(); }
  bool empty() const { return letters_.empty(); }
  const Letter& operator[](std::size_t k) const { return letters_[k]; }

  void push(const Letter& l) {
    if (l.free_part() && l.t == 0) return;
    if (!letters_.empty() && letters_.back().cancels(l)) {
      letters_.pop_back();
      return;
    }
    letters_.push_back(l);
  }

  Word adjoint() const {
    Word w;
    for (auto it = letters_.rbegin(); it != letters_.rend(); ++it) w.push(it->adjoint());
    return w;
  }

  // Sub-word [from, to) re-canonicalized (it already is, being a factor).
  Word slice(std::size_t from, std::size_t to) const {
    Word w;
    w.letters_.assign(letters_.begin() + static_cast<std::ptrdiff_t>(from),
                      letters_.begin() + static_cast<std::ptrdiff_t>(to));
    return w;
  }

  friend Word operator*(Word a, const Word& b) {
    for (const auto& l : b.letters_) a.push(l);
    return a;
  }

  friend auto operator<=>(const Word&, const Word&) = default;

  std::string str() const {
    if (letters_.empty()) return "1";
    std::string s;
    for (std::size_t k = 0; k < letters_.size(); ++k) {
      if (k) s += "*";
      s += letters_[k].str();
    }
    return s;
  }

 private:
  std::vector<Letter> letters_;
};

// Representative of the cyclic class of w used for trace symbols: strip
// cancelling end pairs, then take the lexicographically least rotation.
inline Word cyclic_canonical(const Word& w) {
  std::vector<Letter> ls = w.letters();
  std::size_t lo = 0, hi = ls.size();
  while (hi - lo >= 2 && ls[lo].cancels(ls[hi - 1])) {
    ++lo;
    --hi;
  }
  std::vector<Letter> core(ls.begin() + static_cast<std::ptrdiff_t>(lo),
                           ls.begin() + static_cast<std::ptrdiff_t>(hi));
  if (core.size() <= 1) return Word(core);
  std::vector<Letter> best = core;
  std::vector<Letter> rot = core;
  for (std::size_t r = 1; r < core.size(); ++r) {
    std::rotate(rot.begin(), rot.begin() + 1, rot.end());
    if (rot < best) best = rot;
  }
  return Word(best);
}

}  // namespace liblab
