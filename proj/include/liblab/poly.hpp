// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "liblab/word.hpp"

namespace liblab {

using Complex = std::complex<double>;
inline constexpr Complex kI{0.0, 1.0};

// Finite linear combination over an ordered key type. Exact zeros are
// never stored.
template <class Key>
class LinearCombination {
 public:
  using Map = std::map<Key, Complex>;

  LinearCombination() = default;

  const Map& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  std::size_t size() const { return terms_.size(); }

  void add(const Key& k, Complex c) {
    if (c == Complex{}) return;
    auto [it, inserted] = terms_.try_emplace(k, c);
    if (!inserted) {
      it->second += c;
      if (it->second == Complex{}) terms_.erase(it);
    }
  }

  Complex coeff(const Key& k) const {
    auto it = terms_.find(k);
    return it == terms_.end() ? Complex{} : it->second;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& [k, c] : terms_) m = std::max(m, std::abs(c));
    return m;
  }

  // Drop coefficients with |c| <= tol.
  void prune(double tol) {
    for (auto it = terms_.begin(); it != terms_.end();)
      it = std::abs(it->second) <= tol ? terms_.erase(it) : std::next(it);
  }

 protected:
  Map terms_;

  template <class D>
  static D sum(D a, const D& b, Complex s) {
    for (const auto& [k, c] : b.terms_) a.add(k, s * c);
    return a;
  }
  template <class D>
  static D scaled(const D& a, Complex s) {
    D r;
    if (s == Complex{}) return r;
    for (const auto& [k, c] : a.terms_) r.add(k, s * c);
    return r;
  }
};

// Coefficient-wise comparison on identical keys, |a-b| <= tol*max(1,|a|,|b|).
template <class P>
bool approx_equal(const P& a, const P& b, double tol = 1e-12) {
  auto close = [tol](Complex x, Complex y) {
    return std::abs(x - y) <= tol * std::max({1.0, std::abs(x), std::abs(y)});
  };
  for (const auto& [k, c] : a.terms())
    if (!close(c, b.coeff(k))) return false;
  for (const auto& [k, c] : b.terms())
    if (!close(a.coeff(k), c)) return false;
  return true;
}

inline std::string format_complex(Complex c) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.12g%+.12gi", c.real(), c.imag());
  return buf;
}

class NCPoly : public LinearCombination<Word> {
 public:
  NCPoly() = default;
  NCPoly(Complex c) { add(Word{}, c); }  // NOLINT: scalars embed as multiples of 1
  NCPoly(const Word& w, Complex c = 1.0) { add(w, c); }
  NCPoly(const Letter& l, Complex c = 1.0) { add(Word(l), c); }

  friend NCPoly operator+(const NCPoly& a, const NCPoly& b) { return sum(a, b, 1.0); }
  friend NCPoly operator-(const NCPoly& a, const NCPoly& b) { return sum(a, b, -1.0); }
  friend NCPoly operator-(const NCPoly& a) { return scaled(a, -1.0); }
  friend NCPoly operator*(Complex s, const NCPoly& a) { return scaled(a, s); }
  friend NCPoly operator*(const NCPoly& a, Complex s) { return scaled(a, s); }
  NCPoly& operator+=(const NCPoly& b) { return *this = *this + b; }
  NCPoly& operator-=(const NCPoly& b) { return *this = *this - b; }

  friend NCPoly operator*(const NCPoly& a, const NCPoly& b) {
    NCPoly r;
    for (const auto& [wa, ca] : a.terms_)
      for (const auto& [wb, cb] : b.terms_) r.add(wa * wb, ca * cb);
    return r;
  }

  friend bool operator==(const NCPoly& a, const NCPoly& b) { return a.terms_ == b.terms_; }

  NCPoly adjoint() const {
    NCPoly r;
    for (const auto& [w, c] : terms_) r.add(w.adjoint(), std::conj(c));
    return r;
  }

  std::size_t degree() const {
    std::size_t d = 0;
    for (const auto& [w, c] : terms_) d = std::max(d, w.size());
    return d;
  }

  // Sorted distinct times of letters of the given kind (all kinds if empty).
  std::vector<Tick> letter_times(std::initializer_list<Kind> kinds = {}) const {
    std::set<Tick> ts;
    for (const auto& [w, c] : terms_)
      for (const auto& l : w.letters())
        if (kinds.size() == 0 || std::find(kinds.begin(), kinds.end(), l.kind) != kinds.end())
          if (l.kind != Kind::X) ts.insert(l.t);
    return {ts.begin(), ts.end()};
  }

  std::string str() const {
    if (terms_.empty()) return "0";
    std::string s;
    for (const auto& [w, c] : terms_) {
      if (!s.empty()) s += " + ";
      s += "(" + format_complex(c) + ")*" + w.str();
    }
    return s;
  }
};

// Elements of the algebraic tensor square, stored as word pairs.
class TensorNCPoly : public LinearCombination<std::pair<Word, Word>> {
 public:
  TensorNCPoly() = default;
  TensorNCPoly(const Word& a, const Word& b, Complex c = 1.0) { add({a, b}, c); }

  friend TensorNCPoly operator+(const TensorNCPoly& a, const TensorNCPoly& b) { return sum(a, b, 1.0); }
  friend TensorNCPoly operator-(const TensorNCPoly& a, const TensorNCPoly& b) { return sum(a, b, -1.0); }
  friend TensorNCPoly operator*(Complex s, const TensorNCPoly& a) { return scaled(a, s); }
  friend bool operator==(const TensorNCPoly& a, const TensorNCPoly& b) { return a.terms_ == b.terms_; }

  // (p ⊗ 1) · T · (1 ⊗ q)
  friend TensorNCPoly sandwich(const NCPoly& p, const TensorNCPoly& t, const NCPoly& q) {
    TensorNCPoly r;
    for (const auto& [wp, cp] : p.terms())
      for (const auto& [ab, c] : t.terms_)
        for (const auto& [wq, cq] : q.terms()) r.add({wp * ab.first, ab.second * wq}, cp * c * cq);
    return r;
  }

  std::string str() const {
    if (terms_.empty()) return "0";
    std::string s;
    for (const auto& [ab, c] : terms_) {
      if (!s.empty()) s += " + ";
      s += "(" + format_complex(c) + ")*" + ab.first.str() + " ⊗ " + ab.second.str();
    }
    return s;
  }
};

// θ(a ⊗ b) = b a
inline NCPoly theta(const TensorNCPoly& t) {
  NCPoly r;
  for (const auto& [ab, c] : t.terms()) r.add(ab.second * ab.first, c);
  return r;
}

// (a ⊗ b) ♯ ξ = a ξ b
inline NCPoly sharp(const TensorNCPoly& t, const NCPoly& xi) {
  NCPoly r;
  for (const auto& [ab, c] : t.terms())
    for (const auto& [w, cx] : xi.terms()) r.add(ab.first * w * ab.second, c * cx);
  return r;
}

// Applies a letter substitution extended multiplicatively.
template <class F>
NCPoly substitute(const NCPoly& p, F&& image_of_letter) {
  NCPoly r;
  for (const auto& [w, c] : p.terms()) {
    NCPoly acc(c);
    for (const auto& l : w.letters()) acc = acc * image_of_letter(l);
    r += acc;
  }
  return r;
}

}  // namespace liblab
