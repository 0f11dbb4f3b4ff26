// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "liblab/poly.hpp"

namespace liblab {

// Term key of a trace polynomial: a sorted multiset of trace symbols (each
// in cyclic canonical form, never the empty word) and a carrier word.
struct TraceKey {
  std::vector<Word> traces;
  Word carrier;

  friend auto operator<=>(const TraceKey&, const TraceKey&) = default;
};

inline std::vector<Word> canonical_traces(const std::vector<Word>& ws) {
  std::vector<Word> out;
  out.reserve(ws.size());
  for (const auto& w : ws) {
    Word c = cyclic_canonical(w);
    if (!c.empty()) out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end());
  return out;
}

class TracePoly : public LinearCombination<TraceKey> {
 public:
  TracePoly() = default;
  TracePoly(Complex c) { add(TraceKey{{}, Word{}}, c); }  // NOLINT
  TracePoly(const NCPoly& p) {                            // NOLINT
    for (const auto& [w, c] : p.terms()) add(TraceKey{{}, w}, c);
  }

  void add_term(const std::vector<Word>& traces, const Word& carrier, Complex c) {
    add(TraceKey{canonical_traces(traces), carrier}, c);
  }

  // Tr(w)·1
  static TracePoly trace_of(const Word& w, Complex c = 1.0) {
    TracePoly r;
    r.add_term({w}, Word{}, c);
    return r;
  }

  friend TracePoly operator+(const TracePoly& a, const TracePoly& b) { return sum(a, b, 1.0); }
  friend TracePoly operator-(const TracePoly& a, const TracePoly& b) { return sum(a, b, -1.0); }
  friend TracePoly operator-(const TracePoly& a) { return scaled(a, -1.0); }
  friend TracePoly operator*(Complex s, const TracePoly& a) { return scaled(a, s); }
  TracePoly& operator+=(const TracePoly& b) { return *this = *this + b; }
  friend bool operator==(const TracePoly& a, const TracePoly& b) { return a.terms_ == b.terms_; }

  friend TracePoly operator*(const TracePoly& a, const TracePoly& b) {
    TracePoly r;
    for (const auto& [ka, ca] : a.terms_)
      for (const auto& [kb, cb] : b.terms_) {
        std::vector<Word> tr = ka.traces;
        tr.insert(tr.end(), kb.traces.begin(), kb.traces.end());
        std::sort(tr.begin(), tr.end());
        r.add(TraceKey{std::move(tr), ka.carrier * kb.carrier}, ca * cb);
      }
    return r;
  }

  // Conjugates scalars, maps Tr(w) to Tr(w*) and takes the carrier adjoint.
  TracePoly adjoint() const {
    TracePoly r;
    for (const auto& [k, c] : terms_) {
      std::vector<Word> tr;
      for (const auto& w : k.traces) tr.push_back(w.adjoint());
      r.add_term(tr, k.carrier.adjoint(), std::conj(c));
    }
    return r;
  }

  // Tr(g): the carrier joins the trace symbols.
  TracePoly trace() const {
    TracePoly r;
    for (const auto& [k, c] : terms_) {
      std::vector<Word> tr = k.traces;
      tr.push_back(k.carrier);
      r.add_term(tr, Word{}, c);
    }
    return r;
  }

  // Applies a word map to carriers and trace symbols alike.
  template <class F>
  TracePoly map_words(F&& f) const {
    TracePoly r;
    for (const auto& [k, c] : terms_) {
      TracePoly term(c);
      for (const auto& w : k.traces) term = term * TracePoly(f(w)).trace();
      term = term * TracePoly(f(k.carrier));
      r += term;
    }
    return r;
  }

  // Applies a linear map to carriers; trace symbols ride along as scalars.
  template <class F>
  TracePoly map_carriers(F&& f) const {
    TracePoly r;
    for (const auto& [k, c] : terms_) {
      TracePoly scalars;
      scalars.add(TraceKey{k.traces, Word{}}, c);
      r += scalars * TracePoly(f(NCPoly(k.carrier)));
    }
    return r;
  }

  bool has_traces() const {
    return std::any_of(terms_.begin(), terms_.end(), [](const auto& kv) { return !kv.first.traces.empty(); });
  }

  std::string str() const {
    if (terms_.empty()) return "0";
    std::string s;
    for (const auto& [k, c] : terms_) {
      if (!s.empty()) s += " + ";
      s += "(" + format_complex(c) + ")";
      for (const auto& w : k.traces) s += "*Tr[" + w.str() + "]";
      s += "*" + k.carrier.str();
    }
    return s;
  }
};

}  // namespace liblab
