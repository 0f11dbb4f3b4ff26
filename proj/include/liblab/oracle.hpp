// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "liblab/cond_expect.hpp"
#include "liblab/matrix_sim.hpp"

namespace liblab {

// A tracial state seen through its values on words.
class TraceOracle {
 public:
  virtual ~TraceOracle() = default;

  virtual Complex operator()(const Word& w) const = 0;

  // Trace symbols and carriers evaluated by the state itself.
  virtual Complex value(const TracePoly& p) const {
    Complex r = 0.0;
    for (const auto& [k, c] : p.terms()) {
      Complex term = c;
      for (const auto& w : k.traces) term *= (*this)(w);
      r += term * (*this)(k.carrier);
    }
    return r;
  }

  virtual std::vector<Complex> values(const std::vector<Word>& ws) const {
    std::vector<Complex> v;
    v.reserve(ws.size());
    for (const auto& w : ws) v.push_back((*this)(w));
    return v;
  }
};

// Ensemble mean of tr_N∘π_N. Trace polynomials are evaluated per sample and
// then averaged, so products of trace symbols see the sample's own state.
class EmpiricalOracle : public TraceOracle {
 public:
  explicit EmpiricalOracle(const UnitaryPathEnsemble& e) : e_(e) {}

  Complex operator()(const Word& w) const override { return estimate_of(w).mean; }

  TraceEstimate estimate_of(const Word& w) const {
    Word key = cyclic_canonical(w);
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    TraceEstimate est = eval_trace_estimate(key, e_);
    std::lock_guard<std::mutex> lock(mu_);
    cache_.emplace(key, est);
    return est;
  }

  Complex value(const TracePoly& p) const override { return eval_trace_estimate(p, e_).mean; }
  TraceEstimate estimate_of(const TracePoly& p) const { return eval_trace_estimate(p, e_); }

  std::vector<Complex> values(const std::vector<Word>& ws) const override {
    std::vector<Complex> v;
    for (const auto& est : estimates(ws)) v.push_back(est.mean);
    return v;
  }

  // Batched evaluation sharing prefix products across the corpus.
  std::vector<TraceEstimate> estimates(const std::vector<Word>& ws) const {
    std::vector<std::vector<Complex>> per_sample(e_.size());
    for (std::size_t s = 0; s < e_.size(); ++s) per_sample[s] = prefix_traces(ws, e_.sample(s));
    std::vector<TraceEstimate> out;
    std::vector<Complex> col(e_.size());
    for (std::size_t k = 0; k < ws.size(); ++k) {
      for (std::size_t s = 0; s < e_.size(); ++s) col[s] = per_sample[s][k];
      out.push_back(estimate(col));
    }
    return out;
  }

  const UnitaryPathEnsemble& ensemble() const { return e_; }

  // tr_N of every word on one path; words sharing a prefix share its product.
  static std::vector<Complex> prefix_traces(const std::vector<Word>& ws, const PathView& p) {
    std::map<Word, std::vector<std::size_t>> by_prefix;  // prefix (all but last letter) -> word indices
    std::vector<Complex> out(ws.size());
    for (std::size_t k = 0; k < ws.size(); ++k) {
      if (ws[k].size() <= 1) {
        out[k] = eval_word_trace(ws[k], p);
        continue;
      }
      by_prefix[ws[k].slice(0, ws[k].size() - 1)].push_back(k);
    }
    std::map<Word, Matrix> products;
    auto product = [&](const Word& w, auto&& self) -> const Matrix& {
      auto it = products.find(w);
      if (it != products.end()) return it->second;
      Matrix m = w.size() == 1 ? detail::letter_matrix(w[0], p)
                               : Matrix(self(w.slice(0, w.size() - 1), self) * detail::letter_matrix(w[w.size() - 1], p));
      return products.emplace(w, std::move(m)).first->second;
    };
    for (const auto& [prefix, idx] : by_prefix) {
      const Matrix& a = product(prefix, product);
      for (std::size_t k : idx) out[k] = detail::trace_of_product(a, detail::letter_matrix(ws[k][ws[k].size() - 1], p));
    }
    return out;
  }

 private:
  const UnitaryPathEnsemble& e_;
  mutable std::mutex mu_;
  mutable std::map<Word, TraceEstimate> cache_;
};

// σ0 ⊗ free unitary Brownian motion: every u_i(t) is renamed to the free
// increment process ũ_i(t), which is *-free from the x letters, and the word
// is projected onto the x algebra; the remaining x words are evaluated by
// `x_moment` (by default the normalized trace of given matrices).
class Sigma0FrbmOracle : public TraceOracle {
 public:
  using XMoment = std::function<Complex(const Word&)>;

  explicit Sigma0FrbmOracle(XMoment x_moment) : x_moment_(std::move(x_moment)) {}

  explicit Sigma0FrbmOracle(XMatrices xs) {
    auto shared = std::make_shared<XMatrices>(std::move(xs));
    x_moment_ = [shared](const Word& w) {
      if (w.empty()) return Complex(1.0);
      Matrix m;
      for (const auto& l : w.letters()) {
        auto it = shared->find({l.i, l.j});
        if (it == shared->end()) throw std::out_of_range("no matrix for " + l.str());
        m = m.size() == 0 ? it->second : Matrix(m * it->second);
      }
      return m.trace() / static_cast<double>(m.rows());
    };
  }

  Complex operator()(const Word& w) const override {
    Word key = cyclic_canonical(w);
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    Complex v = value(TracePoly(NCPoly(key)));
    std::lock_guard<std::mutex> lock(mu_);
    cache_.emplace(key, v);
    return v;
  }

  Complex value(const TracePoly& p) const override {
    TracePoly renamed = p.map_words([](const Word& w) { return NCPoly(to_free(w)); });
    TracePoly proj = cond_expect_past(renamed, 0);
    Complex r = 0.0;
    for (const auto& [k, c] : proj.terms()) {
      Complex term = c;
      for (const auto& w : k.traces) term *= x_moment_(w);
      r += term * x_moment_(k.carrier);
    }
    return r;
  }

 private:
  XMoment x_moment_;
  mutable std::mutex mu_;
  mutable std::map<Word, Complex> cache_;

  static Word to_free(const Word& w) {
    Word r;
    for (Letter l : w.letters()) {
      if (l.kind == Kind::U) l.kind = Kind::UT;
      else if (l.kind != Kind::X && l.kind != Kind::UT)
        throw std::invalid_argument("sigma0_frbm: letter " + l.str() + " is outside the x,u alphabet");
      r.push(l);
    }
    return r;
  }
};

// Fixed table of values on cyclic classes of words.
class MomentTableOracle : public TraceOracle {
 public:
  MomentTableOracle() = default;

  void set(const Word& w, Complex v) { table_[cyclic_canonical(w)] = v; }

  Complex operator()(const Word& w) const override {
    Word key = cyclic_canonical(w);
    if (key.empty()) return 1.0;
    auto it = table_.find(key);
    if (it == table_.end()) throw std::out_of_range("moment table has no entry for " + key.str());
    return it->second;
  }

 private:
  std::map<Word, Complex> table_;
};

}  // namespace liblab
