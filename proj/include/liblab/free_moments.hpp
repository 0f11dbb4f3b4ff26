// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "liblab/time.hpp"

namespace liblab {

namespace detail {

// m_1..m_n of the free unitary Brownian motion at time t from the hierarchy
//   m_k' = −(k/2) m_k − (k/2) Σ_{l=1}^{k−1} m_l m_{k−l},  m_k(0) = 1.
inline std::vector<double> integrate_moment_hierarchy(int n, double t) {
  using State = std::vector<double>;
  State m(static_cast<std::size_t>(n), 1.0);
  if (t == 0.0 || n == 0) return m;
  auto rhs = [n](const State& x, State& dx, double) {
    for (int k = 1; k <= n; ++k) {
      double conv = 0.0;
      for (int l = 1; l < k; ++l) conv += x[l - 1] * x[k - l - 1];
      dx[k - 1] = -0.5 * k * (x[k - 1] + conv);
    }
  };
  namespace odeint = boost::numeric::odeint;
  auto stepper = odeint::make_controlled(1e-14, 1e-14, odeint::runge_kutta_dopri5<State>());
  odeint::integrate_adaptive(stepper, rhs, m, 0.0, t, std::min(1e-3, t));
  return m;
}

// Rows always hold the first kRowSize moments so a cached value never
// depends on which power was requested first.
class MomentTable {
 public:
  static constexpr int kRowSize = 32;

  double get(int n, Tick t) {
    if (n == 0 || t == 0) return 1.0;
    if (n > kRowSize) return integrate_moment_hierarchy(n, to_seconds(t)).back();
    std::lock_guard<std::mutex> lock(mu_);
    auto it = table_.find(t);
    if (it == table_.end()) it = table_.emplace(t, integrate_moment_hierarchy(kRowSize, to_seconds(t))).first;
    return it->second[static_cast<std::size_t>(n - 1)];
  }

 private:
  std::mutex mu_;
  std::map<Tick, std::vector<double>> table_;
};

inline MomentTable& moment_table() {
  static MomentTable table;
  return table;
}

}  // namespace detail

// τ(ũ(t)^n) for the free unitary Brownian motion; n < 0 gives τ(ũ(t)^{*|n|}),
// which is the same real number.
inline double ubm_moment(int n, Tick t) {
  if (n < 0) n = -n;
  return detail::moment_table().get(n, t);
}

inline double ubm_moment(int n, double t) {
  if (n < 0) throw std::invalid_argument("ubm_moment: power must be non-negative");
  return ubm_moment(n, to_ticks(t));
}

// Cauchy transform of the centered semicircle law of variance t. The square
// root is the principal one, negated when it points away from z:
//   quadrant of z   Re z>0,Im z>0  Re z<0,Im z>0  Re z<0,Im z<0  Re z>0,Im z<0
//   sqrt(z²−4t) ≈   +z             +z             +z             +z
// i.e. the branch with Re(s·conj(z)) ≥ 0, which is the one with s ~ z at ∞.
inline std::complex<double> semicircle_cauchy(double t, std::complex<double> z) {
  if (!(t > 0.0)) throw std::invalid_argument("semicircle_cauchy: t must be positive");
  std::complex<double> s = std::sqrt(z * z - 4.0 * t);
  if (s.real() * z.real() + s.imag() * z.imag() < 0.0) s = -s;
  return (z - s) / (2.0 * t);
}

inline double semicircle_density(double t, double x) {
  if (!(t > 0.0)) throw std::invalid_argument("semicircle_density: t must be positive");
  double r = 4.0 * t - x * x;
  return r <= 0.0 ? 0.0 : std::sqrt(r) / (2.0 * std::numbers::pi * t);
}

// |G(t, z + t/z) − 1/z|: the characteristic through z at time 0.
inline double burgers_residual(double t, std::complex<double> z) {
  if (!(t > 0.0)) throw std::invalid_argument("burgers_residual: t must be positive");
  if (z.imag() <= 0.0) throw std::invalid_argument("burgers_residual: Im z must be positive");
  if (std::abs(z) <= std::sqrt(t)) throw std::invalid_argument("burgers_residual: need |z| > sqrt(t)");
  return std::abs(semicircle_cauchy(t, z + t / z) - 1.0 / z);
}

inline double catalan(int k) {
  double c = 1.0;
  for (int m = 0; m < k; ++m) c = c * 2.0 * (2.0 * m + 1.0) / (m + 2.0);
  return c;
}

inline double semicircle_moment(int k, double t) {
  if (k < 0) throw std::invalid_argument("semicircle_moment: power must be non-negative");
  if (k % 2) return 0.0;
  return catalan(k / 2) * std::pow(t, k / 2);
}

}  // namespace liblab
