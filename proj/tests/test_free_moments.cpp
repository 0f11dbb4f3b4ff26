// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "liblab/free_moments.hpp"
#include "support/generators.hpp"

using namespace liblab;
using C = std::complex<double>;

namespace {

// Independent oracle: the closed form for the moments of the free unitary
// Brownian motion,
//   m_n(t) = e^{−nt/2} Σ_{k=0}^{n−1} (−t)^k n^{k−1} binom(n, k+1) / k!.
double moment_closed_form(int n, double t) {
  if (n == 0) return 1.0;
  double sum = 0.0, fact = 1.0;
  for (int k = 0; k < n; ++k) {
    if (k) fact *= k;
    double binom = 1.0;
    for (int m = 1; m <= k + 1; ++m) binom = binom * (n - k - 1 + m) / m;
    sum += std::pow(-t, k) * std::pow(n, k - 1) * binom / fact;
  }
  return std::exp(-n * t / 2.0) * sum;
}

double integrate(const std::function<double(double)>& f, double a, double b) {
  boost::math::quadrature::tanh_sinh<double> q;
  return q.integrate(f, a, b);
}

}  // namespace

TEST(UbmMoment, FirstMomentDecaysAsHalfExponential) {
  EXPECT_NEAR(ubm_moment(1, 1.0), std::exp(-0.5), 1e-10);
  EXPECT_NEAR(ubm_moment(1, 1.0), 0.606531, 1e-6);
  EXPECT_NEAR(ubm_moment(1, 0.2), std::exp(-0.1), 1e-10);
}

TEST(UbmMoment, SecondMomentVanishesAtTimeOne) { EXPECT_NEAR(ubm_moment(2, 1.0), 0.0, 1e-8); }

TEST(UbmMoment, ZerothMomentAndTimeZero) {
  EXPECT_EQ(ubm_moment(0, 0.7), 1.0);
  EXPECT_EQ(ubm_moment(5, 0.0), 1.0);
  EXPECT_THROW(ubm_moment(-1, 0.5), std::invalid_argument);
}

TEST(UbmMoment, OdeHierarchyMatchesTheClosedFormOracle) {
  for (int n = 1; n <= 10; ++n)
    for (double t : {0.05, 0.25, 0.5, 1.0, 2.0, 4.0})
      EXPECT_NEAR(ubm_moment(n, t), moment_closed_form(n, t), 1e-9) << "n=" << n << " t=" << t;
}

TEST(UbmMoment, DirectIntegrationAgreesWithTheCachedTable) {
  auto row = detail::integrate_moment_hierarchy(6, 0.75);
  for (int n = 1; n <= 6; ++n) EXPECT_NEAR(row[static_cast<std::size_t>(n - 1)], ubm_moment(n, 0.75), 1e-12);
}

TEST(UbmMoment, PropertyBoundedByOneForRandomArguments) {
  testgen::Gen g(201);
  for (int k = 0; k < 200; ++k) {
    const int n = g.uniform_int(1, 20);
    const double t = std::round(g.uniform(0.0, 5.0) * 1000) / 1000;
    EXPECT_LE(std::abs(ubm_moment(n, t)), 1.0 + 1e-12) << "n=" << n << " t=" << t;
  }
}

TEST(SemicircleCauchy, ValuesOnTheAxes) {
  const C g = semicircle_cauchy(1.0, C(0.0, 3.0));
  EXPECT_NEAR(g.real(), 0.0, 1e-12);
  EXPECT_NEAR(g.imag(), -0.302776, 1e-6);
  EXPECT_NEAR(g.imag(), (3.0 - std::sqrt(13.0)) / 2.0, 1e-12);
  EXPECT_NEAR(semicircle_cauchy(1.0, C(3.0, 0.0)).real(), (3.0 - std::sqrt(5.0)) / 2.0, 1e-12);
}

TEST(SemicircleCauchy, MapsUpperHalfPlaneToLowerAndDecaysLikeOneOverZ) {
  testgen::Gen g(202);
  for (int k = 0; k < 200; ++k) {
    const C z(g.uniform(-5, 5), g.uniform(0.01, 5));
    EXPECT_LT(semicircle_cauchy(g.uniform(0.1, 3), z).imag(), 0.0) << z;
  }
  const C z(0.0, 1e3);
  EXPECT_LT(std::abs(z * semicircle_cauchy(1.0, z) - 1.0), 1e-3);
}

TEST(SemicircleCauchy, AgreesWithQuadratureOfTheDensity) {
  for (double t : {0.5, 1.0, 2.0})
    for (C z : {C(0.3, 0.5), C(-2.0, 1.0), C(3.0, 0.2)}) {
      const double r = 2.0 * std::sqrt(t);
      const double re = integrate([&](double x) { return ((1.0 / (z - x)) * semicircle_density(t, x)).real(); }, -r, r);
      const double im = integrate([&](double x) { return ((1.0 / (z - x)) * semicircle_density(t, x)).imag(); }, -r, r);
      EXPECT_NEAR(std::abs(semicircle_cauchy(t, z) - C(re, im)), 0.0, 1e-9) << "t=" << t << " z=" << z;
    }
}

TEST(SemicircleDensity, PointValuesAndNormalization) {
  EXPECT_NEAR(semicircle_density(1.0, 0.0), 1.0 / std::numbers::pi, 1e-12);
  EXPECT_EQ(semicircle_density(1.0, 2.5), 0.0);
  for (double t : {0.25, 1.0, 3.0}) {
    const double r = 2.0 * std::sqrt(t);
    EXPECT_NEAR(integrate([&](double x) { return semicircle_density(t, x); }, -r, r), 1.0, 1e-8) << t;
  }
}

TEST(SemicircleDensity, StieltjesInversionOfTheTransform) {
  const double eps = 1e-7;
  for (double x : {-1.5, 0.0, 0.7, 1.9})
    EXPECT_NEAR(-semicircle_cauchy(1.0, C(x, eps)).imag() / std::numbers::pi, semicircle_density(1.0, x), 1e-6) << x;
}

TEST(BurgersResidual, VanishesOnCharacteristics) {
  EXPECT_LE(burgers_residual(1.0, C(0.0, 2.0)), 1e-12);
  EXPECT_LE(burgers_residual(0.25, C(1.0, 1.0)), 1e-12);
  for (double t : {0.1, 0.5, 1.0, 2.0, 3.0})
    for (C z : {C(0.0, 3.0), C(1.0, 2.5), C(-2.0, 2.5), C(3.0, 2.2), C(-0.5, 4.0)})
      EXPECT_LE(burgers_residual(t, z), 1e-12) << "t=" << t << " z=" << z;
}

TEST(BurgersResidual, FiniteDifferencePdeCheck) {
  // ∂_t G + G ∂_z G = 0 with central differences, h = 1e−4.
  const double h = 1e-4, t = 1.0;
  const C z(0.0, 3.0);
  const C dt = (semicircle_cauchy(t + h, z) - semicircle_cauchy(t - h, z)) / (2 * h);
  const C dz = (semicircle_cauchy(t, z + h) - semicircle_cauchy(t, z - h)) / (2 * h);
  EXPECT_LE(std::abs(dt + semicircle_cauchy(t, z) * dz), 1e-6);
}

TEST(BurgersResidual, RejectsPointsOffTheDomain) {
  EXPECT_THROW(burgers_residual(1.0, C(1.0, -1.0)), std::invalid_argument);
  EXPECT_THROW(burgers_residual(1.0, C(0.0, 0.5)), std::invalid_argument);
  EXPECT_THROW(burgers_residual(0.0, C(0.0, 2.0)), std::invalid_argument);
}

TEST(SemicircleMoment, MatchesQuadratureOfTheDensity) {
  for (double t : {0.5, 1.0, 2.0}) {
    const double r = 2.0 * std::sqrt(t);
    for (int k = 0; k <= 8; ++k) {
      const double q = integrate([&](double x) { return std::pow(x, k) * semicircle_density(t, x); }, -r, r);
      EXPECT_NEAR(semicircle_moment(k, t), q, 1e-9) << "k=" << k << " t=" << t;
    }
  }
  EXPECT_EQ(semicircle_moment(2, 0.7), 0.7);
  EXPECT_EQ(semicircle_moment(4, 1.0), 2.0);
  EXPECT_EQ(semicircle_moment(3, 1.3), 0.0);
}

TEST(SemicircleMoment, SeriesReproducesTheTransformFarFromTheSupport) {
  const C z(0.0, 5.0);
  C series = 0.0;
  for (int k = 0; k <= 40; ++k) series += semicircle_moment(k, 1.0) / std::pow(z, k + 1);
  EXPECT_LE(std::abs(series - semicircle_cauchy(1.0, z)), 1e-6);
}
