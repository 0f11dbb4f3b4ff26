// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "liblab/derivation.hpp"
#include "liblab/parse.hpp"
#include "liblab/trace_poly.hpp"
#include "support/generators.hpp"

using namespace liblab;
using namespace liblab::letters;
using liblab::testgen::Gen;

namespace {

const std::vector<double> kTimes = {0.0, 0.3, 0.5, 0.7, 1.0};

NCPoly P(const Word& w, Complex c = 1.0) { return NCPoly(w, c); }

// Independent Leibniz reference: δ(pq) = δ(p)·(1⊗q) + (p⊗1)·δ(q).
TensorNCPoly leibniz_rhs(Tick t, int i, const NCPoly& p, const NCPoly& q) {
  return sandwich(NCPoly(1.0), delta_u(t, i, p), q) + sandwich(p, delta_u(t, i, q), NCPoly(1.0));
}

}  // namespace

TEST(Ticks, DecimalTimesAreExact) {
  EXPECT_EQ(to_ticks(0.3), 300000);
  EXPECT_EQ(to_ticks(0.1) + to_ticks(0.2), to_ticks(0.3));
  EXPECT_EQ(format_time(to_ticks(0.25)), "0.25");
}

TEST(Adjoint, FlipsStarOfUnitaryLetter) {
  EXPECT_EQ(NCPoly(u(1, 0.5)).adjoint(), NCPoly(u_star(1, 0.5)));
}

TEST(Adjoint, IsAntiMultiplicativeAndConjugatesScalars) {
  NCPoly p = P(Word{x(1), u(1, 1.0)}, kI);
  EXPECT_EQ(p.adjoint(), P(Word{u_star(1, 1.0), x(1)}, -kI));
}

TEST(Adjoint, IsAnInvolutionOnRandomPolynomials) {
  Gen g(101);
  for (int k = 0; k < 100; ++k) {
    NCPoly p = g.xu_poly(4, 6, 3, kTimes);
    EXPECT_EQ(p.adjoint().adjoint(), p) << "case " << k << ": " << p.str();
  }
}

TEST(Multiplication, AdjacentUnitaryPairCancels) {
  EXPECT_EQ(NCPoly(u(1, 0.5)) * NCPoly(u_star(1, 0.5)), NCPoly(1.0));
  // Different times do not reduce.
  EXPECT_EQ((NCPoly(u(1, 0.5)) * NCPoly(u_star(1, 0.7))).degree(), 2u);
}

TEST(Multiplication, UnitAndAssociativity) {
  Gen g(102);
  for (int k = 0; k < 100; ++k) {
    NCPoly p = g.xu_poly(3, 4, 2, kTimes), q = g.xu_poly(3, 4, 2, kTimes), r = g.xu_poly(3, 4, 2, kTimes);
    EXPECT_EQ(NCPoly(1.0) * p, p);
    EXPECT_EQ((p * q) * r, p * (q * r)) << "case " << k;
  }
}

TEST(Multiplication, ReducedWordsStayReducedAfterCancellationCascade) {
  Word a{u(1, 0.3), u(2, 0.5), u_star(1, 0.7)};
  EXPECT_EQ(a * a.adjoint(), Word{});
  // x letters are not unitary, so the cascade stops at them.
  Word b{u(1, 0.3), x(1), u(2, 0.5)};
  EXPECT_EQ(b * b.adjoint(), (Word{u(1, 0.3), x(1), x(1), u_star(1, 0.3)}));
}

TEST(Theta, SwapsTensorFactors) {
  EXPECT_EQ(theta(TensorNCPoly(Word(x(1)), Word(u(1, 1.0)))), P(Word{u(1, 1.0), x(1)}));
  EXPECT_EQ(theta(TensorNCPoly(Word{}, Word{})), NCPoly(1.0));
  TensorNCPoly s = TensorNCPoly(Word(x(1)), Word(x(2))) + TensorNCPoly(Word(u(1, 0.5)), Word(x(1)), 2.0);
  EXPECT_EQ(theta(s), P(Word{x(2), x(1)}) + P(Word{x(1), u(1, 0.5)}, 2.0));
}

TEST(Sharp, InsertsBetweenTensorFactors) {
  EXPECT_EQ(sharp(TensorNCPoly(Word(x(1)), Word(u(1, 1.0))), NCPoly(u(2, 0.5))),
            P(Word{x(1), u(2, 0.5), u(1, 1.0)}));
  NCPoly xi = NCPoly(x(2)) + NCPoly(u(1, 0.3), kI);
  EXPECT_EQ(sharp(TensorNCPoly(Word{}, Word{}), xi), xi);
  EXPECT_TRUE(sharp(TensorNCPoly(Word(x(1)), Word(x(2))), NCPoly{}).is_zero());
}

TEST(DeltaU, VanishesOnXLetters) { EXPECT_TRUE(delta_u(to_ticks(0.5), 1, NCPoly(x(1))).is_zero()); }

TEST(DeltaU, GeneratorRuleForUnitaryLetter) {
  const Tick t = to_ticks(0.5);
  TensorNCPoly d = delta_u(t, 1, NCPoly(u(1, 0.8)));
  EXPECT_EQ(d, kI * TensorNCPoly(Word{u(1, 0.8), u_star(1, 0.5)}, Word(u(1, 0.5))));
}

TEST(DeltaU, KroneckerInTheComponentIndex) {
  EXPECT_TRUE(delta_u(to_ticks(0.5), 1, NCPoly(u(2, 0.8))).is_zero());
}

TEST(DeltaU, IndicatorIsClosedAtTheLetterTimeAndOpenForTheRightLimit) {
  const Tick t = to_ticks(0.5);
  EXPECT_FALSE(delta_u(t, 1, NCPoly(u(1, 0.5))).is_zero());
  EXPECT_TRUE(delta_u(t, 1, NCPoly(u(1, 0.5)), Side::kRightLimit).is_zero());
}

TEST(DeltaU, LeibnizRuleOnRandomProducts) {
  Gen g(103);
  for (int k = 0; k < 200; ++k) {
    NCPoly p = g.xu_poly(2, 4, 2, kTimes), q = g.xu_poly(2, 4, 2, kTimes);
    const Tick t = to_ticks(g.pick(kTimes));
    const int i = g.uniform_int(1, 2);
    EXPECT_EQ(delta_u(t, i, p * q), leibniz_rhs(t, i, p, q)) << "case " << k;
  }
}

TEST(DU, ClosedFormOnSingleLetters) {
  const Tick t = to_ticks(0.5);
  EXPECT_EQ(D_u(t, 1, NCPoly(u(1, 0.8))), P(Word{u(1, 0.5), u(1, 0.8), u_star(1, 0.5)}, kI));
  EXPECT_EQ(D_u(t, 1, NCPoly(u_star(1, 0.8))), P(Word{u(1, 0.5), u_star(1, 0.8), u_star(1, 0.5)}, -kI));
}

TEST(DU, VanishesWhenEveryLetterIsInThePast) {
  NCPoly p = P(Word{u(1, 0.2), x(1), u_star(1, 0.4)}) + P(Word{u(2, 0.9)});
  EXPECT_TRUE(D_u(to_ticks(0.5), 1, p).is_zero());
}

TEST(DU, ThetaOfDeltaAgreesWithTheCyclicFormula) {
  Gen g(104);
  for (int k = 0; k < 200; ++k) {
    NCPoly p = g.xu_poly(3, 6, 3, kTimes);
    const Tick t = to_ticks(g.pick(kTimes));
    const int i = g.uniform_int(1, 3);
    for (Side side : {Side::kAt, Side::kRightLimit})
      EXPECT_EQ(D_u(t, i, p, side), D_u_cyclic(t, i, p, side)) << "case " << k << ": " << p.str();
  }
}

TEST(TimeShift, PastLettersAreFixed) {
  EXPECT_EQ(pi_t(to_ticks(0.5), NCPoly(u(1, 0.3))), NCPoly(u(1, 0.3)));
  EXPECT_EQ(pi_t(to_ticks(0.5), NCPoly(u(1, 0.5))), NCPoly(u(1, 0.5)));
}

TEST(TimeShift, FutureLetterSplitsIntoFreeIncrementTimesPresent) {
  EXPECT_EQ(pi_t(to_ticks(1.0), NCPoly(u(1, 2.0))), P(Word{ut(1, 1.0), u(1, 1.0)}));
  EXPECT_EQ(pi_t(to_ticks(1.0), NCPoly(u_star(1, 2.0))), P(Word{u_star(1, 1.0), ut_star(1, 1.0)}));
}

TEST(TimeShift, LiberationLetterIsConjugatedByFreeIncrement) {
  EXPECT_EQ(pi_t(to_ticks(0.4), NCPoly(xl(1, 2, 1.0)), 2),
            P(Word{v(1, 0.6), xl(1, 2, 0.4), v_star(1, 0.6)}));
  // The family beyond n never moves, only its time label is clipped.
  EXPECT_EQ(pi_t(to_ticks(0.4), NCPoly(xl(3, 1, 1.0)), 2), NCPoly(xl(3, 1, 0.4)));
}

TEST(TimeShift, IsAStarHomomorphism) {
  Gen g(105);
  for (int k = 0; k < 200; ++k) {
    NCPoly p = g.xu_poly(2, 4, 2, kTimes), q = g.xu_poly(2, 4, 2, kTimes);
    const Tick t = to_ticks(g.pick(kTimes));
    EXPECT_EQ(pi_t(t, p * q), pi_t(t, p) * pi_t(t, q)) << "case " << k;
    EXPECT_EQ(pi_t(t, p.adjoint()), pi_t(t, p).adjoint()) << "case " << k;
  }
}

TEST(DeltaLib, KroneckerAndIndicator) {
  EXPECT_TRUE(delta_lib(to_ticks(0.2), 1, NCPoly(xl(2, 1, 0.5))).is_zero());
  EXPECT_TRUE(delta_lib(to_ticks(0.7), 1, NCPoly(xl(1, 1, 0.5))).is_zero());
}

TEST(DeltaLib, GeneratorRuleIsACommutatorWithTheFreeIncrement) {
  const Tick t = to_ticks(0.2);
  const Letter l = xl(1, 1, 0.5), vv = v(1, 0.3);
  TensorNCPoly expected =
      TensorNCPoly(Word{l, vv}, Word(vv.adjoint())) - TensorNCPoly(Word(vv), Word{vv.adjoint(), l});
  EXPECT_EQ(delta_lib(t, 1, NCPoly(l)), expected);
}

// θ folds both summands of a lone letter onto v*xv, so 𝔇 of a single
// liberation letter vanishes; it is non-zero once the word has other letters.
TEST(DLib, VanishesOnALoneLetterAndNotOnProducts) {
  const Tick t = to_ticks(0.2);
  EXPECT_TRUE(D_lib(t, 1, NCPoly(xl(1, 1, 0.5))).is_zero());
  const Letter a = xl(1, 1, 0.5), b = xl(2, 1, 0.5), vv = v(1, 0.3);
  // θ(a v ⊗ v* b) − θ(v ⊗ v* a b) = v* b a v − v* a b v
  NCPoly expected = P(Word{vv.adjoint(), b, a, vv}) - P(Word{vv.adjoint(), a, b, vv});
  EXPECT_EQ(D_lib(t, 1, P(Word{a, b})), expected);
}

TEST(DLib, RejectsLettersOutsideTheLiberationAlphabet) {
  EXPECT_THROW(D_lib(0, 1, NCPoly(u(1, 0.5))), std::invalid_argument);
  EXPECT_THROW(D_u(0, 1, NCPoly(xl(1, 1, 0.5))), std::invalid_argument);
}

TEST(Lift, LiberationLetterBecomesConjugatedInitialMatrix) {
  EXPECT_EQ(lift_u(NCPoly(xl(1, 2, 0.5)), 2), P(Word{u(1, 0.5), x(1, 2), u_star(1, 0.5)}));
  EXPECT_EQ(lift_u(NCPoly(xl(3, 2, 0.5)), 2), NCPoly(x(3, 2)));
}

TEST(Lift, IsAHomomorphism) {
  Gen g(106);
  for (int k = 0; k < 200; ++k) {
    NCPoly a = g.lib_poly(2, 3, 2, kTimes), b = g.lib_poly(2, 3, 2, kTimes);
    EXPECT_EQ(lift_u(a * b, 2), lift_u(a, 2) * lift_u(b, 2)) << "case " << k;
  }
}

// Hand-derived single-word instance of the intertwining relation
// Π^t 𝔇_u(lift a) = −i · lift(Π^t 𝔇_lib a).
TEST(Lift, IntertwinesTheTwoDerivationsOnATwoLetterWord) {
  const int n = 1;
  const Tick t = to_ticks(0.2);
  NCPoly a = P(Word{xl(1, 1, 0.5), xl(2, 1, 0.0)});
  NCPoly lhs = pi_t(t, D_u(t, 1, lift_u(a, n)), n);
  NCPoly rhs = (-kI) * lift_u(pi_t(t, D_lib(t, 1, a), n), n);
  EXPECT_FALSE(lhs.is_zero());
  EXPECT_EQ(lhs, rhs);
}

TEST(Coordinates, YAndItsInverse) {
  EXPECT_EQ(y(1, 0.0), NCPoly(u(1, 0.0)));
  EXPECT_TRUE(approx_equal(y(1, 2.0) * yinv(1, 2.0), NCPoly(1.0)));
  EXPECT_TRUE(approx_equal(y(1, 1.5).adjoint(), NCPoly(u_star(1, 1.5), std::exp(0.75))));
}

TEST(TraceSymbols, InvariantUnderRotationAndCancellingEnds) {
  Word w{x(1), u(1, 0.5), x(2)};
  Word rotated{u(1, 0.5), x(2), x(1)};
  EXPECT_EQ(cyclic_canonical(w), cyclic_canonical(rotated));
  Word padded = Word{u(2, 0.3)} * w * Word{u_star(2, 0.3)};
  EXPECT_EQ(cyclic_canonical(padded), cyclic_canonical(w));
  EXPECT_EQ(TracePoly::trace_of(w), TracePoly::trace_of(rotated));
}

TEST(TraceSymbols, AdjointConjugatesScalarAndReversesWords) {
  TracePoly p;
  p.add_term({Word{x(1), u(1, 0.5)}}, Word(x(2)), Complex(1.0, 2.0));
  TracePoly q;
  q.add_term({Word{u_star(1, 0.5), x(1)}}, Word(x(2)), Complex(1.0, -2.0));
  EXPECT_EQ(p.adjoint(), q);
}

TEST(Parser, ParsesTheCoefficientLedGrammar) {
  NCPoly p = parse_poly("1+0i*x(1)*u(1,0.5) + 0.5-2i*u*(2,0.3)");
  NCPoly q = P(Word{x(1), u(1, 0.5)}) + P(Word(u_star(2, 0.3)), Complex(0.5, -2.0));
  EXPECT_EQ(p, q);
  EXPECT_EQ(parse_poly("2*xl(1,2,0.5)*v*(1,0.25)"), P(Word{xl(1, 2, 0.5), v_star(1, 0.25)}, 2.0));
  EXPECT_TRUE(approx_equal(parse_poly("1*y(1,2)"), y(1, 2.0)));
  EXPECT_EQ(parse_poly("(0+3i)"), NCPoly(Complex(0.0, 3.0)));
}

TEST(Parser, ReportsOffsetsOnMalformedInput) {
  EXPECT_THROW(parse_poly(""), ParseError);
  EXPECT_THROW(parse_poly("x(1)"), ParseError);
  EXPECT_THROW(parse_poly("1*q(1)"), ParseError);
  EXPECT_THROW(parse_poly("1*u(1,-0.5)"), ParseError);
  EXPECT_THROW(parse_poly("1*x(1.5)"), ParseError);
  try {
    parse_poly("1*x(1) 2");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}

TEST(Parser, RoundTripsRandomPolynomialsThroughTheirPrintedForm) {
  Gen g(107);
  auto print = [](const NCPoly& p) {
    std::string s;
    for (const auto& [w, c] : p.terms()) {
      if (!s.empty()) s += " + ";
      s += "(" + std::to_string(c.real()) + (c.imag() < 0 ? "" : "+") + std::to_string(c.imag()) + "i)";
      for (const auto& l : w.letters()) {
        if (l.kind == Kind::X) s += "*x(" + std::to_string(l.j) + ")";
        else s += std::string("*u") + (l.star ? "*" : "") + "(" + std::to_string(l.i) + "," + format_time(l.t) + ")";
      }
    }
    return s;
  };
  for (int k = 0; k < 100; ++k) {
    NCPoly p = g.xu_poly(3, 4, 2, {0.3, 0.5, 1.0});
    if (p.is_zero()) continue;
    EXPECT_EQ(parse_poly(print(p)), p) << print(p);
  }
}
