#include <gtest/gtest.h>

#include <cmath>

#include "twistderiv/central_values.hpp"
#include "twistderiv/lfunction.hpp"

using namespace twistderiv;
using namespace twistderiv::central;
using arith::i64;
using arith::u64;

namespace {

newform::NewformSpec curve_11a() {
  newform::NewformSpec s;
  s.weight = 2;
  s.level = 11;
  s.source = newform::CurveCoefficients{0, -1, 1, -10, -20};
  s.bad_ap = {{11, 1.0}};
  return s;
}

const newform::Newform& form() {
  static const newform::Newform f = newform::load_newform(curve_11a(), 2 * 50 * 1600 + 10);
  return f;
}

const CentralValueEngine& engine() {
  static const CentralValueEngine e(form(), 1600, {}, 2 * 50 * 1600);
  return e;
}

}  // namespace

// References from an mpmath evaluation of the same series at 30 digits
// (tests/oracles/lvalue_oracle.py).
TEST(CentralValues, HighPrecisionReferences) {
  const auto& e = engine();
  EXPECT_EQ(e.omega(40), -1);
  EXPECT_NEAR(e.lprime_central(40).value, 4.4657130912981632504, 1e-9);
  EXPECT_EQ(e.omega(56), 1);
  EXPECT_NEAR(e.l_central(56).value, 3.392104549085575769, 1e-9);
  EXPECT_NEAR(e.lprime_from_relation(56).value, -9.5291224730139500601, 1e-9);
  EXPECT_EQ(e.omega(104), 1);
  EXPECT_NEAR(e.l_central(104).value, 2.4891242343672597232, 1e-9);
  EXPECT_NEAR(e.lprime_from_relation(104).value, -8.5333297126759717801, 1e-9);
}

TEST(CentralValues, RootNumberSatisfiesFunctionalEquation) {
  // With the right sign the split completed function does not depend on t0.
  const auto& f = form();
  for (u64 d : arith::enumerate_family(400, 11).members) {
    const i64 D = static_cast<i64>(8 * d);
    lfunction::CompletedSetup cs{static_cast<double>(D) * std::sqrt(11.0) / (2 * std::numbers::pi), 0.5,
                                 root_number(f, D), 1.0};
    std::vector<double> a(lfunction::terms_needed({cs.A, cs.c, cs.omega, 1.4}) + 2);
    for (std::size_t n = 1; n < a.size(); ++n) a[n] = f.table[n] * arith::kronecker(D, n);
    const double v1 = lfunction::completed_value(a, cs, 0.7);
    cs.t0 = 1.4;
    const double v2 = lfunction::completed_value(a, cs, 0.7);
    EXPECT_NEAR(v1, v2, 1e-9 * std::max(1.0, std::abs(v1))) << "D=" << D;
    cs.omega = -cs.omega;
    const double w1 = lfunction::completed_value(a, cs, 0.7);
    cs.t0 = 1.0;
    const double w2 = lfunction::completed_value(a, cs, 0.7);
    EXPECT_GT(std::abs(w1 - w2), 1e-4) << "D=" << D;
  }
}

TEST(CentralValues, RootNumberPreconditions) {
  try {
    root_number(form(), 88);
    FAIL() << "expected a coprimality error";
  } catch (const precondition_error& e) {
    EXPECT_NE(std::string(e.what()).find("level 11"), std::string::npos);
  }
  EXPECT_THROW(root_number(form(), 0), precondition_error);
  EXPECT_THROW(engine().lprime_central(72), precondition_error);
  EXPECT_THROW(engine().lprime_central(-88), precondition_error);
}

TEST(CentralValues, IndicatorIsExactForPositiveSign) {
  const auto& e = engine();
  int positives = 0;
  for (u64 d : arith::enumerate_family(4000, 11).members) {
    const i64 D = static_cast<i64>(8 * d);
    if (e.omega(D) != 1) continue;
    ++positives;
    const auto v = e.lprime_central(D);
    ASSERT_EQ(v.value, 0.0);
    ASSERT_EQ(v.trunc_N, 0u);
    const auto pt = e.evaluate(d, false);
    ASSERT_EQ(pt.lprime, 0.0);
    ASSERT_FALSE(pt.lvalue.has_value());
  }
  EXPECT_GT(positives, 50);
}

TEST(CentralValues, OddSignRejectsLValueRoutes) {
  EXPECT_THROW(engine().l_central(40), precondition_error);
  EXPECT_EQ(engine().l_central(40, true).value, 0.0);
  EXPECT_THROW(engine().lprime_from_relation(40), precondition_error);
}

TEST(CentralValues, TruncationDriftWithinTailBound) {
  const auto& e = engine();
  for (i64 D : {40, 56, 136, 568, 1592}) {
    const u64 absD = static_cast<u64>(D);
    double prev_bound = INFINITY;
    for (u64 N = absD / 2; N <= 64 * absD && 2 * N <= e.capacity(); N *= 2) {
      const double b = e.tail_bound_prime(D, N);
      EXPECT_LT(b, prev_bound) << "D=" << D << " N=" << N;
      prev_bound = b;
      EXPECT_LE(std::abs(e.lprime_increment(D, N)), b) << "D=" << D << " N=" << N;
      EXPECT_LE(std::abs(e.lvalue_increment(D, N)), e.tail_bound_value(D, N)) << "D=" << D << " N=" << N;
      EXPECT_NEAR(e.lprime_series(D, 2 * N) - e.lprime_series(D, N), e.lprime_increment(D, N), 1e-9);
    }
  }
}

TEST(CentralValues, ReportedTailMeetsTolerance) {
  const auto& e = engine();
  for (u64 d : arith::enumerate_family(800, 11).members) {  // |D| <= 1600
    const auto pt = e.evaluate(d, true);
    ASSERT_LE(pt.tail_bound, e.options().tail_tol);
    ASSERT_GE(pt.trunc_N, 50 * static_cast<u64>(pt.D));
  }
}

TEST(CentralValues, AgreesWithFiniteDifferenceOracle) {
  const auto& e = engine();
  int checked = 0;
  for (u64 d : arith::enumerate_family(800, 11).members) {
    const i64 D = static_cast<i64>(8 * d);
    if (d > 200 || e.omega(D) != -1) continue;
    const auto o = finite_difference_oracle(form(), D);
    EXPECT_TRUE(o.converged);
    EXPECT_GT(o.ratio, 3.0);
    EXPECT_LT(o.ratio, 5.0);
    EXPECT_NEAR(o.lvalue, 0.0, 1e-6) << "D=" << D;
    EXPECT_NEAR(e.lprime_central(D).value, o.lprime, 1e-4) << "D=" << D;
    if (++checked == 5) break;
  }
  EXPECT_EQ(checked, 5);
}

TEST(CentralValues, RelationAgreesWithOracle) {
  for (i64 D : {56, 104}) {
    const auto o = finite_difference_oracle(form(), D);
    EXPECT_NEAR(engine().lprime_from_relation(D).value, o.lprime, 1e-4);
    EXPECT_NEAR(engine().l_central(D).value, o.lvalue, 1e-8);
  }
}

TEST(CentralValues, OraclePreconditions) {
  EXPECT_THROW(finite_difference_oracle(form(), 1608), precondition_error);
  EXPECT_THROW(finite_difference_oracle(form(), 72), precondition_error);
  OracleOptions opt;
  opt.h = 0.5;
  EXPECT_THROW(finite_difference_oracle(form(), 40, opt), precondition_error);
}

TEST(CentralValues, TableExhaustionNamesRequiredLength) {
  const auto small = newform::load_newform(curve_11a(), 3000);
  EXPECT_THROW(CentralValueEngine(small, 1600), data_error);
  const CentralValueEngine e(small, 40);
  try {
    e.lprime_central(1592);
    FAIL() << "expected table exhaustion";
  } catch (const data_error& err) {
    EXPECT_NE(std::string(err.what()).find("need length"), std::string::npos);
  }
}
