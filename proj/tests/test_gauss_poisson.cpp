#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "twistderiv/gauss_poisson.hpp"

using namespace twistderiv;
using namespace twistderiv::gauss;
using arith::i64;
using arith::u64;

namespace {

// G_k(n) straight from the definition with std::polar and the library's
// Jacobi symbol (itself checked against Euler's criterion elsewhere).
std::complex<double> definition_sum(i64 k, u64 n) {
  std::complex<double> s = 0;
  for (u64 a = 0; a < n; ++a) {
    const double ang = 2 * std::numbers::pi * static_cast<double>((static_cast<i64>(a) * k) % static_cast<i64>(n)) / n;
    s += static_cast<double>(arith::jacobi(static_cast<i64>(a), n)) * std::polar(1.0, ang);
  }
  return (n % 4 == 1 ? std::complex<double>(1, 0) : std::complex<double>(0, -1)) * s;
}

}  // namespace

TEST(GaussSums, SmallValues) {
  EXPECT_NEAR(std::abs(gauss_sum_closed(0, 9).value - cplx(6, 0)), 0, 1e-12);
  EXPECT_NEAR(std::abs(gauss_sum_closed(3, 9).value - cplx(-3, 0)), 0, 1e-12);
  EXPECT_NEAR(std::abs(gauss_sum_closed(5, 25).value - cplx(-5, 0)), 0, 1e-12);
  EXPECT_NEAR(std::abs(gauss_sum_closed(1, 3).value - cplx(std::sqrt(3.0), 0)), 0, 1e-12);
  EXPECT_EQ(gauss_sum_closed(3, 3).value, cplx(0, 0));
  EXPECT_EQ(gauss_sum_closed(7, 1).value, cplx(1, 0));
}

TEST(GaussSums, ClosedFormMatchesDefinition) {
  for (u64 n = 1; n <= 400; n += 2) {
    for (i64 k = -30; k <= 30; ++k) {
      const auto c = gauss_sum_closed(k, n).value;
      const auto d = definition_sum(k, n);
      ASSERT_LT(std::abs(c - d), 1e-9 * static_cast<double>(n)) << "k=" << k << " n=" << n;
      ASSERT_LT(std::abs(c.imag()), 1e-12);
    }
  }
}

TEST(GaussSums, BruteForceRouteMatchesDefinition) {
  for (u64 n : {15ULL, 27ULL, 45ULL, 121ULL, 1001ULL}) {
    for (i64 k : {-7, 0, 1, 9, 22}) {
      EXPECT_LT(std::abs(gauss_sum_bruteforce(k, n).value - definition_sum(k, n)), 1e-9 * n);
    }
  }
}

TEST(GaussSums, PrimePowerVanishing) {
  // beta >= alpha + 2 forces zero for either parity of beta.
  for (u64 p : {3ULL, 5ULL, 7ULL}) {
    for (int beta = 2; beta <= 4; ++beta) {
      EXPECT_EQ(gauss_sum_prime_power(1, p, beta), 0.0) << p << "^" << beta;
    }
  }
}

TEST(GaussSums, SweepIsOrderedAndExact) {
  const auto rows = gauss_sweep(61, -5, 5, WorkerPool(2));
  ASSERT_EQ(rows.size(), 31u * 11u);
  EXPECT_EQ(rows.front().n, 1u);
  EXPECT_EQ(rows.front().k, -5);
  EXPECT_EQ(rows.back().n, 61u);
  for (const auto& r : rows) EXPECT_LE(r.abs_err, 1e-9 * r.n);
}

TEST(GaussSums, Preconditions) {
  EXPECT_THROW(gauss_sum_closed(1, 4), precondition_error);
  EXPECT_THROW(gauss_sum_bruteforce(1, 0), precondition_error);
  EXPECT_THROW(gauss_sweep(3'000'001, 0, 1, WorkerPool(1)), precondition_error);
}

TEST(Poisson, TrivialModulusIsPoissonSummation) {
  // n = 1: lhs is a plain sum over odd d; check it against a direct sum.
  const auto rep = poisson_verify(1, 300.0, kernels::BumpKind::smooth());
  double direct = 0;
  for (u64 d = 1; d <= 600; d += 2) direct += kernels::g_smooth(d / 300.0);
  EXPECT_DOUBLE_EQ(rep.lhs, direct);
  EXPECT_TRUE(rep.passed);
  EXPECT_LE(rep.residual, 1e-9);
}

TEST(Poisson, IdentityHoldsAcrossModuli) {
  for (auto bump : {kernels::BumpKind::paper(), kernels::BumpKind::smooth()}) {
    const PoissonVerifier v(bump);
    for (u64 n : {3ULL, 9ULL, 25ULL, 27ULL, 45ULL, 81ULL, 97ULL}) {
      for (double X : {200.0, 1000.0, 357.5}) {
        const auto r = v.verify(n, X);
        EXPECT_TRUE(r.passed) << bump.name() << " n=" << n << " X=" << X << " residual " << r.residual;
        EXPECT_LE(r.residual, 1e-6);
        EXPECT_LT(r.tail_estimate, 1e-6);
        EXPECT_EQ(arith::is_square(n), r.rhs_main != 0.0);
      }
    }
  }
}

TEST(Poisson, ReportsFailureWhenDualSumIsCutShort) {
  PoissonOptions opt;
  opt.K_trunc = 1;
  opt.K_max = 2;
  const auto r = poisson_verify(45, 200.0, kernels::BumpKind::smooth(), opt);
  EXPECT_FALSE(r.passed);
}

TEST(Poisson, Preconditions) {
  EXPECT_THROW(poisson_verify(4, 100.0, kernels::BumpKind::smooth()), precondition_error);
  EXPECT_THROW(poisson_verify(3, 0.0, kernels::BumpKind::smooth()), precondition_error);
}
