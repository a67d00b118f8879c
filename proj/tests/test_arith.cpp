#include <gtest/gtest.h>

#include <vector>

#include "twistderiv/arith.hpp"

using namespace twistderiv;
using arith::i64;
using arith::u64;

namespace {

bool trial_prime(u64 n) {
  if (n < 2) return false;
  for (u64 d = 2; d * d <= n; ++d) {
    if (n % d == 0) return false;
  }
  return true;
}

bool trial_squarefree(u64 n) {
  for (u64 d = 2; d * d <= n; ++d) {
    if (n % (d * d) == 0) return false;
  }
  return true;
}

// Legendre symbol by Euler's criterion.
int euler_legendre(i64 a, u64 p) {
  const i64 r = ((a % static_cast<i64>(p)) + static_cast<i64>(p)) % static_cast<i64>(p);
  if (r == 0) return 0;
  u64 acc = 1, base = static_cast<u64>(r), e = (p - 1) / 2;
  while (e) {
    if (e & 1) acc = acc * base % p;
    base = base * base % p;
    e >>= 1;
  }
  return acc == 1 ? 1 : -1;
}

// Kronecker symbol from its definition: multiplicative in n, Euler's
// criterion at odd primes, the mod-8 rule at 2.
int definition_kronecker(i64 D, u64 n) {
  int r = 1;
  u64 m = n;
  while (m % 2 == 0) {
    m /= 2;
    if (D % 2 == 0) return 0;
    const i64 r8 = ((D % 8) + 8) % 8;
    r *= (r8 == 1 || r8 == 7) ? 1 : -1;
  }
  for (u64 p = 3; m > 1; p += 2) {
    while (m % p == 0) {
      m /= p;
      r *= euler_legendre(D, p);
    }
  }
  return r;
}

}  // namespace

TEST(Arith, PowmodAndMulmodMatchSmallArithmetic) {
  EXPECT_EQ(arith::powmod(3, 200, 1000003), [] {
    u64 r = 1;
    for (int i = 0; i < 200; ++i) r = r * 3 % 1000003;
    return r;
  }());
  const u64 big = (u64{1} << 62) + 135;
  EXPECT_EQ(arith::mulmod(big - 1, big - 1, big), 1u);
}

TEST(Arith, IsPrimeAgreesWithTrialDivision) {
  for (u64 n = 0; n < 20000; ++n) ASSERT_EQ(arith::is_prime(n), trial_prime(n)) << n;
  EXPECT_TRUE(arith::is_prime(1000003));
  EXPECT_TRUE(arith::is_prime((u64{1} << 61) - 1));
  EXPECT_FALSE(arith::is_prime(561));
  EXPECT_FALSE(arith::is_prime(3215031751ULL));  // strong pseudoprime to bases 2, 3, 5, 7
}

TEST(Arith, FactorizationReassemblesIntoPrimes) {
  std::vector<u64> cases;
  for (u64 n = 1; n < 5000; ++n) cases.push_back(n);
  for (u64 n : {u64{1000003} * 1000033, u64{4294967291ULL} * 3, u64{600851475143ULL}, (u64{1} << 61) - 1}) cases.push_back(n);
  for (u64 n : cases) {
    const auto f = arith::factorize(n);
    EXPECT_EQ(f.product(), n);
    for (const auto& pe : f.factors) EXPECT_TRUE(trial_prime(pe.prime) || pe.prime > (u64{1} << 32)) << n;
  }
  const auto f = arith::factorize(1000003);
  ASSERT_EQ(f.factors.size(), 1u);
  EXPECT_EQ(f.factors[0].exponent, 1);
}

TEST(Arith, MultiplicativeStatsMatchDivisorEnumeration) {
  for (u64 n = 1; n <= 2000; ++n) {
    u64 tau = 0, phi = 0;
    for (u64 d = 1; d <= n; ++d) {
      if (n % d == 0) ++tau;
      if (std::gcd(d, n) == 1) ++phi;
    }
    const auto s = arith::multiplicative_stats(n);
    ASSERT_EQ(s.tau, tau) << n;
    ASSERT_EQ(s.phi, phi) << n;
    ASSERT_EQ(s.mu == 0, !trial_squarefree(n)) << n;
  }
}

TEST(Arith, KroneckerMatchesDefinition) {
  for (i64 D = -300; D <= 300; ++D) {
    for (u64 n = 1; n <= 300; ++n) ASSERT_EQ(arith::kronecker(D, n), definition_kronecker(D, n)) << D << " " << n;
  }
  EXPECT_EQ(arith::kronecker(8, 3), -1);
  EXPECT_EQ(arith::kronecker(40, 7), -1);
}

TEST(Arith, JacobiIsKroneckerAtOddModuli) {
  for (i64 a = -100; a <= 100; ++a) {
    for (u64 n = 1; n < 200; n += 2) ASSERT_EQ(arith::jacobi(a, n), definition_kronecker(a, n));
  }
}

TEST(Arith, FundamentalDiscriminantsMatchDefinition) {
  EXPECT_THROW(arith::is_fundamental_discriminant(0), precondition_error);
  for (i64 D = -2000; D <= 2000; ++D) {
    if (D == 0) continue;
    bool expect = false;
    const i64 r4 = ((D % 4) + 4) % 4;
    const u64 a = static_cast<u64>(D < 0 ? -D : D);
    if (r4 == 1) expect = trial_squarefree(a);
    if (r4 == 0) {
      const i64 m = D / 4;
      const i64 m4 = ((m % 4) + 4) % 4;
      expect = (m4 == 2 || m4 == 3) && trial_squarefree(static_cast<u64>(m < 0 ? -m : m));
    }
    ASSERT_EQ(arith::is_fundamental_discriminant(D), expect) << D;
  }
}

TEST(Arith, SquareDetection) {
  for (u64 r = 0; r < 3000; ++r) {
    EXPECT_TRUE(arith::is_square(r * r));
    if (r > 1) { EXPECT_FALSE(arith::is_square(r * r + 1)); }
  }
}

TEST(Arith, FamilyEnumerationMatchesFilter) {
  for (double X : {16.0, 80.0, 1000.0, 12345.0}) {
    for (u64 q : {1ULL, 11ULL, 15ULL, 105ULL}) {
      std::vector<u64> expect;
      for (u64 d = 1; d <= static_cast<u64>(X); ++d) {
        const double D = 8.0 * static_cast<double>(d);
        if (D >= X / 2 && D <= 2 * X && d % 2 && trial_squarefree(d) && std::gcd(d, q) == 1) expect.push_back(d);
      }
      EXPECT_EQ(arith::enumerate_family(X, q).members, expect) << X << " " << q;
    }
  }
  EXPECT_EQ(arith::enumerate_family(80, 11).members, (std::vector<u64>{5, 7, 13, 15, 17, 19}));
  EXPECT_EQ(arith::enumerate_family(16, 1).members, (std::vector<u64>{1, 3}));
  EXPECT_TRUE(arith::enumerate_family(20, 15).members.empty());
  EXPECT_THROW(arith::enumerate_family(10, 11), precondition_error);
  EXPECT_THROW(arith::enumerate_family(100, 22), precondition_error);
}

TEST(Arith, PrimeSieveSmallestFactors) {
  arith::PrimeSieve s(10000);
  for (std::uint32_t n = 2; n <= 10000; ++n) {
    std::uint32_t p = 2;
    while (n % p) ++p;
    ASSERT_EQ(s.spf(n), p);
  }
  EXPECT_EQ(s.primes().size(), 1229u);
}
