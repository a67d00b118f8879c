#ifndef TWISTDERIV_ARITH_HPP
#define TWISTDERIV_ARITH_HPP

// Exact 64-bit integer arithmetic: factorization, the multiplicative
// functions mu/tau/phi, Jacobi and Kronecker symbols, fundamental
// discriminants, and the odd squarefree family d with X/2 <= 8d <= 2X.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "twistderiv/errors.hpp"

namespace twistderiv::arith {

using u64 = std::uint64_t;
using i64 = std::int64_t;
using u128 = unsigned __int128;

inline u64 mulmod(u64 a, u64 b, u64 m) {
  return static_cast<u64>(static_cast<u128>(a) * b % m);
}

inline u64 powmod(u64 base, u64 exp, u64 m) {
  u64 result = 1 % m;
  base %= m;
  while (exp) {
    if (exp & 1) result = mulmod(result, base, m);
    base = mulmod(base, base, m);
    exp >>= 1;
  }
  return result;
}

// Deterministic Miller-Rabin; the first twelve prime bases are exact for
// every n < 3.3e24, which covers all of u64.
inline bool is_prime(u64 n) {
  if (n < 2) return false;
  static constexpr u64 small[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  for (u64 p : small) {
    if (n % p == 0) return n == p;
  }
  u64 d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (u64 a : small) {
    u64 x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

struct PrimePower {
  u64 prime;
  int exponent;
  friend bool operator==(const PrimePower&, const PrimePower&) = default;
};

struct Factorization {
  u64 n = 1;
  std::vector<PrimePower> factors;  // primes strictly increasing

  u64 product() const {
    u64 r = 1;
    for (const auto& f : factors) {
      for (int e = 0; e < f.exponent; ++e) r *= f.prime;
    }
    return r;
  }
};

namespace detail {

// Brent's variant of Pollard rho; n must be odd composite.
inline u64 rho_factor(u64 n) {
  for (u64 c = 1;; ++c) {
    auto f = [&](u64 x) { return (mulmod(x, x, n) + c) % n; };
    u64 y = 2, x = 2, g = 1, q = 1, ys = 2;
    u64 r = 1;
    constexpr u64 block = 128;
    do {
      x = y;
      for (u64 i = 0; i < r; ++i) y = f(y);
      u64 k = 0;
      do {
        ys = y;
        for (u64 i = 0; i < std::min(block, r - k); ++i) {
          y = f(y);
          q = mulmod(q, x > y ? x - y : y - x, n);
        }
        g = std::gcd(q, n);
        k += block;
      } while (k < r && g == 1);
      r <<= 1;
    } while (g == 1);
    if (g == n) {
      do {
        ys = f(ys);
        g = std::gcd(x > ys ? x - ys : ys - x, n);
      } while (g == 1);
    }
    if (g != n) return g;
  }
}

inline void split(u64 n, std::vector<u64>& out) {
  if (n == 1) return;
  if (is_prime(n)) {
    out.push_back(n);
    return;
  }
  u64 g = rho_factor(n);
  split(g, out);
  split(n / g, out);
}

}  // namespace detail

// Trial division to 10^6, then Pollard rho on the cofactor.
inline Factorization factorize(u64 n) {
  if (n == 0) throw precondition_error("factorize: n must be positive");
  if (n > (u64{1} << 63)) throw precondition_error("factorize: n exceeds 2^63");
  Factorization out;
  out.n = n;
  u64 m = n;
  auto take = [&](u64 p) {
    int e = 0;
    while (m % p == 0) {
      m /= p;
      ++e;
    }
    if (e) out.factors.push_back({p, e});
  };
  take(2);
  for (u64 p = 3; p <= 1'000'000 && p * p <= m; p += 2) take(p);
  if (m > 1) {
    std::vector<u64> primes;
    detail::split(m, primes);
    std::sort(primes.begin(), primes.end());
    for (std::size_t i = 0; i < primes.size();) {
      std::size_t j = i;
      while (j < primes.size() && primes[j] == primes[i]) ++j;
      out.factors.push_back({primes[i], static_cast<int>(j - i)});
      i = j;
    }
  }
  return out;
}

struct MultiplicativeStats {
  int mu;
  u64 tau;
  u64 phi;
  friend bool operator==(const MultiplicativeStats&, const MultiplicativeStats&) = default;
};

inline MultiplicativeStats multiplicative_stats(const Factorization& f) {
  MultiplicativeStats s{1, 1, 1};
  for (const auto& [p, e] : f.factors) {
    s.mu = (e > 1) ? 0 : -s.mu;
    s.tau *= static_cast<u64>(e + 1);
    u64 pe1 = 1;
    for (int i = 1; i < e; ++i) pe1 *= p;
    s.phi *= pe1 * (p - 1);
  }
  return s;
}

inline MultiplicativeStats multiplicative_stats(u64 n) {
  return multiplicative_stats(factorize(n));
}

inline bool is_squarefree(u64 n) {
  if (n == 0) return false;
  for (const auto& f : factorize(n).factors) {
    if (f.exponent > 1) return false;
  }
  return true;
}

inline bool is_square(u64 n) {
  u64 r = static_cast<u64>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r * r == n;
}

// Jacobi symbol (a/n) for odd n >= 1.
inline int jacobi(i64 a_signed, u64 n) {
  if (n == 0 || (n & 1) == 0) throw precondition_error("jacobi: n must be odd and positive");
  i64 nn = static_cast<i64>(n);
  u64 a = static_cast<u64>(((a_signed % nn) + nn) % nn);
  int result = 1;
  while (a != 0) {
    while ((a & 1) == 0) {
      a >>= 1;
      u64 r = n & 7;
      if (r == 3 || r == 5) result = -result;
    }
    std::swap(a, n);
    if ((a & 3) == 3 && (n & 3) == 3) result = -result;
    a %= n;
  }
  return n == 1 ? result : 0;
}

// Kronecker symbol (D/n), n >= 1: (D/1) = 1, (D/2) = 0 for even D and
// +1/-1 for D = +-1 / +-3 mod 8, odd part by the Jacobi symbol.
inline int kronecker(i64 D, u64 n) {
  if (n == 0) throw precondition_error("kronecker: n must be positive");
  int result = 1;
  int twos = std::countr_zero(n);
  if (twos > 0) {
    if ((D & 1) == 0) return 0;
    int m8 = static_cast<int>(((D % 8) + 8) % 8);
    if ((m8 == 3 || m8 == 5) && (twos & 1)) result = -1;
    n >>= twos;
  }
  return result * jacobi(D, n);
}

inline bool is_fundamental_discriminant(i64 D) {
  if (D == 0) throw precondition_error("is_fundamental_discriminant: D must be nonzero");
  if (D == 1) return true;
  auto mod = [](i64 a, i64 m) { return ((a % m) + m) % m; };
  auto sqfree = [](i64 v) { return is_squarefree(static_cast<u64>(v < 0 ? -v : v)); };
  if (mod(D, 4) == 1) return sqfree(D);
  if (mod(D, 4) == 0) {
    i64 m = D / 4;
    i64 r = mod(m, 4);
    return (r == 2 || r == 3) && sqfree(m);
  }
  return false;
}

// Smallest-prime-factor table on [0, limit]; spf[0] = spf[1] = 0.
class PrimeSieve {
 public:
  explicit PrimeSieve(std::uint32_t limit) : spf_(limit + 1, 0) {
    for (std::uint32_t i = 2; i <= limit; ++i) {
      if (spf_[i] == 0) {
        spf_[i] = i;
        primes_.push_back(i);
      }
      for (std::uint32_t p : primes_) {
        u64 m = u64{p} * i;
        if (p > spf_[i] || m > limit) break;
        spf_[m] = p;
      }
    }
  }

  std::uint32_t limit() const { return static_cast<std::uint32_t>(spf_.size() - 1); }
  std::uint32_t spf(std::uint32_t n) const { return spf_[n]; }
  bool is_prime(std::uint32_t n) const { return n >= 2 && spf_[n] == n; }
  const std::vector<std::uint32_t>& primes() const { return primes_; }

 private:
  std::vector<std::uint32_t> spf_;
  std::vector<std::uint32_t> primes_;
};

struct DiscriminantFamily {
  double X = 0;
  u64 q = 1;
  std::vector<u64> members;  // odd squarefree d, gcd(d, q) = 1, X/16 <= d <= X/4
};

// Odd squarefree d coprime to q with X/2 <= 8d <= 2X, by a segmented sieve
// over [ceil(X/16), floor(X/4)] that strikes multiples of odd p^2.
inline DiscriminantFamily enumerate_family(double X, u64 q) {
  if (!(X >= 16)) throw precondition_error("enumerate_family: X must be at least 16");
  if (q == 0 || q % 2 == 0) {
    throw precondition_error("enumerate_family: level q must be odd for the 8d family");
  }
  DiscriminantFamily fam;
  fam.X = X;
  fam.q = q;
  const u64 lo = static_cast<u64>(std::ceil(X / 16));
  const u64 hi = static_cast<u64>(std::floor(X / 4));
  if (lo > hi) return fam;

  const auto root = static_cast<std::uint32_t>(std::sqrt(static_cast<double>(hi))) + 1;
  PrimeSieve small(root);
  constexpr u64 segment = u64{1} << 16;
  std::vector<char> ok;
  for (u64 start = lo; start <= hi; start += segment) {
    const u64 stop = std::min(hi, start + segment - 1);
    ok.assign(stop - start + 1, 1);
    for (std::uint32_t p : small.primes()) {
      if (p == 2) continue;
      const u64 sq = u64{p} * p;
      if (sq > stop) break;
      for (u64 m = (start + sq - 1) / sq * sq; m <= stop; m += sq) ok[m - start] = 0;
    }
    for (u64 d = start; d <= stop; ++d) {
      if (ok[d - start] && (d & 1) && std::gcd(d, q) == 1) fam.members.push_back(d);
    }
  }
  return fam;
}

}  // namespace twistderiv::arith

#endif  // TWISTDERIV_ARITH_HPP
