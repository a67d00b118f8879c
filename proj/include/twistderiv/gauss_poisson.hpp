#ifndef TWISTDERIV_GAUSS_POISSON_HPP
#define TWISTDERIV_GAUSS_POISSON_HPP

// Quadratic Gauss-type sums
//   G_k(n) = ((1-i)/2 + (-1/n)(1+i)/2) sum_{a mod n} (a/n) e(ak/n),  n odd,
// by direct summation and by the multiplicative prime-power table, and a
// numerical check of the Poisson summation identity
//   sum_{d odd} (8d/n) H(d/X) = delta_sq(n) (X/2) H-check(0) prod_{p|n} (1 - 1/p)
//                             + (X/2) sum_{k != 0} (-1)^k G_k(n)/n H-check(Xk/2n).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "twistderiv/arith.hpp"
#include "twistderiv/errors.hpp"
#include "twistderiv/kernels.hpp"
#include "twistderiv/parallel.hpp"
#include "twistderiv/special.hpp"

namespace twistderiv::gauss {

using arith::i64;
using arith::u64;
using cplx = std::complex<double>;

enum class GaussRoute { brute, closed };

struct GaussSumValue {
  i64 k = 0;
  u64 n = 1;
  cplx value;
  GaussRoute route = GaussRoute::brute;
};

inline constexpr u64 brute_force_limit = 1'000'000;

// (1-i)/2 + (-1/n)(1+i)/2: 1 for n = 1 mod 4, -i for n = 3 mod 4.
inline cplx prefactor(u64 n) { return (n % 4 == 1) ? cplx(1, 0) : cplx(0, -1); }

namespace detail {

inline void require_odd(u64 n, const char* what) {
  if (n == 0 || n % 2 == 0) throw precondition_error(std::string(what) + ": n must be odd and positive");
}

inline u64 reduce(i64 k, u64 n) {
  const i64 m = static_cast<i64>(n);
  return static_cast<u64>(((k % m) + m) % m);
}

// e(r/n) for r = 0..n-1.
inline std::vector<cplx> unit_roots(u64 n) {
  std::vector<cplx> z(n);
  const double step = 2 * std::numbers::pi / static_cast<double>(n);
  for (u64 r = 0; r < n; ++r) z[r] = std::polar(1.0, step * static_cast<double>(r));
  return z;
}

// sum_a chi[a] e(a k / n), with the phase index a k reduced mod n.
inline cplx character_sum(const std::vector<signed char>& chi, const std::vector<cplx>& roots, u64 km) {
  const u64 n = chi.size();
  cplx s = 0;
  u64 r = 0;
  for (u64 a = 0; a < n; ++a) {
    if (chi[a] > 0) s += roots[r];
    else if (chi[a] < 0) s -= roots[r];
    r += km;
    if (r >= n) r -= n;
  }
  return s;
}

inline std::vector<signed char> jacobi_table(u64 n) {
  std::vector<signed char> chi(n);
  for (u64 a = 0; a < n; ++a) chi[a] = static_cast<signed char>(arith::jacobi(static_cast<i64>(a), n));
  return chi;
}

}  // namespace detail

inline GaussSumValue gauss_sum_bruteforce(i64 k, u64 n) {
  detail::require_odd(n, "gauss_sum_bruteforce");
  if (n > brute_force_limit) throw precondition_error("gauss_sum_bruteforce: n exceeds 10^6");
  const auto chi = detail::jacobi_table(n);
  const auto roots = detail::unit_roots(n);
  return {k, n, prefactor(n) * detail::character_sum(chi, roots, detail::reduce(k, n)), GaussRoute::brute};
}

// G_k(p^beta) from alpha = v_p(k) (infinite for k = 0). Rows:
//   beta <= alpha: 0 if beta odd, phi(p^beta) if even;
//   beta = alpha+1: -p^alpha if beta even, (k p^-alpha / p) p^alpha sqrt(p) if odd;
//   beta >= alpha+2: 0 (for odd beta as printed; for even beta by direct check).
inline double gauss_sum_prime_power(i64 k, u64 p, int beta) {
  if (beta == 0) return 1.0;
  int alpha = std::numeric_limits<int>::max();
  i64 unit = 0;  // k p^{-alpha}
  if (k != 0) {
    alpha = 0;
    unit = k;
    while (unit % static_cast<i64>(p) == 0) {
      unit /= static_cast<i64>(p);
      ++alpha;
    }
  }
  const double pd = static_cast<double>(p);
  if (beta <= alpha) {
    if (beta % 2) return 0.0;
    return std::pow(pd, beta) - std::pow(pd, beta - 1);
  }
  if (beta == alpha + 1) {
    const double pa = std::pow(pd, alpha);
    if (beta % 2 == 0) return -pa;
    return arith::jacobi(unit, p) * pa * std::sqrt(pd);
  }
  return 0.0;
}

inline GaussSumValue gauss_sum_closed(i64 k, u64 n) {
  detail::require_odd(n, "gauss_sum_closed");
  double v = 1.0;
  for (const auto& [p, e] : arith::factorize(n).factors) {
    v *= gauss_sum_prime_power(k, p, e);
    if (v == 0) break;
  }
  return {k, n, cplx(v, 0), GaussRoute::closed};
}

struct GaussSweepRow {
  i64 k;
  u64 n;
  cplx closed;
  cplx brute;
  double abs_err;
};

// Every odd n <= n_max against every k in [k_lo, k_hi]; rows ordered by n, then k.
inline std::vector<GaussSweepRow> gauss_sweep(u64 n_max, i64 k_lo, i64 k_hi, const WorkerPool& pool) {
  if (k_lo > k_hi) throw precondition_error("gauss_sweep: empty k range");
  if (n_max > brute_force_limit) throw precondition_error("gauss_sweep: n_max exceeds 10^6");
  const std::size_t count = (n_max + 1) / 2;
  auto blocks = pool.map(count, [&](std::size_t i) {
    const u64 n = 2 * i + 1;
    const auto chi = detail::jacobi_table(n);
    const auto roots = detail::unit_roots(n);
    const cplx pre = prefactor(n);
    std::vector<GaussSweepRow> rows;
    for (i64 k = k_lo; k <= k_hi; ++k) {
      const cplx b = pre * detail::character_sum(chi, roots, detail::reduce(k, n));
      const cplx c = gauss_sum_closed(k, n).value;
      rows.push_back({k, n, c, b, std::abs(c - b)});
    }
    return rows;
  });
  std::vector<GaussSweepRow> out;
  for (auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
  return out;
}

// ---------------------------------------------------------------------------
// Poisson summation check
// ---------------------------------------------------------------------------

struct PoissonOptions {
  double tolerance = 1e-6;
  double transform_tol = 1e-13;  // absolute, per H-check evaluation
  u64 K_trunc = 0;               // 0 = adaptive; otherwise a floor on the direct terms
  u64 K_max = u64{1} << 15;
};

struct PoissonReport {
  u64 n = 1;
  double X = 0;
  std::string bump;
  u64 K_trunc = 0;
  double lhs = 0;
  double rhs_main = 0;
  double rhs_dual = 0;
  double residual = 0;
  double tail_estimate = 0;
  bool tail_ok = false;  // tail_estimate < tolerance
  bool passed = false;   // tail_ok and residual <= tolerance + tail_estimate
};

namespace detail {

// Derivative jumps (right minus left) of g_paper: at x = 1 the m-th
// derivative drops from f^(m)(1) to 0, at x = 2 it rises from -f^(m)(1)/2^m
// to 0, where f is the rising piece. Values themselves are continuous.
struct Jumps {
  std::vector<double> at_one, at_two;  // index m
};

// Smallest den <= 64 with X den an integer, or 0.
inline u64 small_denominator(double X) {
  for (u64 den = 1; den <= 64; ++den) {
    const double v = X * static_cast<double>(den);
    if (v == std::floor(v)) return den;
  }
  return 0;
}

inline Jumps g_paper_jumps(int order) {
  const auto f = kernels::g_paper_rise_derivatives_at_one(order);
  Jumps j;
  for (int m = 0; m <= order; ++m) {
    j.at_one.push_back(m == 0 ? 0.0 : -f[m]);
    j.at_two.push_back(m == 0 ? 0.0 : f[m] / std::ldexp(1.0, m));
  }
  return j;
}

inline double euler_factor(u64 n) {
  double r = 1;
  for (const auto& f : arith::factorize(n).factors) r *= 1.0 - 1.0 / static_cast<double>(f.prime);
  return r;
}

}  // namespace detail

class PoissonVerifier {
 public:
  explicit PoissonVerifier(kernels::BumpKind bump, PoissonOptions opt = {})
      : bump_(bump), weight_(kernels::weight_of(bump)), opt_(opt) {
    integral_ = kernels::fourier_check_transform(weight_, 0.0, opt_.transform_tol);
  }

  const kernels::BumpKind& bump() const { return bump_; }
  double integral() const { return integral_; }

  PoissonReport verify(u64 n, double X) const {
    detail::require_odd(n, "poisson_verify");
    if (!(X > 0)) throw precondition_error("poisson_verify: X must be positive");
    PoissonReport rep;
    rep.n = n;
    rep.X = X;
    rep.bump = bump_.name();

    const auto dlo = static_cast<u64>(std::max(1.0, std::floor(weight_.lo() * X)));
    const auto dhi = static_cast<u64>(std::ceil(weight_.hi() * X));
    for (u64 d = dlo | 1; d <= dhi; d += 2) {
      const double h = weight_(static_cast<double>(d) / X);
      if (h != 0) rep.lhs += arith::kronecker(static_cast<i64>(8 * d), n) * h;
    }
    if (arith::is_square(n)) rep.rhs_main = 0.5 * X * integral_ * detail::euler_factor(n);

    std::vector<double> g(n);  // G_r(n)/n, real by the prime-power table
    for (u64 r = 0; r < n; ++r) g[r] = gauss_sum_closed(static_cast<i64>(r), n).value.real() / static_cast<double>(n);

    const u64 den = detail::small_denominator(X);
    const bool asymptotic = bump_.tag == kernels::BumpTag::g_paper && den && X * den * n < 9e15;
    if (asymptotic) dual_with_asymptotic_tail(rep, g, den);
    else dual_by_doubling(rep, g);

    rep.residual = std::abs(rep.lhs - rep.rhs_main - rep.rhs_dual);
    rep.tail_ok = rep.tail_estimate < opt_.tolerance;
    rep.passed = rep.tail_ok && rep.residual <= opt_.tolerance + rep.tail_estimate;
    return rep;
  }

 private:
  // (X/2) (-1)^k G_k(n)/n H-check(Xk/2n) summed over 0 < |k| <= K, from k0 on.
  // With bound set, also returns (X/2) max_r |G_r(n)/n| sum_k |H-check(+-y_k)|,
  // which does not rely on individual coefficients being nonzero.
  double direct_terms(u64 n, double X, const std::vector<double>& g, u64 k0, u64 K, double* bound) const {
    double gmax = 0;
    if (bound) {
      for (double v : g) gmax = std::max(gmax, std::abs(v));
    }
    double s = 0, mag = 0;
    for (u64 k = k0; k <= K; ++k) {
      const double sign = (k % 2) ? -1.0 : 1.0;
      const double y = X * static_cast<double>(k) / (2.0 * static_cast<double>(n));
      const double gp = g[k % n], gm = g[(n - k % n) % n];
      const double fp = (gp != 0 || bound) ? kernels::fourier_check_transform(weight_, y, opt_.transform_tol) : 0.0;
      const double fm = (gm != 0 || bound) ? kernels::fourier_check_transform(weight_, -y, opt_.transform_tol) : 0.0;
      s += 0.5 * X * sign * (gp * fp + gm * fm);
      mag += 0.5 * X * gmax * (std::abs(fp) + std::abs(fm));
    }
    if (bound) *bound = mag;
    return s;
  }

  void dual_by_doubling(PoissonReport& rep, const std::vector<double>& g) const {
    const u64 n = rep.n;
    const double X = rep.X;
    u64 K = std::max<u64>(1, static_cast<u64>(std::ceil(16.0 * 2.0 * n / X)));
    K = std::max(K, opt_.K_trunc);
    double block = 0;
    double sum = direct_terms(n, X, g, 1, K, nullptr);
    if (opt_.K_trunc) {
      // Fixed truncation: the tail is estimated by the last half block.
      direct_terms(n, X, g, K / 2 + 1, K, &block);
    } else {
      for (;;) {
        // Past this point the quadrature floor alone exceeds the tolerance.
        if (quadrature_floor(X, 2 * K) >= opt_.tolerance) break;
        const u64 K2 = 2 * K;
        double mag = 0;
        try {
          sum += direct_terms(n, X, g, K + 1, K2, &mag);
        } catch (const numerical_error&) {
          // Transforms this far out are below what the quadrature resolves.
          block = INFINITY;
          break;
        }
        K = K2;
        block = mag;
        if (block < 0.1 * opt_.tolerance || K >= opt_.K_max) break;
      }
    }
    rep.K_trunc = K;
    rep.rhs_dual = sum;
    rep.tail_estimate = block + quadrature_floor(X, K);
  }

  // Direct terms up to |y| ~ Y0, then the integration-by-parts expansion
  //   F(w) = sum_m (-1)^{m+1} sum_j e^{i w x_j} Delta_j^(m) / (i w)^{m+1}
  // summed over the remaining k. With X den an integer the coefficients are
  // periodic in k with period 2n den, so each power of k closes in Hurwitz zeta.
  void dual_with_asymptotic_tail(PoissonReport& rep, const std::vector<double>& g, u64 den) const {
    constexpr double Y0 = 128.0;
    constexpr int order_cap = 24;
    const u64 n = rep.n;
    const double X = rep.X;
    const double nd = static_cast<double>(n);
    u64 K = std::max<u64>(1, static_cast<u64>(std::ceil(Y0 * 2.0 * nd / X)));
    K = std::max(K, opt_.K_trunc);
    rep.K_trunc = K;
    rep.rhs_dual = direct_terms(n, X, g, 1, K, nullptr);

    const auto jumps = detail::g_paper_jumps(order_cap + 1);
    const double inv_w = nd / (std::numbers::pi * X);  // 1 / w per unit k
    const double wK = static_cast<double>(K + 1) / inv_w;
    // Keep orders while the term bound still shrinks and matters.
    int M = 1;
    auto bound = [&](int m) {
      return (std::abs(jumps.at_one[m]) + std::abs(jumps.at_two[m])) * std::pow(wK, -(m + 1.0));
    };
    while (M < order_cap && bound(M + 1) < bound(M) && bound(M) > 1e-22) ++M;

    const u64 P = 2 * n * den;
    // zeta_tab[r][m] = sum_{k > K, k = r mod P} k^{-(m+1)}
    std::vector<std::vector<double>> zeta_tab(P, std::vector<double>(M + 2, 0.0));
    for (u64 r = 0; r < P; ++r) {
      u64 kr = K + 1 + ((r + P - (K + 1) % P) % P);
      for (int m = 1; m <= M + 1; ++m) {
        const double s = m + 1.0;
        zeta_tab[r][m] = std::pow(static_cast<double>(P), -s) *
                         special::hurwitz_zeta(s, static_cast<double>(kr) / static_cast<double>(P));
      }
    }

    const cplx I(0, 1);
    double tail = 0;
    for (int side : {1, -1}) {
      for (int m = 1; m <= M; ++m) {
        cplx acc = 0;
        for (u64 r = 0; r < P; ++r) {
          const double sign = (r % 2) ? -1.0 : 1.0;
          const double gr = side > 0 ? g[r % n] : g[(n - r % n) % n];
          if (gr == 0) continue;
          // e^{i w x_j} with w = side pi X k / n; k = r mod 2n fixes the phase.
          const double ph = side * std::numbers::pi * std::fmod(X * static_cast<double>(r), 2.0 * nd) / nd;
          const cplx e1 = std::polar(1.0, ph), e2 = std::polar(1.0, 2 * ph);
          acc += sign * gr * (jumps.at_one[m] * e1 + jumps.at_two[m] * e2) * zeta_tab[r][m];
        }
        // (-1)^{m+1} / (i side / inv_w)^{m+1}
        const cplx denom = std::pow(I * static_cast<double>(side), m + 1) * std::pow(inv_w, -(m + 1.0));
        const cplx term = ((m % 2) ? 1.0 : -1.0) * acc / denom;
        tail += term.real() + term.imag();
      }
    }
    rep.rhs_dual += 0.5 * X * tail;

    // Next order, summed over both sides with |G_k(n)/n| <= 1.
    const double next = (std::abs(jumps.at_one[M + 1]) + std::abs(jumps.at_two[M + 1])) *
                        std::pow(inv_w, M + 2.0) *
                        special::hurwitz_zeta(M + 2.0, static_cast<double>(K + 1));
    rep.tail_estimate = X * std::sqrt(2.0) * next + quadrature_floor(X, K);
  }

  double quadrature_floor(double X, u64 K) const {
    return X * static_cast<double>(K) * opt_.transform_tol;
  }

  kernels::BumpKind bump_;
  kernels::Weight weight_;
  PoissonOptions opt_;
  double integral_ = 0;
};

inline PoissonReport poisson_verify(u64 n, double X, const kernels::BumpKind& bump, PoissonOptions opt = {}) {
  return PoissonVerifier(bump, opt).verify(n, X);
}

}  // namespace twistderiv::gauss

#endif  // TWISTDERIV_GAUSS_POISSON_HPP
