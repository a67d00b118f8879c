#ifndef TWISTDERIV_CENTRAL_VALUES_HPP
#define TWISTDERIV_CENTRAL_VALUES_HPP

// Root numbers and central values of L(s, f x chi_D):
//   L'(1/2) = 2 sum lambda(n) chi_D(n) n^{-1/2} W(n/|D|)   when omega = -1,
//   L(1/2)  = 2 sum lambda(n) chi_D(n) n^{-1/2} W1(n/|D|)  when omega = +1,
// the derivative relation for omega = +1, and a finite-difference oracle
// on the completed L-function that shares no kernel code with the above.

#include <boost/math/special_functions/digamma.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "twistderiv/arith.hpp"
#include "twistderiv/errors.hpp"
#include "twistderiv/kernels.hpp"
#include "twistderiv/lfunction.hpp"
#include "twistderiv/newform.hpp"
#include "twistderiv/parallel.hpp"

namespace twistderiv::central {

using arith::i64;
using arith::u64;

// omega = i^k eta chi_D(-q) = (-1)^{k/2} eta chi_D(-1) chi_D(q).
inline int root_number(const newform::NewformSpec& spec, int eta, i64 D) {
  if (eta != 1 && eta != -1) throw precondition_error("root_number: Fricke sign must be +-1");
  if (D == 0) throw precondition_error("root_number: D must be nonzero");
  const u64 absD = static_cast<u64>(D < 0 ? -D : D);
  if (std::gcd(absD, spec.level) != 1) {
    throw precondition_error("root_number: D = " + std::to_string(D) + " is not coprime to the level " +
                             std::to_string(spec.level));
  }
  const int ik = (spec.weight / 2) % 2 ? -1 : 1;
  const int chi_minus_one = D < 0 ? -1 : 1;
  return ik * eta * chi_minus_one * arith::kronecker(D, spec.level);
}

inline int root_number(const newform::Newform& f, i64 D) { return root_number(f.spec(), f.eta, D); }

struct TwistPoint {
  u64 d = 0;
  i64 D = 0;
  int omega = 0;
  std::optional<double> lprime;
  std::optional<double> lvalue;
  u64 trunc_N = 0;
  double tail_bound = 0;
};

struct SeriesValue {
  double value = 0;
  double tail_bound = 0;
  u64 trunc_N = 0;
};

struct EngineOptions {
  double tail_tol = 1e-6;
  double trunc_factor = 50;  // default trunc_N = max(trunc_factor |D|, trunc_min)
  u64 trunc_min = 1000;
  kernels::TableGrid grid{};
};

class CentralValueEngine {
 public:
  // Tables cover n <= capacity; capacity 0 means trunc_factor * max_abs_D.
  CentralValueEngine(const newform::Newform& f, u64 max_abs_D, EngineOptions opt = {}, u64 capacity = 0)
      : form_(f), opt_(opt), kernel_(f.weight(), static_cast<double>(f.level())) {
    if (f.eta != 1 && f.eta != -1) throw precondition_error("CentralValueEngine: Fricke sign not determined");
    capacity_ = capacity ? capacity : default_trunc(max_abs_D);
    if (f.table.size() <= capacity_) {
      throw data_error("eigenvalue table too short: need length " + std::to_string(capacity_));
    }
    w_ = kernels::make_w_table(kernel_, opt_.grid);
    w1_ = kernels::make_w1_table(kernel_, opt_.grid);
    c3_ = kernels::decay_constant_c3(kernel_);
    coef_.resize(capacity_ + 1);
    logn_.resize(capacity_ + 1);
    for (u64 n = 1; n <= capacity_; ++n) {
      const double nd = static_cast<double>(n);
      coef_[n] = f.table[n] / std::sqrt(nd);
      logn_[n] = std::log(nd);
    }
  }

  const newform::Newform& form() const { return form_; }
  const kernels::CutoffKernel& kernel() const { return kernel_; }
  const kernels::KernelTable& w_table() const { return w_; }
  const kernels::KernelTable& w1_table() const { return w1_; }
  double c3() const { return c3_; }
  u64 capacity() const { return capacity_; }
  const EngineOptions& options() const { return opt_; }

  u64 default_trunc(u64 absD) const {
    return std::max(static_cast<u64>(std::ceil(opt_.trunc_factor * static_cast<double>(absD))), opt_.trunc_min);
  }

  int omega(i64 D) const { return root_number(form_, D); }

  // A = |D| sqrt(q) / (2 pi): x_n = n / A is the kernel argument of term n.
  double scale(i64 D) const {
    return std::abs(static_cast<double>(D)) * std::sqrt(static_cast<double>(form_.level())) / (2 * std::numbers::pi);
  }

  // Bound on 2 sum_{n > N} |lambda(n) chi(n)| n^{-1/2} W(n/|D|), the smaller of
  //   cubic:       W(x) <= C3 x^{-3}, sum_{n<=t} tau(n) <= t (log t + 1), sigma = 7/2;
  //   exponential: tau(n) <= 2 sqrt(n), W decreasing, int_x0^inf W <= a Q(a+1,x0) - x0 Q(a,x0).
  double tail_bound_prime(i64 D, u64 N) const {
    const double A = scale(D), Nd = static_cast<double>(N);
    constexpr double sigma = 3.5;
    const double lN = std::log(Nd);
    const double cubic = 2 * c3_ * A * A * A * sigma * std::pow(Nd, 1 - sigma) *
                         ((lN + 1) / (sigma - 1) + 1 / ((sigma - 1) * (sigma - 1)));
    return std::min(cubic, exp_tail(A, Nd));
  }

  // Same for W1 = Q(a, x) (which is itself decreasing and integrable).
  double tail_bound_value(i64 D, u64 N) const { return exp_tail(scale(D), static_cast<double>(N)); }

  // Raw sums over n <= N, without the sign indicator.
  double lprime_series(i64 D, u64 N) const { return series(D, N, w_); }
  double lvalue_series(i64 D, u64 N) const { return series(D, N, w1_); }

  // Terms with N < n <= 2N accumulated on their own, so the effect of
  // doubling the truncation is not lost to cancellation.
  double lprime_increment(i64 D, u64 N) const { return series(D, 2 * N, w_, N); }
  double lvalue_increment(i64 D, u64 N) const { return series(D, 2 * N, w1_, N); }

  // L'(1/2) for omega = -1; exactly (0, 0) for omega = +1.
  SeriesValue lprime_central(i64 D) const {
    check_discriminant(D);
    if (omega(D) == 1) return {0.0, 0.0, 0};
    const u64 N = choose_trunc(D, [&](u64 n) { return tail_bound_prime(D, n); });
    return {lprime_series(D, N), tail_bound_prime(D, N), N};
  }

  // L(1/2) for omega = +1. With omega = -1 the value is 0 by the sign and is
  // returned only when allow_odd is set.
  SeriesValue l_central(i64 D, bool allow_odd = false) const {
    check_discriminant(D);
    if (omega(D) == -1) {
      if (!allow_odd) throw precondition_error("l_central: root number is -1, L(1/2) vanishes by sign");
      return {0.0, 0.0, 0};
    }
    const u64 N = choose_trunc(D, [&](u64 n) { return tail_bound_value(D, n); });
    return {lvalue_series(D, N), tail_bound_value(D, N), N};
  }

  // L'(1/2) = -L(1/2) (log(|D| sqrt q / 2 pi) + psi(k/2)) for omega = +1.
  SeriesValue lprime_from_relation(i64 D) const {
    check_discriminant(D);
    if (omega(D) == -1) throw precondition_error("lprime_from_relation: root number is -1");
    const SeriesValue L = l_central(D);
    const double factor = std::log(scale(D)) + boost::math::digamma(0.5 * form_.weight());
    return {-L.value * factor, L.tail_bound * std::abs(factor), L.trunc_N};
  }

  // One family member, D = 8d: L' for omega = -1, L and L' (by the
  // relation) for omega = +1 when with_even is set.
  TwistPoint evaluate(u64 d, bool with_even = false) const {
    TwistPoint pt;
    pt.d = d;
    pt.D = static_cast<i64>(8 * d);
    pt.omega = omega(pt.D);
    if (pt.omega == -1) {
      const auto v = lprime_central(pt.D);
      pt.lprime = v.value;
      pt.lvalue = 0.0;
      pt.trunc_N = v.trunc_N;
      pt.tail_bound = v.tail_bound;
    } else {
      pt.lprime = 0.0;  // the indicator in the L' series
      if (with_even) {
        const auto L = l_central(pt.D);
        pt.lvalue = L.value;
        pt.lprime = lprime_from_relation(pt.D).value;
        pt.trunc_N = L.trunc_N;
        pt.tail_bound = L.tail_bound;
      }
    }
    return pt;
  }

 private:
  double exp_tail(double A, double N) const {
    const double a = kernel_.a(), x0 = N / A;
    const double integral = a * kernels::gamma_q(a + 1, x0) - x0 * kernels::gamma_q(a, x0);
    return 4 * A * std::max(0.0, integral);
  }

  void check_discriminant(i64 D) const {
    if (D == 0 || !arith::is_fundamental_discriminant(D)) {
      throw precondition_error("D = " + std::to_string(D) + " is not a fundamental discriminant");
    }
    root_number(form_, D);  // coprimality with the level
  }

  template <class Bound>
  u64 choose_trunc(i64 D, Bound&& bound) const {
    u64 N = default_trunc(static_cast<u64>(D < 0 ? -D : D));
    while (bound(N) > opt_.tail_tol) N *= 2;
    if (N > capacity_) throw data_error("eigenvalue table too short: need length " + std::to_string(N));
    return N;
  }

  // chi_D is periodic mod |D|; one period is filled multiplicatively from
  // its values at primes.
  static std::vector<signed char> character_period(i64 D) {
    const u64 m = static_cast<u64>(D < 0 ? -D : D);
    std::vector<signed char> chi(m + 1, 0);
    arith::PrimeSieve sieve(static_cast<std::uint32_t>(m));
    chi[1] = 1;
    for (std::uint32_t n = 2; n <= m; ++n) {
      const std::uint32_t p = sieve.spf(n);
      chi[n] = (p == n) ? static_cast<signed char>(arith::kronecker(D, p))
                        : static_cast<signed char>(chi[p] * chi[n / p]);
    }
    chi[0] = (m == 1) ? 1 : 0;
    chi.pop_back();  // index m duplicates index 0
    return chi;
  }

  // 2 sum_{from < n <= N} lambda(n) chi_D(n) n^{-1/2} K(n/|D|).
  double series(i64 D, u64 N, const kernels::KernelTable& K, u64 from = 0) const {
    if (N > capacity_) throw data_error("eigenvalue table too short: need length " + std::to_string(N));
    const auto chi = character_period(D);
    const u64 m = chi.size();
    const double shift = -std::log(scale(D));  // log x_n = log n - log A
    // Past the grid the kernel is 0; stop there.
    const double u_stop = std::log(K.x_hi()) - shift;
    const u64 step = (D % 2 == 0) ? 2 : 1;  // chi_D vanishes on even n for even D
    u64 n = from + 1;
    if (step == 2 && n % 2 == 0) ++n;
    u64 r = n % m;
    double s = 0;
    for (; n <= N; n += step) {
      const signed char c = chi[r];
      r += step;
      if (r >= m) r -= m;
      if (c == 0) continue;
      const double cf = coef_[n];
      if (cf == 0) continue;
      if (logn_[n] >= u_stop) break;
      s += c * cf * K.at_log(logn_[n] + shift);
    }
    return 2 * s;
  }

  const newform::Newform& form_;
  EngineOptions opt_;
  kernels::CutoffKernel kernel_;
  kernels::KernelTable w_, w1_;
  double c3_ = 0;
  u64 capacity_ = 0;
  std::vector<double> coef_, logn_;
};

// ---------------------------------------------------------------------------
// Independent oracle
// ---------------------------------------------------------------------------

struct OracleOptions {
  double h = 1e-2;
  double t0 = 1.2;  // split point of the completed function, away from 1
  double ratio_lo = 3.0, ratio_hi = 5.0;
};

struct OracleResult {
  double lprime = 0;      // Richardson-extrapolated derivative at 1/2
  double lvalue = 0;      // L(1/2) evaluated directly
  double diff[3] = {};    // central differences at h, h/2, h/4
  double ratio = 0;       // (diff0 - diff1) / (diff1 - diff2), near 4 for O(h^2)
  double extrapolation_change = 0;
  bool converged = false;
};

inline constexpr u64 oracle_max_abs_D = 1600;

// Differentiates L(s) = Lambda(s) / (A^s Gamma(s + (k-1)/2)) at s = 1/2,
// with Lambda from the split incomplete-gamma expansion at t0 != 1 and
// coefficients lambda(n) (D/n) taken straight from the Kronecker symbol.
inline OracleResult finite_difference_oracle(const newform::Newform& f, i64 D, OracleOptions opt = {}) {
  if (!(opt.h >= 1e-4 && opt.h <= 1e-2)) throw precondition_error("finite_difference_oracle: h must lie in [1e-4, 1e-2]");
  const u64 absD = static_cast<u64>(D < 0 ? -D : D);
  if (absD == 0 || absD > oracle_max_abs_D) {
    throw precondition_error("finite_difference_oracle: |D| must be in [1, 1600]");
  }
  if (!arith::is_fundamental_discriminant(D)) throw precondition_error("finite_difference_oracle: D not fundamental");
  lfunction::CompletedSetup cs;
  cs.A = static_cast<double>(absD) * std::sqrt(static_cast<double>(f.level())) / (2 * std::numbers::pi);
  cs.c = 0.5 * (f.weight() - 1);
  cs.omega = root_number(f, D);
  cs.t0 = opt.t0;
  const std::size_t need = lfunction::terms_needed(cs) + 1;
  if (f.table.size() <= need) throw data_error("eigenvalue table too short: need length " + std::to_string(need));
  std::vector<double> a(need + 1, 0.0);
  for (std::size_t n = 1; n <= need; ++n) a[n] = f.table[n] * arith::kronecker(D, n);

  auto L = [&](double s) { return lfunction::l_value(a, cs, s); };
  OracleResult r;
  r.lvalue = L(0.5);
  double h = opt.h;
  for (double& d : r.diff) {
    d = (L(0.5 + h) - L(0.5 - h)) / (2 * h);
    h /= 2;
  }
  const double r1 = (4 * r.diff[1] - r.diff[0]) / 3, r2 = (4 * r.diff[2] - r.diff[1]) / 3;
  r.lprime = r2;
  r.extrapolation_change = std::abs(r2 - r1);
  const double den = r.diff[1] - r.diff[2];
  r.ratio = den != 0 ? (r.diff[0] - r.diff[1]) / den : 0;
  r.converged = (r.ratio >= opt.ratio_lo && r.ratio <= opt.ratio_hi) || r.extrapolation_change < 1e-10;
  return r;
}

}  // namespace twistderiv::central

#endif  // TWISTDERIV_CENTRAL_VALUES_HPP
