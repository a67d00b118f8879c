#ifndef TWISTDERIV_SPECIAL_HPP
#define TWISTDERIV_SPECIAL_HPP

#include <cmath>
#include <complex>
#include <numbers>

#include "twistderiv/errors.hpp"

namespace twistderiv::special {

using cplx = std::complex<double>;

// log Gamma(z) on the principal branch. Lanczos (g = 7, n = 9) in the
// right half plane, reflection formula elsewhere; about 1e-15 relative.
inline cplx lgamma(cplx z) {
  constexpr double pi = std::numbers::pi;
  if (z.real() < 0.5) {
    // log Gamma(z) = log pi - log sin(pi z) - log Gamma(1 - z)
    return std::log(pi) - std::log(std::sin(pi * z)) - lgamma(1.0 - z);
  }
  static constexpr double coef[] = {
      0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
      771.32342877765313,   -176.61502916214059,   12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  z -= 1.0;
  cplx x = coef[0];
  for (int i = 1; i < 9; ++i) x += coef[i] / (z + static_cast<double>(i));
  const cplx t = z + 7.5;
  return 0.5 * std::log(2 * pi) + (z + 0.5) * std::log(t) - t + std::log(x);
}

inline cplx gamma(cplx z) { return std::exp(lgamma(z)); }

// Hurwitz zeta sum_{j >= 0} (j + a)^{-s} for real s > 1, a > 0, by direct
// summation to a shift of 16 followed by Euler-Maclaurin with eight
// Bernoulli corrections.
inline double hurwitz_zeta(double s, double a) {
  if (!(s > 1) || !(a > 0)) throw precondition_error("hurwitz_zeta: need s > 1 and a > 0");
  constexpr int shift = 16;
  double sum = 0;
  for (int j = 0; j < shift; ++j) sum += std::pow(j + a, -s);
  const double N = a + shift;
  sum += std::pow(N, 1 - s) / (s - 1) + 0.5 * std::pow(N, -s);
  static constexpr double b2k[] = {1.0 / 6,       -1.0 / 30,   1.0 / 42,       -1.0 / 30,
                                   5.0 / 66,      -691.0 / 2730, 7.0 / 6,     -3617.0 / 510};
  // term_k = B_2k / (2k)! * s (s+1) ... (s+2k-2) * N^{-s-2k+1}
  double rising = s;  // s (s+1) ... (s+2k-2)
  double fact = 2;    // (2k)!
  double power = std::pow(N, -s - 1);
  for (int k = 1; k <= 8; ++k) {
    sum += b2k[k - 1] / fact * rising * power;
    rising *= (s + 2 * k - 1) * (s + 2 * k);
    fact *= (2 * k + 1) * (2 * k + 2);
    power /= N * N;
  }
  return sum;
}

}  // namespace twistderiv::special

#endif  // TWISTDERIV_SPECIAL_HPP
