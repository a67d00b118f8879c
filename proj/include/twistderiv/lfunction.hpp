#ifndef TWISTDERIV_LFUNCTION_HPP
#define TWISTDERIV_LFUNCTION_HPP

// The completed L-function at a real point s, for coefficients a_n with
//   Lambda(s) = A^s Gamma(s + (k-1)/2) L(s),  Lambda(s) = omega Lambda(1-s),
// split at an arbitrary t0 > 0:
//   Lambda(s) = sum a_n [ (A/n)^s Gamma(s+c, n t0/A)
//                         + omega (A/n)^{1-s} Gamma(1-s+c, n/(t0 A)) ].
// The value is independent of t0 exactly when omega is the true sign, which
// is what determine_fricke_sign and the finite-difference oracle rely on.

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <span>

#include "twistderiv/errors.hpp"

namespace twistderiv::lfunction {

struct CompletedSetup {
  double A;       // |D| sqrt(q) / (2 pi)
  double c;       // (k - 1) / 2
  int omega;      // assumed sign
  double t0 = 1;  // split point
};

// Coefficients needed so every dropped term is below e^{-48} relative.
inline std::size_t terms_needed(const CompletedSetup& cs) {
  const double tmin = std::min(cs.t0, 1.0 / cs.t0);
  return static_cast<std::size_t>(std::ceil((48.0 + 4 * cs.c) * cs.A / tmin)) + 16;
}

// coeffs[n] = a_n for n >= 1; coeffs[0] is ignored.
inline double completed_value(std::span<const double> coeffs, const CompletedSetup& cs, double s) {
  const double a1 = s + cs.c, a2 = 1 - s + cs.c;
  if (!(a1 > 0) || !(a2 > 0)) throw precondition_error("completed_value: s outside the strip of validity");
  const std::size_t need = terms_needed(cs);
  if (coeffs.size() <= need) throw data_error("completed_value: coefficient table too short");
  double total = 0;
  for (std::size_t n = 1; n <= need; ++n) {
    const double an = coeffs[n];
    if (an == 0) continue;
    const double ratio = cs.A / static_cast<double>(n);
    const double x1 = n * cs.t0 / cs.A, x2 = n / (cs.t0 * cs.A);
    double term = 0;
    if (x1 < a1 + 750) term += std::pow(ratio, s) * boost::math::tgamma(a1, x1);
    if (x2 < a2 + 750) term += cs.omega * std::pow(ratio, 1 - s) * boost::math::tgamma(a2, x2);
    total += an * term;
  }
  return total;
}

inline double l_value(std::span<const double> coeffs, const CompletedSetup& cs, double s) {
  return completed_value(coeffs, cs, s) / (std::pow(cs.A, s) * std::tgamma(s + cs.c));
}

}  // namespace twistderiv::lfunction

#endif  // TWISTDERIV_LFUNCTION_HPP
