#ifndef TWISTDERIV_QUADRATURE_HPP
#define TWISTDERIV_QUADRATURE_HPP

// Globally adaptive Gauss-Kronrod (10/21) quadrature with an absolute
// tolerance. Works for real- and complex-valued integrands.

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "twistderiv/errors.hpp"

namespace twistderiv::quad {

struct Options {
  double abs_tol = 1e-10;
  int max_depth = 60;           // bisections of any one panel
  int max_panels = 200000;
};

template <class R>
struct Result {
  R value{};
  double error = 0;
  bool converged = true;
};

namespace detail {

template <class R>
struct Panel {
  double a, b;
  R value;
  double error;
  double noise;  // rounding floor: 50 eps int |f| over the panel
  int depth;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
auto gk21(F& f, double a, double b) {
  using R = decltype(f(a));
  using kronrod = boost::math::quadrature::gauss_kronrod<double, 21>;
  using gauss = boost::math::quadrature::gauss<double, 10>;
  const auto& xk = kronrod::abscissa();
  const auto& wk = kronrod::weights();
  const auto& wg = gauss::weights();
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  // Kronrod abscissa index 0 is the centre; odd indices are Gauss nodes
  // (gauss<10> has no centre node, so its weights pair with odd indices).
  R fc = f(c);
  R k = fc * wk[0];
  R g{};
  double kabs = std::abs(fc) * wk[0];
  for (std::size_t i = 1; i < xk.size(); ++i) {
    const double dx = h * xk[i];
    const R fl = f(c - dx), fr = f(c + dx);
    const R fsum = fl + fr;
    k += fsum * wk[i];
    kabs += (std::abs(fl) + std::abs(fr)) * wk[i];
    if (i % 2 == 1) g += fsum * wg[i / 2];
  }
  constexpr double eps = std::numeric_limits<double>::epsilon();
  return std::tuple<R, double, double>{k * h, std::abs(k * h - g * h), 50 * eps * kabs * std::abs(h)};
}

}  // namespace detail

// Integral over [breaks.front(), breaks.back()]. All pieces share one
// priority queue, so the tolerance is spent where the error is.
template <class F>
auto integrate_pieces(F&& f, std::span<const double> breaks, const Options& opt = {}) {
  using R = decltype(f(0.0));
  std::priority_queue<detail::Panel<R>> heap;
  R total{};
  double err = 0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (breaks[i] == breaks[i + 1]) continue;
    auto [v, e, z] = detail::gk21(f, breaks[i], breaks[i + 1]);
    heap.push({breaks[i], breaks[i + 1], v, e, z, 0});
    total += v;
    err += e;
  }
  int panels = 0;
  while (err > opt.abs_tol && !heap.empty()) {
    auto worst = heap.top();
    // Every panel is at or below the worst one, which cannot improve past
    // rounding: the tolerance asked for more than double precision gives.
    if (worst.error <= worst.noise) break;
    if (worst.depth >= opt.max_depth || panels >= opt.max_panels) {
      return Result<R>{total, err, false};
    }
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    auto [lv, le, lz] = detail::gk21(f, worst.a, mid);
    auto [rv, re, rz] = detail::gk21(f, mid, worst.b);
    total += lv + rv - worst.value;
    err += le + re - worst.error;
    heap.push({worst.a, mid, lv, le, lz, worst.depth + 1});
    heap.push({mid, worst.b, rv, re, rz, worst.depth + 1});
    ++panels;
    // Recompute the running sums occasionally to shed accumulated rounding.
    if (panels % 4096 == 0) {
      auto copy = heap;
      total = R{};
      err = 0;
      while (!copy.empty()) {
        total += copy.top().value;
        err += copy.top().error;
        copy.pop();
      }
    }
  }
  return Result<R>{total, err, true};
}

template <class F>
auto integrate(F&& f, double a, double b, const Options& opt = {}) {
  const double br[2] = {a, b};
  return integrate_pieces(std::forward<F>(f), std::span<const double>(br, 2), opt);
}

template <class R>
R require(const Result<R>& r, const char* what) {
  if (!r.converged) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", r.error);
    throw numerical_error(std::string(what) + ": quadrature tolerance not reached (error estimate " + buf + ")");
  }
  return r.value;
}

}  // namespace twistderiv::quad

#endif  // TWISTDERIV_QUADRATURE_HPP
