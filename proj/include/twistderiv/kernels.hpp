#ifndef TWISTDERIV_KERNELS_HPP
#define TWISTDERIV_KERNELS_HPP

// Smooth weights and integral transforms: the dyadic bump G with its
// partitions V, V1, F, the scan weight J, the cutoff kernels W (double
// pole, for L') and W1 (single pole, for L), the Fourier-type transform
// with kernel cos + sin, and Mellin transforms.

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "twistderiv/errors.hpp"
#include "twistderiv/quadrature.hpp"
#include "twistderiv/special.hpp"

namespace twistderiv::kernels {

using cplx = std::complex<double>;
inline constexpr double pi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Bumps
// ---------------------------------------------------------------------------

// G as written: 0 below 3/4, e^16 e^{-1/(x-3/4)^2} on [3/4, 1), 1 on
// [1, 3/2], 1 - G(x/2) on (3/2, 2], 0 above 2. Continuous with a kink at
// x = 1 and x = 2 (left slope 128 resp. -64, right slope 0).
inline double g_paper(double x) {
  if (x < 0.75 || x > 2.0) return 0.0;
  if (x < 1.0) {
    const double t = x - 0.75;
    return std::exp(16.0 - 1.0 / (t * t));
  }
  if (x <= 1.5) return 1.0;
  return 1.0 - g_paper(0.5 * x);
}

// C-infinity step: 0 for t <= 0, 1 for t >= 1.
inline double smooth_step(double t) {
  if (t <= 0) return 0.0;
  if (t >= 1) return 1.0;
  const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

// Same support, plateau and G(x) + G(x/2) = 1 law as g_paper, but C-infinity.
inline double g_smooth(double x) {
  if (x < 0.75 || x > 2.0) return 0.0;
  if (x < 1.0) return smooth_step(4.0 * (x - 0.75));
  if (x <= 1.5) return 1.0;
  return 1.0 - g_smooth(0.5 * x);
}

enum class BumpTag { g_paper, g_smooth, v, v1, f, j };

struct BumpKind {
  BumpTag tag = BumpTag::g_paper;
  int H = 0;  // only for tag f

  static BumpKind paper() { return {BumpTag::g_paper, 0}; }
  static BumpKind smooth() { return {BumpTag::g_smooth, 0}; }
  static BumpKind V() { return {BumpTag::v, 0}; }
  static BumpKind V1() { return {BumpTag::v1, 0}; }
  static BumpKind F(int H) { return {BumpTag::f, H}; }
  static BumpKind J() { return {BumpTag::j, 0}; }

  std::string name() const {
    switch (tag) {
      case BumpTag::g_paper: return "G_paper";
      case BumpTag::g_smooth: return "G_smooth";
      case BumpTag::v: return "V";
      case BumpTag::v1: return "V1";
      case BumpTag::f: return "F" + std::to_string(H);
      case BumpTag::j: return "J";
    }
    return "?";
  }
};

// Default scan weight: g_smooth pulled back linearly from [3/4, 2] to
// [1/2, 2]. Nonnegative, at most 1, support [1/2, 2].
inline double j_weight(double x) {
  if (x <= 0.5 || x >= 2.0) return 0.0;
  return g_smooth(0.75 + (x - 0.5) * (5.0 / 6.0));
}

inline double eval_bump(const BumpKind& kind, double x) {
  switch (kind.tag) {
    case BumpTag::g_paper: return g_paper(x);
    case BumpTag::g_smooth: return g_smooth(x);
    case BumpTag::v: return g_paper(2 * x) + g_paper(x) + g_paper(x / 2);
    case BumpTag::v1:
      return g_paper(4 * x) + g_paper(2 * x) + g_paper(x) + g_paper(x / 2) + g_paper(x / 4);
    case BumpTag::f: {
      double s = 0, scale = 1;
      for (int h = 0; h <= kind.H; ++h, scale *= 0.5) s += g_paper(x * scale);
      return s;
    }
    case BumpTag::j: return j_weight(x);
  }
  return 0.0;
}

// A compactly supported weight on (0, inf) together with the points where
// it may fail to be smooth; transforms integrate piecewise between them.
struct Weight {
  std::function<double(double)> fn;
  std::vector<double> breaks;  // sorted; front/back are the support ends

  double operator()(double x) const { return fn(x); }
  double lo() const { return breaks.front(); }
  double hi() const { return breaks.back(); }
};

inline Weight weight_of(const BumpKind& kind) {
  auto unit = [](double s) { return std::vector<double>{0.75 * s, 1.0 * s, 1.5 * s, 2.0 * s}; };
  std::vector<double> br;
  auto add = [&](double s) {
    auto u = unit(s);
    br.insert(br.end(), u.begin(), u.end());
  };
  switch (kind.tag) {
    case BumpTag::g_paper:
    case BumpTag::g_smooth: add(1); break;
    case BumpTag::v:
      for (double s : {0.5, 1.0, 2.0}) add(s);
      break;
    case BumpTag::v1:
      for (double s : {0.25, 0.5, 1.0, 2.0, 4.0}) add(s);
      break;
    case BumpTag::f:
      for (int h = 0; h <= kind.H; ++h) add(std::ldexp(1.0, h));
      break;
    case BumpTag::j: br = {0.5, 0.8, 1.4, 2.0}; break;
  }
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  return Weight{[kind](double x) { return eval_bump(kind, x); }, std::move(br)};
}

// Left derivatives f^{(m)}(1), m = 0..order, of f(x) = exp(16 - (x-3/4)^{-2}),
// the rising piece of g_paper. Recurrence f' = g' f with
// g^{(j)}(x) = -(-1)^j (j+1)! (x-3/4)^{-(j+2)}.
inline std::vector<double> g_paper_rise_derivatives_at_one(int order) {
  const double t = 0.25;
  std::vector<double> gd(order + 2, 0.0);  // gd[j] = g^{(j)}(1), j >= 1
  double fact = 1;                          // (j+1)!
  for (int j = 1; j <= order + 1; ++j) {
    fact *= (j + 1);
    gd[j] = -((j % 2) ? -1.0 : 1.0) * fact * std::pow(t, -(j + 2));
  }
  std::vector<double> f(order + 1, 0.0);
  f[0] = 1.0;  // e^{16 - 16}
  for (int m = 0; m < order; ++m) {
    double s = 0, binom = 1;
    for (int j = 0; j <= m; ++j) {
      s += binom * gd[j + 1] * f[m - j];
      binom = binom * (m - j) / (j + 1);
    }
    f[m + 1] = s;
  }
  return f;
}

struct PartitionCheck {
  std::string identity;
  double lo = 0, hi = 0;
  std::size_t samples = 0;
  double max_deviation = 0;
  double tolerance = 0;
  bool passed = false;
};

// The dyadic partition identities on deterministic sample sets:
//   sum_{h<=H} G(x/2^h) = 1 on [1, 3 2^{H-1}] (log-uniform points),
//   V = 1 on [1/2, 3], V1 = 1 on [1/4, 6], G(x) + G(x/2) = 1 on [1, 3] (uniform grids).
inline std::vector<PartitionCheck> partition_checks(std::size_t samples = 10000, int H = 20,
                                                    std::size_t grid_points = 1000) {
  if (samples < 2 || grid_points < 2 || H < 1) throw precondition_error("partition_checks: need samples, grid >= 2 and H >= 1");
  std::vector<PartitionCheck> out;
  auto run = [&](std::string name, double lo, double hi, std::size_t count, bool log_spaced, double tol,
                 auto&& fn) {
    PartitionCheck c{std::move(name), lo, hi, count, 0.0, tol, false};
    for (std::size_t i = 0; i < count; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(count - 1);
      const double x = log_spaced ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
      c.max_deviation = std::max(c.max_deviation, std::abs(fn(std::clamp(x, lo, hi)) - 1.0));
    }
    c.passed = c.max_deviation <= tol;
    out.push_back(c);
  };
  const double top = 3.0 * std::ldexp(1.0, H - 1);
  run("F" + std::to_string(H), 1.0, top, samples, true, 1e-12, [&](double x) { return eval_bump(BumpKind::F(H), x); });
  run("V", 0.5, 3.0, grid_points, false, 0.0, [](double x) { return eval_bump(BumpKind::V(), x); });
  run("V1", 0.25, 6.0, grid_points, false, 0.0, [](double x) { return eval_bump(BumpKind::V1(), x); });
  run("G(x)+G(x/2)", 1.0, 3.0, grid_points, false, 0.0, [](double x) { return g_paper(x) + g_paper(0.5 * x); });
  return out;
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

// H-check(y) = int (cos(2 pi x y) + sin(2 pi x y)) H(x) dx.
inline double fourier_check_transform(const Weight& h, double y, double abs_tol = 1e-10) {
  quad::Options opt;
  opt.abs_tol = abs_tol;
  const double w = 2 * pi * y;
  // Subdivide so each panel sees a bounded number of oscillations.
  std::vector<double> grid;
  for (std::size_t i = 0; i + 1 < h.breaks.size(); ++i) {
    const double a = h.breaks[i], b = h.breaks[i + 1];
    const int cuts = std::max(1, static_cast<int>(std::ceil(std::abs(y) * (b - a) / 4.0)));
    for (int c = 0; c < cuts; ++c) grid.push_back(a + (b - a) * c / cuts);
  }
  grid.push_back(h.hi());
  auto r = quad::integrate_pieces(
      [&](double x) { return (std::cos(w * x) + std::sin(w * x)) * h(x); }, grid, opt);
  return quad::require(r, "fourier_check_transform");
}

// H~(s) = int_0^inf H(x) x^{s-1} dx.
inline cplx mellin(const Weight& h, cplx s, double abs_tol = 1e-10) {
  quad::Options opt;
  opt.abs_tol = abs_tol;
  // Split so each panel holds a bounded number of oscillations of x^{i Im s}.
  std::vector<double> grid;
  for (std::size_t i = 0; i + 1 < h.breaks.size(); ++i) {
    const double a = h.breaks[i], b = h.breaks[i + 1];
    const int cuts = std::max(1, static_cast<int>(std::ceil(std::abs(s.imag()) * std::log(b / a) / 8.0)));
    for (int c = 0; c < cuts; ++c) grid.push_back(a * std::pow(b / a, static_cast<double>(c) / cuts));
  }
  grid.push_back(h.hi());
  auto r = quad::integrate_pieces(
      [&](double x) -> cplx { return h(x) * std::exp((s - 1.0) * std::log(x)); }, grid, opt);
  return quad::require(r, "mellin");
}

// H-check(y) for y != 0 by the line integral
//   (1/2 pi i) int_{(1/2)} H~(1-s) Gamma(s) (cos + sgn(y) sin)(pi s / 2) (2 pi |y|)^{-s} ds.
// The integrand at -tau is the conjugate of that at tau, so twice the real
// part over tau >= 0 is taken, in blocks until a block contributes < tol.
inline double fourier_check_transform_mellin(const Weight& h, double y, double tol = 1e-10) {
  if (y == 0) throw precondition_error("fourier_check_transform_mellin: y must be nonzero");
  const double sgn = y > 0 ? 1.0 : -1.0;
  const double logy = std::log(2 * pi * std::abs(y));
  auto integrand = [&](double tau) {
    const cplx s(0.5, tau);
    const cplx z = pi * s / 2.0;
    const cplx e2 = std::exp(2.0 * cplx(0, 1) * z);  // |e2| = e^{-pi tau}
    // (cos + sgn sin)(z) = e^{-iz} [ (1 + e2)/2 + sgn (e2 - 1)/(2i) ]
    const cplx bracket = (1.0 + e2) / 2.0 + sgn * (e2 - 1.0) / cplx(0, 2);
    const cplx logpart = special::lgamma(s) - cplx(0, 1) * z - s * logy;
    return (mellin(h, 1.0 - s, tol * 1e-2) * std::exp(logpart) * bracket).real();
  };
  quad::Options opt;
  opt.abs_tol = tol * 1e-1;
  double total = 0;
  const double block = 20;
  int quiet = 0;
  for (double a = 0; quiet < 3; a += block) {
    if (a > 1e5) throw numerical_error("fourier_check_transform_mellin: no decay");
    const double part = quad::require(quad::integrate(integrand, a, a + block, opt), "mellin route");
    total += part;
    quiet = std::abs(part) < tol ? quiet + 1 : 0;
  }
  return total / pi;
}

// ---------------------------------------------------------------------------
// Cutoff kernels
// ---------------------------------------------------------------------------

// W(y) = (1/2 pi i) int_{(3)} Gamma(u + k/2)/Gamma(k/2) x^{-u} du / u^2 and
// W1(y), the same with du/u, where x = 2 pi y / sqrt(q).
struct CutoffKernel {
  int k = 2;
  double q = 1;
  quad::Options quadrature{};

  CutoffKernel() = default;
  CutoffKernel(int weight, double level, quad::Options opt = {})
      : k(weight), q(level), quadrature(opt) {
    if (weight < 2 || weight % 2) throw precondition_error("CutoffKernel: weight must be even and >= 2");
    if (!(level >= 1)) throw precondition_error("CutoffKernel: level must be >= 1");
  }

  double a() const { return 0.5 * k; }
  double x_of(double y) const { return 2 * pi * y / std::sqrt(q); }
};

// Upper regularized incomplete gamma Q(a, x); 0 past underflow.
inline double gamma_q(double a, double x) {
  if (x > a + 800) return 0.0;
  return boost::math::gamma_q(a, x);
}

// W as a function of x: int_x^inf Q(k/2, t) dt / t, integrated in u = log t.
// Each 1/u in the Mellin domain is one int_x^inf dt/t, so this is the
// iterated integral with the inner one closed in incomplete-gamma form.
inline double cutoff_w_of_x(const CutoffKernel& ker, double x) {
  if (!(x > 0)) throw precondition_error("cutoff_W: y must be positive");
  const double a = ker.a();
  const double t_hi = std::max(x, a) + 760.0;
  const double knee = a + 40.0;
  auto f = [a](double u) { return gamma_q(a, std::exp(u)); };
  const double lx = std::log(x);
  std::vector<double> br{lx};
  if (knee > x) br.push_back(std::log(knee));
  br.push_back(std::log(t_hi));
  // Past the bulk W(x) ~ Q(k/2, x)/x; scale the tolerance so the tail keeps
  // relative accuracy as well.
  const double scale = gamma_q(a, x) / std::max(1.0, x);
  if (scale == 0) return 0.0;
  quad::Options opt = ker.quadrature;
  opt.abs_tol *= std::min(1.0, scale);
  return quad::require(quad::integrate_pieces(f, br, opt), "cutoff_W");
}

inline double cutoff_w(const CutoffKernel& ker, double y) {
  if (!(y > 0)) throw precondition_error("cutoff_W: y must be positive");
  return cutoff_w_of_x(ker, ker.x_of(y));
}

// W1(y) = Q(k/2, x): the inner integral alone.
inline double cutoff_w1(const CutoffKernel& ker, double y) {
  if (!(y > 0)) throw precondition_error("cutoff_W1: y must be positive");
  return gamma_q(ker.a(), ker.x_of(y));
}

// Vertical-line evaluation at Re(u) = c of
//   (1/2 pi i) int Gamma(u + k/2)/Gamma(k/2) x^{-u} du / u^poles.
// Independent of the incomplete-gamma route; used to validate it.
inline double cutoff_vertical(const CutoffKernel& ker, double y, int poles, double c = 2.0) {
  const double x = ker.x_of(y);
  const double a = ker.a();
  const double lga = std::lgamma(a);
  const double lx = std::log(x);
  auto f = [&](double tau) {
    const cplx u(c, tau);
    const cplx v = std::exp(special::lgamma(u + a) - lga - u * lx) / std::pow(u, poles);
    return v.real();
  };
  // |Gamma(c + a + i tau)| ~ tau^{c+a-1/2} e^{-pi tau/2}; stop well past 1e-30.
  const double tau_max = 2.0 / pi * (80.0 + (c + a) * std::log(80.0 + c + a)) + 20.0;
  quad::Options opt = ker.quadrature;
  opt.abs_tol = std::min(opt.abs_tol, 1e-12);
  std::vector<double> br{0.0, 2.0, 8.0, 20.0, tau_max};
  return quad::require(quad::integrate_pieces(f, br, opt), "cutoff_vertical") / pi;
}

// Constant C3 with |W(y)| <= C3 x^{-3} for every x > 0, from the line Re(u) = 3:
//   C3 = (1/2 pi) int |Gamma(3 + k/2 + i tau)| / (Gamma(k/2) |3 + i tau|^2) d tau.
inline double decay_constant_c3(const CutoffKernel& ker) {
  const double a = ker.a();
  const double lga = std::lgamma(a);
  auto f = [&](double tau) {
    const cplx u(3.0, tau);
    return std::exp(special::lgamma(u + a).real() - lga) / std::norm(u);
  };
  const double tau_max = 2.0 / pi * (80.0 + (3 + a) * std::log(83.0 + a)) + 20.0;
  std::vector<double> br{0.0, 2.0, 8.0, 20.0, tau_max};
  quad::Options opt;
  opt.abs_tol = 1e-13;
  return quad::require(quad::integrate_pieces(f, br, opt), "decay_constant_c3") / pi;
}

// Residue of the double pole at u = 0: W(y) = psi(k/2) - log x + O(x^{min(1,k/2)}).
inline double cutoff_w_small_y_law(const CutoffKernel& ker, double y) {
  return boost::math::digamma(ker.a()) - std::log(ker.x_of(y));
}

// ---------------------------------------------------------------------------
// Cached kernel
// ---------------------------------------------------------------------------

// log F interpolated in u = log x on a uniform grid by cubic Hermite with
// the exact node derivatives (Fritsch-Carlson limited, so monotone data stay
// monotone). Below the grid the direct evaluator is used; above it F = 0.
class KernelTable {
 public:
  KernelTable() = default;

  // Node values and derivatives (d/du log F) supplied by the caller.
  KernelTable(double u_lo, double step, std::vector<double> logf, std::vector<double> dlogf,
              std::function<double(double)> direct)
      : u_lo_(u_lo), h_(step), logf_(std::move(logf)), slope_(std::move(dlogf)), direct_(std::move(direct)) {
    limit_monotone();
    u_hi_ = u_lo_ + h_ * static_cast<double>(logf_.size() - 1);
  }

  double x_lo() const { return std::exp(u_lo_); }
  double x_hi() const { return std::exp(u_hi_); }
  std::size_t nodes() const { return logf_.size(); }

  double at_log(double u) const {
    if (u < u_lo_) return direct_(std::exp(u));
    if (u >= u_hi_) return 0.0;
    const double t = (u - u_lo_) / h_;
    auto i = static_cast<std::size_t>(t);
    if (i + 1 >= logf_.size()) i = logf_.size() - 2;
    const double s = t - static_cast<double>(i);
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    const double v = h00 * logf_[i] + h10 * h_ * slope_[i] + h01 * logf_[i + 1] + h11 * h_ * slope_[i + 1];
    return std::exp(v);
  }

  double operator()(double x) const { return at_log(std::log(x)); }

 private:
  void limit_monotone() {
    for (std::size_t i = 0; i + 1 < logf_.size(); ++i) {
      const double delta = (logf_[i + 1] - logf_[i]) / h_;
      if (delta == 0) {
        slope_[i] = slope_[i + 1] = 0;
        continue;
      }
      double al = slope_[i] / delta, be = slope_[i + 1] / delta;
      if (al < 0) slope_[i] = 0, al = 0;
      if (be < 0) slope_[i + 1] = 0, be = 0;
      const double r = al * al + be * be;
      if (r > 9) {
        const double tau = 3 / std::sqrt(r);
        slope_[i] = tau * al * delta;
        slope_[i + 1] = tau * be * delta;
      }
    }
  }

  double u_lo_ = 0, u_hi_ = 0, h_ = 1;
  std::vector<double> logf_, slope_;
  std::function<double(double)> direct_;
};

struct TableGrid {
  double x_lo = 1e-7;
  double x_hi = 600.0;
  double step = 1.0 / 256;  // in log x
};

// Cached W(x). Node values by backward accumulation from x_hi of the
// panel integrals int Q(k/2, e^u) du, each by one 21-point Kronrod panel.
inline KernelTable make_w_table(const CutoffKernel& ker, TableGrid grid = {}) {
  const double a = ker.a();
  const double u_lo = std::log(grid.x_lo), u_hi = std::log(grid.x_hi);
  const auto n = static_cast<std::size_t>(std::ceil((u_hi - u_lo) / grid.step)) + 1;
  const double h = (u_hi - u_lo) / static_cast<double>(n - 1);
  std::vector<double> w(n), logw(n), dlog(n);
  w[n - 1] = cutoff_w_of_x(ker, std::exp(u_hi));
  auto f = [a](double u) { return gamma_q(a, std::exp(u)); };
  for (std::size_t i = n - 1; i-- > 0;) {
    const double ua = u_lo + h * static_cast<double>(i);
    w[i] = w[i + 1] + std::get<0>(quad::detail::gk21(f, ua, ua + h));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::exp(u_lo + h * static_cast<double>(i));
    logw[i] = std::log(w[i]);
    dlog[i] = -gamma_q(a, x) / w[i];
  }
  return KernelTable(u_lo, h, std::move(logw), std::move(dlog),
                     [ker](double x) { return cutoff_w_of_x(ker, x); });
}

// Cached W1(x) = Q(k/2, x).
inline KernelTable make_w1_table(const CutoffKernel& ker, TableGrid grid = {}) {
  const double a = ker.a();
  const double u_lo = std::log(grid.x_lo), u_hi = std::log(grid.x_hi);
  const auto n = static_cast<std::size_t>(std::ceil((u_hi - u_lo) / grid.step)) + 1;
  const double h = (u_hi - u_lo) / static_cast<double>(n - 1);
  std::vector<double> logw(n), dlog(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::exp(u_lo + h * static_cast<double>(i));
    const double qv = gamma_q(a, x);
    logw[i] = std::log(qv);
    // d/du log Q(a, e^u) = -x * x^{a-1} e^{-x} / (Gamma(a) Q)
    dlog[i] = -x * boost::math::gamma_p_derivative(a, x) / qv;
  }
  return KernelTable(u_lo, h, std::move(logw), std::move(dlog),
                     [a](double x) { return gamma_q(a, x); });
}

}  // namespace twistderiv::kernels

#endif  // TWISTDERIV_KERNELS_HPP
