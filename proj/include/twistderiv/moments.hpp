#ifndef TWISTDERIV_MOMENTS_HPP
#define TWISTDERIV_MOMENTS_HPP

// Family scans over D = 8d, d odd squarefree with X/2 <= 8d <= 2X:
// smoothed first and second moments of L'(1/2), non-vanishing counts with
// the Cauchy-Schwarz lower bound, and brute-force large-sieve diagnostics.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "twistderiv/arith.hpp"
#include "twistderiv/central_values.hpp"
#include "twistderiv/errors.hpp"
#include "twistderiv/kernels.hpp"
#include "twistderiv/newform.hpp"
#include "twistderiv/parallel.hpp"

namespace twistderiv::moments {

using arith::i64;
using arith::u64;
using central::TwistPoint;

struct MomentRecord {
  double X = 0;
  u64 family_size = 0;
  u64 n_omega_minus = 0;
  u64 n_omega_plus = 0;
  double S1 = 0;              // sum over omega = -1 of L' J(8d/X)
  double S2 = 0;              // sum over omega = -1 of L'^2 J(8d/X)
  double ratio_log3 = 0;      // S2 / (X log^3 X)
  double cs_lower_bound = 0;  // S1^2 / S2
  u64 N_X = 0;                // omega = -1 members with |L'| > vanish_eps
  double weight_nonvanishing = 0;
  double max_tail_bound = 0;
  // omega = +1 aggregates, present when even members were evaluated
  double S1_plus = 0;     // sum of L' (by the relation) J
  double S2_plus = 0;     // sum of L'^2 J
  double S2_plus_L = 0;   // sum of L(1/2)^2 J
  double wall_seconds = 0;
};

struct ScanOptions {
  kernels::BumpKind J = kernels::BumpKind::J();
  bool with_even = true;
  double vanish_eps = 1e-3;
  double oracle_tol = 1e-4;
};

// Smallest admissible vanish_eps: ten times the larger of the worst tail
// bound and the oracle agreement tolerance.
inline double certified_floor(double max_tail, double oracle_tol) { return 10 * (max_tail + oracle_tol); }

inline std::vector<TwistPoint> scan_points(const central::CentralValueEngine& eng, double X, bool with_even,
                                           const WorkerPool& pool) {
  const auto fam = arith::enumerate_family(X, eng.form().level());
  const u64 need = eng.default_trunc(8 * (fam.members.empty() ? 1 : fam.members.back()));
  if (need > eng.capacity()) throw data_error("eigenvalue table too short: need length " + std::to_string(need));
  return pool.map(fam.members.size(), [&](std::size_t i) { return eng.evaluate(fam.members[i], with_even); });
}

// Fixed-order reduction of one scan row; also used to recompute a row
// from persisted points.
inline MomentRecord reduce_points(double X, const std::vector<TwistPoint>& pts, const ScanOptions& opt) {
  MomentRecord r;
  r.X = X;
  r.family_size = pts.size();
  for (const auto& p : pts) {
    const double w = kernels::eval_bump(opt.J, static_cast<double>(p.D) / X);
    r.max_tail_bound = std::max(r.max_tail_bound, p.tail_bound);
    if (p.omega == -1) {
      ++r.n_omega_minus;
      const double v = p.lprime.value_or(0.0);
      r.S1 += v * w;
      r.S2 += v * v * w;
      if (std::abs(v) > opt.vanish_eps) {
        ++r.N_X;
        r.weight_nonvanishing += w;
      }
    } else {
      ++r.n_omega_plus;
      if (p.lvalue) {
        const double v = p.lprime.value_or(0.0), L = *p.lvalue;
        r.S1_plus += v * w;
        r.S2_plus += v * v * w;
        r.S2_plus_L += L * L * w;
      }
    }
  }
  const double lx = std::log(X);
  r.ratio_log3 = r.S2 / (X * lx * lx * lx);
  r.cs_lower_bound = r.S2 > 0 ? r.S1 * r.S1 / r.S2 : 0.0;
  return r;
}

inline void check_vanish_eps(const ScanOptions& opt, double max_tail) {
  const double floor = certified_floor(max_tail, opt.oracle_tol);
  if (!(opt.vanish_eps >= floor)) {
    std::ostringstream msg;
    msg << "vanish_eps " << opt.vanish_eps << " is below the certified floor " << floor;
    throw precondition_error(msg.str());
  }
}

struct ScanResult {
  std::vector<MomentRecord> records;
  std::vector<std::vector<TwistPoint>> points;  // per X, d ascending
};

inline ScanResult second_moment_scan(const central::CentralValueEngine& eng, const std::vector<double>& X_grid,
                                     const ScanOptions& opt, const WorkerPool& pool) {
  for (std::size_t i = 0; i < X_grid.size(); ++i) {
    if (!(X_grid[i] >= 16)) throw precondition_error("second_moment_scan: every X must be at least 16");
    if (i && !(X_grid[i] > X_grid[i - 1])) throw precondition_error("second_moment_scan: X grid must increase");
  }
  ScanResult out;
  for (double X : X_grid) {
    const auto t0 = std::chrono::steady_clock::now();
    auto pts = scan_points(eng, X, opt.with_even, pool);
    MomentRecord r = reduce_points(X, pts, opt);
    check_vanish_eps(opt, r.max_tail_bound);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.records.push_back(r);
    out.points.push_back(std::move(pts));
  }
  return out;
}

// Sum of L'(1/2) J(8d/X) over omega = -1, plus the omega = +1 members
// (L' by the relation) when include_even is set.
inline double first_moment(const central::CentralValueEngine& eng, double X, const ScanOptions& opt,
                           const WorkerPool& pool, bool include_even = false) {
  const auto pts = scan_points(eng, X, include_even, pool);
  const auto r = reduce_points(X, pts, opt);
  return include_even ? r.S1 + r.S1_plus : r.S1;
}

struct NonvanishingResult {
  u64 N_X = 0;
  double cs_lower_bound = 0;
  double normalized = 0;  // N_X log X / X
};

inline NonvanishingResult nonvanishing_count(const central::CentralValueEngine& eng, double X, const ScanOptions& opt,
                                             const WorkerPool& pool) {
  // Cheap check first: the tail floor cannot go below the oracle term.
  check_vanish_eps(opt, 0.0);
  const auto pts = scan_points(eng, X, false, pool);
  const auto r = reduce_points(X, pts, opt);
  check_vanish_eps(opt, r.max_tail_bound);
  return {r.N_X, r.cs_lower_bound, static_cast<double>(r.N_X) * std::log(X) / X};
}

// ---------------------------------------------------------------------------
// Per-point persistence
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* points_header = "X,d,D,omega,weight,lprime,lvalue,trunc_N,tail_bound";

inline void write_points_csv(std::ostream& os, double X, const std::vector<TwistPoint>& pts, const ScanOptions& opt) {
  for (const auto& p : pts) {
    const double w = kernels::eval_bump(opt.J, static_cast<double>(p.D) / X);
    os << format_double(X) << ',' << p.d << ',' << p.D << ',' << p.omega << ',' << format_double(w) << ','
       << (p.lprime ? format_double(*p.lprime) : "") << ',' << (p.lvalue ? format_double(*p.lvalue) : "") << ','
       << p.trunc_N << ',' << format_double(p.tail_bound) << '\n';
  }
}

// Rows of a points file grouped by X in file order.
inline std::vector<std::pair<double, std::vector<TwistPoint>>> read_points_csv(std::istream& in) {
  std::vector<std::pair<double, std::vector<TwistPoint>>> out;
  std::string line;
  if (!std::getline(in, line) || line != points_header) throw data_error("points file: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 9) throw data_error("points file: expected 9 columns in '" + line + "'");
    const double X = std::stod(f[0]);
    TwistPoint p;
    p.d = std::stoull(f[1]);
    p.D = std::stoll(f[2]);
    p.omega = std::stoi(f[3]);
    if (!f[5].empty()) p.lprime = std::stod(f[5]);
    if (!f[6].empty()) p.lvalue = std::stod(f[6]);
    p.trunc_N = std::stoull(f[7]);
    p.tail_bound = std::stod(f[8]);
    if (out.empty() || out.back().first != X) out.emplace_back(X, std::vector<TwistPoint>{});
    out.back().second.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Large-sieve diagnostics
// ---------------------------------------------------------------------------

struct SieveDiagnostic {
  double lhs = 0;
  double bound_shape = 0;
  double ratio = 0;
  u64 terms = 0;  // number of outer summands
};

namespace detail {

// sum_n lambda(n) n^{-1/2-it} (m/n) G(n/N) over the support of G, optionally
// restricted to (n, ell) = 1.
inline std::complex<double> twisted_sum(const newform::EigenvalueTable& tab, i64 m, u64 N, double t,
                                        const kernels::Weight& G, u64 ell = 1) {
  const auto lo = static_cast<u64>(std::max(1.0, std::floor(G.lo() * static_cast<double>(N))));
  const auto hi = static_cast<u64>(std::ceil(G.hi() * static_cast<double>(N)));
  std::complex<double> s = 0;
  for (u64 n = lo; n <= hi; ++n) {
    const double g = G(static_cast<double>(n) / static_cast<double>(N));
    if (g == 0 || tab[n] == 0) continue;
    if (ell > 1 && std::gcd(n, ell) != 1) continue;
    const int chi = arith::kronecker(m, n);
    if (chi == 0) continue;
    const double ln = std::log(static_cast<double>(n));
    s += chi * g * tab[n] / std::sqrt(static_cast<double>(n)) * std::polar(1.0, -t * ln);
  }
  return s;
}

inline void require_table(const newform::EigenvalueTable& tab, const kernels::Weight& G, u64 N) {
  const auto hi = static_cast<u64>(std::ceil(G.hi() * static_cast<double>(N)));
  if (tab.size() <= hi) throw data_error("eigenvalue table too short: need length " + std::to_string(hi));
}

}  // namespace detail

// Sum over fundamental discriminants m with M <= |m| <= 2M of
// |sum_n lambda(n) n^{-1/2-it} (m/n) G(n/N)|^2, against the shape
// (1+|t|)^2 (M + N log(2 + N/M)).
inline SieveDiagnostic largesieve_diagnostic(const newform::EigenvalueTable& tab, u64 M, u64 N, double t,
                                             const kernels::BumpKind& G_kind, const WorkerPool& pool) {
  if (M < 1 || N < 1 || M > 10'000 || N > 10'000) throw precondition_error("largesieve_diagnostic: need 1 <= M, N <= 10^4");
  const auto G = kernels::weight_of(G_kind);
  detail::require_table(tab, G, N);
  std::vector<i64> ms;
  for (i64 a = static_cast<i64>(M); a <= static_cast<i64>(2 * M); ++a) {
    for (i64 m : {-a, a}) {
      if (arith::is_fundamental_discriminant(m)) ms.push_back(m);
    }
  }
  const auto parts = pool.map(ms.size(), [&](std::size_t i) { return std::norm(detail::twisted_sum(tab, ms[i], N, t, G)); });
  SieveDiagnostic r;
  for (double v : parts) r.lhs += v;
  r.terms = ms.size();
  const double Md = static_cast<double>(M), Nd = static_cast<double>(N), tt = 1 + std::abs(t);
  r.bound_shape = tt * tt * (Md + Nd * std::log(2 + Nd / Md));
  r.ratio = r.lhs / r.bound_shape;
  return r;
}

// Sum over odd d <= Y of |sum_{(n, ell)=1} lambda(n) n^{-1/2-it} (8d/n) G(n/N)|^2
// against tau(ell)^5 Y (1+|t|)^3 log(2+|t|).
inline SieveDiagnostic coprime_largesieve_diagnostic(const newform::EigenvalueTable& tab, u64 Y, u64 N, double t,
                                                     u64 ell, const kernels::BumpKind& G_kind,
                                                     const WorkerPool& pool) {
  if (Y < 1 || N < 1 || Y > 10'000 || N > 10'000 || ell < 1) {
    throw precondition_error("coprime_largesieve_diagnostic: need 1 <= Y, N <= 10^4 and ell >= 1");
  }
  const auto G = kernels::weight_of(G_kind);
  detail::require_table(tab, G, N);
  const std::size_t count = (Y + 1) / 2;
  const auto parts = pool.map(count, [&](std::size_t i) {
    const i64 d = static_cast<i64>(2 * i + 1);
    return std::norm(detail::twisted_sum(tab, 8 * d, N, t, G, ell));
  });
  SieveDiagnostic r;
  for (double v : parts) r.lhs += v;
  r.terms = count;
  const double tau = static_cast<double>(arith::multiplicative_stats(ell).tau);
  const double tt = 1 + std::abs(t);
  r.bound_shape = std::pow(tau, 5) * static_cast<double>(Y) * tt * tt * tt * std::log(2 + std::abs(t));
  r.ratio = r.lhs / r.bound_shape;
  return r;
}

struct SieveGridRow {
  u64 M = 0, N = 0;
  double t = 0;
  SieveDiagnostic diag;
};

struct SieveGridReport {
  std::vector<SieveGridRow> rows;
  double max_ratio = 0;
  double max_t_growth = 0;  // max over (M, N) and t != 0 of ratio(t) / ratio(0) / (1+|t|)^2
  bool finite = true;
  bool shape_ok = true;     // every ratio(t)/ratio(0) <= margin (1+|t|)^2
};

inline SieveGridReport largesieve_grid(const newform::EigenvalueTable& tab, const std::vector<u64>& Ms,
                                       const std::vector<u64>& Ns, const std::vector<double>& ts,
                                       const kernels::BumpKind& G, const WorkerPool& pool, double margin = 10) {
  SieveGridReport rep;
  for (u64 M : Ms) {
    for (u64 N : Ns) {
      double base = std::numeric_limits<double>::quiet_NaN();
      for (double t : ts) {
        const auto d = largesieve_diagnostic(tab, M, N, t, G, pool);
        rep.rows.push_back({M, N, t, d});
        rep.finite = rep.finite && std::isfinite(d.ratio);
        rep.max_ratio = std::max(rep.max_ratio, d.ratio);
        if (t == 0) base = d.ratio;
      }
      if (!(base > 0)) continue;
      for (const auto& row : rep.rows) {
        if (row.M != M || row.N != N || row.t == 0) continue;
        const double tt = 1 + std::abs(row.t);
        const double growth = row.diag.ratio / base;
        rep.max_t_growth = std::max(rep.max_t_growth, growth / (tt * tt));
        if (!(growth <= margin * tt * tt)) rep.shape_ok = false;
      }
    }
  }
  return rep;
}

}  // namespace twistderiv::moments

#endif  // TWISTDERIV_MOMENTS_HPP
