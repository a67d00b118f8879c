#ifndef TWISTDERIV_NEWFORM_HPP
#define TWISTDERIV_NEWFORM_HPP

// Normalized Hecke eigenvalues lambda_f(n) of a fixed newform, from an
// elliptic curve (weight 2) or from a user-supplied a_p table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "twistderiv/arith.hpp"
#include "twistderiv/errors.hpp"
#include "twistderiv/lfunction.hpp"
#include "twistderiv/parallel.hpp"

namespace twistderiv::newform {

using arith::i64;
using arith::u64;

// y^2 + a1 xy + a3 y = x^3 + a2 x^2 + a4 x + a6
struct CurveCoefficients {
  i64 a1 = 0, a2 = 0, a3 = 0, a4 = 0, a6 = 0;

  i64 b2() const { return a1 * a1 + 4 * a2; }
  i64 b4() const { return 2 * a4 + a1 * a3; }
  i64 b6() const { return a3 * a3 + 4 * a6; }
  i64 b8() const { return a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4; }
  __int128 c4() const { return static_cast<__int128>(b2()) * b2() - 24 * static_cast<__int128>(b4()); }
  __int128 c6() const {
    const __int128 B2 = b2(), B4 = b4(), B6 = b6();
    return -B2 * B2 * B2 + 36 * B2 * B4 - 216 * B6;
  }
  __int128 discriminant() const {
    const __int128 B2 = b2(), B4 = b4(), B6 = b6(), B8 = b8();
    return -B2 * B2 * B8 - 8 * B4 * B4 * B4 - 27 * B6 * B6 + 9 * B2 * B4 * B6;
  }
};

struct ApTable {
  std::map<u64, double> ap;
};

struct NewformSpec {
  int weight = 2;
  u64 level = 1;
  int fricke_eta = 0;  // 0: determine numerically
  std::variant<CurveCoefficients, ApTable> source;
  std::map<u64, double> bad_ap;  // a_p for p | level when the source is a curve
};

inline void validate(const NewformSpec& spec) {
  if (spec.weight < 2 || spec.weight % 2) throw precondition_error("newform: weight must be even and >= 2");
  if (spec.level == 0 || spec.level % 2 == 0) throw precondition_error("newform: level must be odd");
  if (spec.fricke_eta < -1 || spec.fricke_eta > 1) throw precondition_error("newform: fricke_eta must be -1, 0 or 1");
  if (std::holds_alternative<CurveCoefficients>(spec.source) && spec.weight != 2) {
    throw precondition_error("newform: a curve source requires weight 2");
  }
}

// "p a_p" per line, '#' starts a comment.
inline ApTable parse_ap_table(std::istream& in) {
  ApTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    u64 p;
    double a;
    if (!(ls >> p)) continue;
    std::string rest;
    if (!(ls >> a) || (ls >> rest)) {
      throw data_error("ap table line " + std::to_string(lineno) + ": expected \"p a_p\"");
    }
    if (!arith::is_prime(p)) throw data_error("ap table line " + std::to_string(lineno) + ": p is not prime");
    t.ap[p] = a;
  }
  return t;
}

inline ApTable load_ap_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open ap table " + path);
  return parse_ap_table(in);
}

// ---------------------------------------------------------------------------
// Point counting
// ---------------------------------------------------------------------------

inline bool good_reduction(const CurveCoefficients& e, u64 p) {
  const __int128 d = e.discriminant();
  return d % static_cast<__int128>(p) != 0;
}

// a_p = p + 1 - #E(F_p) by enumerating every (x, y) in F_p^2. Any prime of
// good reduction, including 2 and 3; O(p^2), for small p and tests.
inline i64 ap_enumerate(const CurveCoefficients& e, u64 p) {
  if (!arith::is_prime(p)) throw precondition_error("ap_enumerate: p must be prime");
  if (!good_reduction(e, p)) throw precondition_error("ap_enumerate: p divides the discriminant");
  const i64 P = static_cast<i64>(p);
  auto md = [P](i64 v) { return ((v % P) + P) % P; };
  i64 count = 1;
  for (i64 x = 0; x < P; ++x) {
    const i64 rhs = md(md(md(x * x) * x) + md(e.a2 * md(x * x)) + md(e.a4 * x) + e.a6);
    for (i64 y = 0; y < P; ++y) {
      if (md(md(y * y) + md(e.a1 * md(x * y)) + md(e.a3 * y)) == md(rhs)) ++count;
    }
  }
  return P + 1 - count;
}

// a_p = -sum_x ((4x^3 + b2 x^2 + 2 b4 x + b6) / p) for odd p of good
// reduction: completing the square turns the point count into a sum of the
// quadratic character over the cubic's values. O(p).
inline i64 ap_point_count(const CurveCoefficients& e, u64 p) {
  if (p % 2 == 0 || !arith::is_prime(p)) throw precondition_error("ap_point_count: p must be an odd prime");
  if (!good_reduction(e, p)) throw precondition_error("ap_point_count: bad reduction at p");
  const i64 P = static_cast<i64>(p);
  auto md = [P](i64 v) { return ((v % P) + P) % P; };
  std::vector<signed char> chi(p, -1);
  chi[0] = 0;
  for (i64 y = 1; y < P; ++y) chi[md(y * y)] = 1;
  const i64 b2 = md(e.b2()), b4 = md(2 * e.b4()), b6 = md(e.b6());
  i64 s = 0;
  for (i64 x = 0; x < P; ++x) {
    const i64 f = md(md(md(md(4 * x) + b2) * x + b4) * x + b6);
    s += chi[f];
  }
  return -s;
}

namespace detail {

// Short Weierstrass y^2 = x^3 + A x + B over F_p, p >= 5, affine points.
struct ShortCurve {
  u64 p, A, B;

  struct Point {
    u64 x = 0, y = 0;
    bool inf = true;
    bool operator==(const Point&) const = default;
  };

  u64 add(u64 a, u64 b) const { return (a + b) % p; }
  u64 sub(u64 a, u64 b) const { return (a + p - b) % p; }
  u64 mul(u64 a, u64 b) const { return a * b % p; }  // p < 2^32
  u64 inv(u64 a) const {
    i64 r0 = static_cast<i64>(p), r1 = static_cast<i64>(a), s0 = 0, s1 = 1;
    while (r1) {
      const i64 q = r0 / r1;
      std::tie(r0, r1) = std::pair{r1, r0 - q * r1};
      std::tie(s0, s1) = std::pair{s1, s0 - q * s1};
    }
    return static_cast<u64>(s0 < 0 ? s0 + static_cast<i64>(p) : s0);
  }

  Point neg(const Point& P) const { return P.inf ? P : Point{P.x, (p - P.y) % p, false}; }

  Point plus(const Point& P, const Point& Q) const {
    if (P.inf) return Q;
    if (Q.inf) return P;
    u64 lam;
    if (P.x == Q.x) {
      if (add(P.y, Q.y) == 0) return {};
      lam = mul(add(mul(3, mul(P.x, P.x)), A), inv(mul(2, P.y)));
    } else {
      lam = mul(sub(Q.y, P.y), inv(sub(Q.x, P.x)));
    }
    const u64 x3 = sub(sub(mul(lam, lam), P.x), Q.x);
    return {x3, sub(mul(lam, sub(P.x, x3)), P.y), false};
  }

  Point times(Point P, u64 k) const {
    Point R;
    while (k) {
      if (k & 1) R = plus(R, P);
      P = plus(P, P);
      k >>= 1;
    }
    return R;
  }

  Point times_signed(const Point& P, i64 k) const {
    return k >= 0 ? times(P, static_cast<u64>(k)) : neg(times(P, static_cast<u64>(-k)));
  }

  u64 rhs(u64 x) const { return add(mul(add(mul(x, x), A), x), B); }
};

inline int legendre(u64 a, u64 p) {
  a %= p;
  if (a == 0) return 0;
  return arith::powmod(a, (p - 1) / 2, p) == 1 ? 1 : -1;
}

// Tonelli-Shanks; a must be a nonzero square mod odd prime p.
inline u64 sqrt_mod(u64 a, u64 p) {
  if (p % 4 == 3) return arith::powmod(a, (p + 1) / 4, p);
  u64 q = p - 1;
  int s = 0;
  while (q % 2 == 0) q /= 2, ++s;
  u64 z = 2;
  while (legendre(z, p) != -1) ++z;
  u64 m = static_cast<u64>(s), c = arith::powmod(z, q, p), t = arith::powmod(a, q, p),
      r = arith::powmod(a, (q + 1) / 2, p);
  while (t != 1) {
    u64 i = 0, tt = t;
    while (tt != 1) tt = tt * tt % p, ++i;
    u64 b = c;
    for (u64 j = 0; j + i + 1 < m; ++j) b = b * b % p;
    m = i;
    c = b * b % p;
    t = t * c % p;
    r = r * b % p;
  }
  return r;
}

// All t in [-L, L] with (p + 1 - t) P = O, by baby steps jP (|j| <= m) and
// giant steps (p+1)P - i(2m+1)P.
inline std::vector<i64> trace_candidates(const ShortCurve& E, const ShortCurve::Point& P, i64 L) {
  using Point = ShortCurve::Point;
  const i64 m = static_cast<i64>(std::ceil(std::sqrt(static_cast<double>(L)))) + 1;
  std::vector<std::pair<u64, i64>> baby;  // (x(jP), j), j = 1..m
  Point J;
  for (i64 j = 1; j <= m; ++j) {
    J = E.plus(J, P);
    if (J.inf) {
      // ord(P) = j is small: every t with p + 1 - t = 0 mod j qualifies.
      std::vector<i64> out;
      const i64 p1 = static_cast<i64>(E.p) + 1;
      for (i64 t = -L; t <= L; ++t) {
        if (((p1 - t) % j + j) % j == 0) out.push_back(t);
      }
      return out;
    }
    baby.emplace_back(J.x, j);
  }
  std::sort(baby.begin(), baby.end());
  const Point step = E.times(P, static_cast<u64>(2 * m + 1));
  const i64 imax = L / (2 * m + 1) + 1;
  Point G = E.plus(E.times(P, E.p + 1), E.times_signed(step, imax));  // i = -imax
  std::vector<i64> out;
  const Point negstep = E.neg(step);
  for (i64 i = -imax; i <= imax; ++i) {
    const i64 base = i * (2 * m + 1);
    if (G.inf) {
      if (base >= -L && base <= L) out.push_back(base);
    } else {
      auto it = std::lower_bound(baby.begin(), baby.end(), std::pair<u64, i64>{G.x, 0});
      for (; it != baby.end() && it->first == G.x; ++it) {
        const Point jp = E.times(P, static_cast<u64>(it->second));
        for (const i64 t : {base + it->second, base - it->second}) {
          const bool hit = (t == base + it->second) ? jp == G : E.neg(jp) == G;
          if (hit && t >= -L && t <= L) out.push_back(t);
        }
      }
    }
    G = E.plus(G, negstep);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

// a_p by Shanks-Mestre baby-step giant-step, O(p^{1/4}) group operations.
// Candidates from random points on E and on its quadratic twist are
// intersected until a single trace remains; falls back to the O(p) count
// if that does not happen.
inline i64 ap_bsgs(const CurveCoefficients& e, u64 p) {
  if (p < 5 || !arith::is_prime(p)) throw precondition_error("ap_bsgs: p must be a prime >= 5");
  if (p >= (u64{1} << 32)) throw precondition_error("ap_bsgs: p must be below 2^32");
  if (!good_reduction(e, p)) throw precondition_error("ap_bsgs: bad reduction at p");
  auto md = [p](__int128 v) {
    const __int128 P = p;
    return static_cast<u64>(((v % P) + P) % P);
  };
  detail::ShortCurve E{p, md(-27 * e.c4()), md(-54 * e.c6())};
  u64 g = 2;
  while (detail::legendre(g, p) != -1) ++g;
  const u64 g2 = g * g % p;
  detail::ShortCurve T{p, E.A * g2 % p, E.B * (g2 * g % p) % p};

  const i64 L = static_cast<i64>(std::floor(2 * std::sqrt(static_cast<double>(p))));
  std::mt19937_64 rng(p);
  std::vector<i64> alive;
  bool first = true;
  auto random_point = [&](const detail::ShortCurve& C) {
    for (;;) {
      const u64 x = rng() % p;
      const u64 r = C.rhs(x);
      if (r == 0) return detail::ShortCurve::Point{x, 0, false};
      if (detail::legendre(r, p) == 1) return detail::ShortCurve::Point{x, detail::sqrt_mod(r, p), false};
    }
  };
  for (int attempt = 0; attempt < 24; ++attempt) {
    const bool twist = attempt % 2 == 1;
    const auto& C = twist ? T : E;
    auto cand = detail::trace_candidates(C, random_point(C), L);
    if (twist) {
      for (auto& t : cand) t = -t;
      std::sort(cand.begin(), cand.end());
    }
    if (first) {
      alive = std::move(cand);
      first = false;
    } else {
      std::vector<i64> keep;
      std::set_intersection(alive.begin(), alive.end(), cand.begin(), cand.end(), std::back_inserter(keep));
      alive = std::move(keep);
    }
    if (alive.size() == 1) return alive.front();
  }
  return ap_point_count(e, p);
}

// ---------------------------------------------------------------------------
// Eigenvalue table
// ---------------------------------------------------------------------------

struct EigenvalueTable {
  NewformSpec spec;
  std::uint32_t bound = 0;
  std::vector<double> values;  // values[n] = lambda_f(n), values[0] = 0

  double operator[](std::size_t n) const { return values[n]; }
  std::size_t size() const { return values.size(); }
};

inline constexpr u64 bsgs_threshold = 2000;

inline double ap_for_prime(const NewformSpec& spec, u64 p) {
  if (spec.level % p == 0) {
    if (auto it = spec.bad_ap.find(p); it != spec.bad_ap.end()) return it->second;
    if (const auto* t = std::get_if<ApTable>(&spec.source)) {
      if (auto it = t->ap.find(p); it != t->ap.end()) return it->second;
    }
    throw data_error("missing a_p for bad prime p = " + std::to_string(p) +
                     " (supply bad_ap=" + std::to_string(p) + ":value)");
  }
  if (const auto* t = std::get_if<ApTable>(&spec.source)) {
    auto it = t->ap.find(p);
    if (it == t->ap.end()) throw data_error("a_p table has no entry for p = " + std::to_string(p));
    return it->second;
  }
  const auto& curve = std::get<CurveCoefficients>(spec.source);
  if (!good_reduction(curve, p)) {
    throw data_error("curve model has bad reduction at p = " + std::to_string(p) +
                     " which does not divide the level; use a minimal model");
  }
  if (p < 5) return static_cast<double>(ap_enumerate(curve, p));
  if (p < bsgs_threshold) return static_cast<double>(ap_point_count(curve, p));
  return static_cast<double>(ap_bsgs(curve, p));
}

// Fill lambda_f(1..N): lambda(p) = a_p / p^{(k-1)/2}, prime powers by
// lambda(p^{j+1}) = lambda(p) lambda(p^j) - [p does not divide q] lambda(p^{j-1}),
// everything else by multiplicativity off the smallest prime factor.
inline EigenvalueTable lambda_table(const NewformSpec& spec, std::uint32_t N, const WorkerPool& pool = WorkerPool(1)) {
  validate(spec);
  if (N < 1) throw precondition_error("lambda_table: N must be >= 1");
  arith::PrimeSieve sieve(N);
  const auto& primes = sieve.primes();
  const double shift = 0.5 * (spec.weight - 1);
  const auto lam_p = pool.map(primes.size(), [&](std::size_t i) {
    const u64 p = primes[i];
    return ap_for_prime(spec, p) / std::pow(static_cast<double>(p), shift);
  });
  EigenvalueTable tab{spec, N, std::vector<double>(N + 1, 0.0)};
  auto& v = tab.values;
  v[1] = 1.0;
  std::size_t next_prime = 0;
  for (std::uint32_t n = 2; n <= N; ++n) {
    const std::uint32_t p = sieve.spf(n);
    if (p == n) {
      v[n] = lam_p[next_prime++];
      continue;
    }
    std::uint32_t m = n, pe = 1;
    while (m % p == 0) m /= p, pe *= p;
    if (m == 1) {
      const double prev = v[n / p];
      const double prev2 = (n / p == p) ? 1.0 : v[n / p / p];
      v[n] = v[p] * prev - (spec.level % p ? prev2 : 0.0);
    } else {
      v[n] = v[pe] * v[m];
    }
  }
  return tab;
}

// ---------------------------------------------------------------------------
// Fricke sign
// ---------------------------------------------------------------------------

struct FrickeResiduals {
  double plus;   // residual under eta = +1
  double minus;  // residual under eta = -1
};

// Residual of the untwisted functional equation under each eta: the
// completed value at s = 0.6 and s = 0.75 computed with splits t0 = 1 and
// t0 in {1.15, 1.3}; the largest discrepancy is reported.
inline FrickeResiduals fricke_residuals(const EigenvalueTable& table) {
  const auto& spec = table.spec;
  const double A = std::sqrt(static_cast<double>(spec.level)) / (2 * std::numbers::pi);
  const double c = 0.5 * (spec.weight - 1);
  const int ik = (spec.weight / 2) % 2 ? -1 : 1;
  std::span<const double> coeffs(table.values);
  auto residual = [&](int eta) {
    const int omega = ik * eta;
    double worst = 0;
    for (double s : {0.6, 0.75}) {
      const double base = lfunction::completed_value(coeffs, {A, c, omega, 1.0}, s);
      for (double t0 : {1.15, 1.3}) {
        const double other = lfunction::completed_value(coeffs, {A, c, omega, t0}, s);
        worst = std::max(worst, std::abs(base - other));
      }
    }
    return worst;
  };
  return {residual(+1), residual(-1)};
}

inline int determine_fricke_sign(const EigenvalueTable& table) {
  if (table.spec.fricke_eta != 0) return table.spec.fricke_eta;
  const double need = 50 * std::sqrt(static_cast<double>(table.spec.level));
  if (table.bound < need) throw data_error("determine_fricke_sign: eigenvalue table shorter than 50 sqrt(q)");
  const auto r = fricke_residuals(table);
  if (r.plus < 1e-9 && r.minus > 1e-2) return +1;
  if (r.minus < 1e-9 && r.plus > 1e-2) return -1;
  std::ostringstream msg;
  msg << "determine_fricke_sign: ambiguous residuals (eta=+1: " << r.plus << ", eta=-1: " << r.minus
      << "); the eigenvalue source does not satisfy a functional equation";
  throw data_error(msg.str());
}

// Spec, eigenvalues and resolved Fricke sign bundled together.
struct Newform {
  EigenvalueTable table;
  int eta = 0;

  const NewformSpec& spec() const { return table.spec; }
  int weight() const { return table.spec.weight; }
  u64 level() const { return table.spec.level; }
};

inline Newform load_newform(const NewformSpec& spec, std::uint32_t N, const WorkerPool& pool = WorkerPool(1)) {
  const auto need = static_cast<std::uint32_t>(std::ceil(50 * std::sqrt(static_cast<double>(spec.level))));
  Newform f{lambda_table(spec, std::max(N, need), pool), 0};
  f.eta = determine_fricke_sign(f.table);
  return f;
}

}  // namespace twistderiv::newform

#endif  // TWISTDERIV_NEWFORM_HPP
