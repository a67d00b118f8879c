// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "twistderiv/cli.hpp"

using namespace twistderiv;
using arith::i64;
using arith::u64;
namespace fs = std::filesystem;

namespace {

const std::string form_path = std::string(TWISTDERIV_DATA_DIR) + "/forms/11a.form";
const fs::path out_root = TWISTDERIV_SCRATCH_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Header-keyed rows of a plain CSV (no quoting).
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::vector<std::string> head;
  std::vector<std::map<std::string, std::string>> rows;
  if (!std::getline(in, line)) return rows;
  head = cli::detail::split(line, ',');
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = cli::detail::split(line, ',');
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < head.size() && i < cells.size(); ++i) row[head[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

double real(const std::map<std::string, std::string>& row, const std::string& key) { return std::stod(row.at(key)); }

std::ostringstream run_log;

int run_command(const std::string& command, std::vector<cli::Setting> settings, const fs::path& dir) {
  settings.emplace_back("out_dir", dir.string());
  std::ostringstream err;
  int code = 2;
  try {
    code = cli::run(cli::resolve(command, settings), {&run_log, &err});
  } catch (const std::exception& e) {
    err << e.what();
  }
  if (!err.str().empty()) std::fprintf(stderr, "%s: %s", command.c_str(), err.str().c_str());
  return code;
}

newform::NewformSpec curve_11a() { return cli::load_form(form_path).spec; }

Outcome gauss_criterion() {
  const auto dir = out_root / "gauss";
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run_command("gauss-verify", {}, dir);
  const double secs = elapsed(t0);
  double worst = 0;
  std::size_t rows = 0;
  for (const auto& r : read_csv(dir / "gauss_verify.csv")) {
    worst = std::max(worst, real(r, "abs_err") / real(r, "n"));
    ++rows;
  }
  // odd n <= 3000 and k in [-50, 50]
  const bool pass = code == 0 && rows == 1500u * 101u && worst <= 1e-9 && secs <= 120;
  return {pass, std::to_string(rows) + " sums, max abs_err/n " + num(worst) + ", " + num(secs) + " s"};
}

Outcome poisson_criterion() {
  const auto dir = out_root / "poisson";
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run_command("poisson-verify", {}, dir);
  const double secs = elapsed(t0);
  double worst = 0;
  std::size_t rows = 0;
  for (const char* bump : {"G_paper", "G_smooth"}) {
    for (const auto& r : read_csv(dir / (std::string("poisson_verify_") + bump + ".csv"))) {
      worst = std::max(worst, real(r, "residual"));
      ++rows;
    }
  }
  const bool pass = code == 0 && rows == 2u * 50u * 2u && worst <= 1e-6 && secs <= 300;
  return {pass, std::to_string(rows) + " cases, max residual " + num(worst) + ", " + num(secs) + " s"};
}

Outcome partition_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = kernels::partition_checks(10000, 20, 1000);
  const double secs = elapsed(t0);
  double f20 = INFINITY, v = INFINITY;
  for (const auto& c : checks) {
    if (c.identity == "F20" && c.lo == 1.0 && c.hi == 3.0 * 524288.0 && c.samples == 10000) f20 = c.max_deviation;
    if (c.identity == "V") v = c.max_deviation;
  }
  const int code = run_command("partition-verify", {}, out_root / "partition");
  const bool pass = code == 0 && f20 <= 1e-12 && v == 0.0 && secs <= 1.0;
  return {pass, "F20 deviation " + num(f20) + ", V deviation " + num(v) + ", " + num(secs) + " s"};
}

Outcome kernel_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  const kernels::CutoffKernel ker(2, 11.0);
  double route = 0, law = 0, cubic = 0;
  bool ok = true;
  for (double y : {0.1, 1.0, 10.0}) {
    const double d = std::abs(kernels::cutoff_vertical(ker, y, 2) - kernels::cutoff_w(ker, y));
    route = std::max(route, d);
    ok = ok && d <= 1e-9;
  }
  for (double y : {1e-3, 1e-6}) {
    const double x = ker.x_of(y);
    const double d = std::abs(kernels::cutoff_w(ker, y) - kernels::cutoff_w_small_y_law(ker, y));
    law = std::max(law, d / x);
    ok = ok && d <= x;
  }
  {
    const double x = ker.x_of(1e3);
    const double bound = kernels::decay_constant_c3(ker) * std::pow(x, -3.0);
    cubic = std::abs(kernels::cutoff_w(ker, 1e3));
    ok = ok && cubic <= bound && std::isfinite(bound);
  }
  const double secs = elapsed(t0);
  return {ok && secs <= 10, "route gap " + num(route) + ", law gap/x " + std::to_string(law) + ", |W(1e3)| " + num(cubic) + ", " +
                                num(secs) + " s"};
}

Outcome eigenvalue_criterion() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = curve_11a();
  const auto& curve = std::get<newform::CurveCoefficients>(spec.source);
  constexpr std::uint32_t N = 1'000'000;
  const auto tab = newform::lambda_table(spec, N);

  // Divisor counts by a plain sieve over multiples.
  std::vector<std::uint32_t> tau(N + 1, 0);
  for (std::uint32_t d = 1; d <= N; ++d) {
    for (std::uint32_t m = d; m <= N; m += d) ++tau[m];
  }
  std::uint32_t deligne_bad = 0;
  for (std::uint32_t n = 1; n <= N; ++n) deligne_bad += std::abs(tab[n]) > tau[n] + 1e-9;

  // Traces by counting points, independent of the table's BSGS route.
  std::map<u64, i64> ap;
  std::uint32_t hasse_bad = 0;
  for (u64 p = 2; p <= 10000; ++p) {
    if (!arith::is_prime(p)) continue;
    ap[p] = p == 11 ? 1 : p == 2 ? newform::ap_enumerate(curve, p) : newform::ap_point_count(curve, p);
    hasse_bad += std::abs(static_cast<double>(ap[p])) > 2 * std::sqrt(static_cast<double>(p));
  }

  // Direct: factor n, Hecke recursion on each prime power, multiply.
  double sieve_gap = 0;
  for (u64 n = 1; n <= 10000; ++n) {
    double v = 1;
    for (const auto& pp : arith::factorize(n).factors) {
      const double lp = static_cast<double>(ap[pp.prime]) / std::sqrt(static_cast<double>(pp.prime));
      double prev = 1, cur = lp;
      for (int j = 1; j < pp.exponent; ++j) {
        const double next = lp * cur - (pp.prime == 11 ? 0.0 : prev);
        prev = cur;
        cur = next;
      }
      v *= cur;
    }
    sieve_gap = std::max(sieve_gap, std::abs(v - tab[n]));
  }
  const double secs = elapsed(t0);
  const bool pass = deligne_bad == 0 && hasse_bad == 0 && sieve_gap <= 1e-12 && secs <= 120;
  return {pass, "Deligne violations " + std::to_string(deligne_bad) + ", Hasse violations " + std::to_string(hasse_bad) +
                    ", sieve-vs-direct " + num(sieve_gap) + ", " + num(secs) + " s"};
}

struct CentralFixture {
  newform::Newform form = newform::load_newform(curve_11a(), 2 * 50 * 1600 + 10);
  central::CentralValueEngine engine{form, 1600, {}, 2 * 50 * 1600};
};

// Every step-th member of the sign class, up to count of them.
std::vector<i64> sample_discriminants(const CentralFixture& c, int sign, std::size_t count) {
  std::vector<i64> all;
  for (u64 d : arith::enumerate_family(800, 11).members) {
    const i64 D = static_cast<i64>(8 * d);
    if (c.engine.omega(D) == sign) all.push_back(D);
  }
  std::vector<i64> out;
  if (all.empty()) return out;
  const std::size_t step = std::max<std::size_t>(1, all.size() / count);
  for (std::size_t i = 0; i < all.size() && out.size() < count; i += step) out.push_back(all[i]);
  return out;
}

Outcome oracle_criterion(const CentralFixture& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto Ds = sample_discriminants(c, -1, 5);
  double dprime = 0, dvalue = 0;
  std::string list;
  for (i64 D : Ds) {
    const auto o = central::finite_difference_oracle(c.form, D);
    dprime = std::max(dprime, std::abs(c.engine.lprime_central(D).value - o.lprime));
    dvalue = std::max(dvalue, std::abs(o.lvalue));
    list += (list.empty() ? "" : ",") + std::to_string(D);
  }
  const double secs = elapsed(t0);
  const bool pass = Ds.size() == 5 && dprime <= 1e-4 && dvalue <= 1e-6 && secs <= 1800;
  return {pass, "D in {" + list + "}: max |L' diff| " + num(dprime) + ", max |L(1/2)| " + num(dvalue) + ", " +
                    num(secs) + " s"};
}

Outcome relation_criterion(const CentralFixture& c) {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t positives = 0, nonzero = 0;
  for (u64 d : arith::enumerate_family(1e4, 11).members) {
    const i64 D = static_cast<i64>(8 * d);
    if (c.engine.omega(D) != 1) continue;
    ++positives;
    const auto v = c.engine.lprime_central(D);
    nonzero += !(v.value == 0.0 && v.tail_bound == 0.0);
  }
  const auto Ds = sample_discriminants(c, 1, 2);
  double gap = 0;
  std::string list;
  for (i64 D : Ds) {
    const auto o = central::finite_difference_oracle(c.form, D);
    gap = std::max(gap, std::abs(c.engine.lprime_from_relation(D).value - o.lprime));
    list += (list.empty() ? "" : ",") + std::to_string(D);
  }
  const double secs = elapsed(t0);
  const bool pass = positives > 0 && nonzero == 0 && Ds.size() == 2 && gap <= 1e-4 && secs <= 1800;
  return {pass, std::to_string(positives) + " omega=+1 members, " + std::to_string(nonzero) + " nonzero; relation at D in {" +
                    list + "} off by " + num(gap) + ", " + num(secs) + " s"};
}

const std::vector<double> scan_grid{1000, 2000, 4000, 8000, 16000, 32000};

Outcome growth_criterion(std::vector<std::map<std::string, std::string>>& rows) {
  const auto dir = out_root / "scan";
  std::string grid;
  for (double X : scan_grid) grid += (grid.empty() ? "" : ",") + std::to_string(static_cast<long>(X));
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run_command("scan-moment", {{"form", form_path}, {"X_grid", grid}}, dir);
  const double secs = elapsed(t0);
  rows = read_csv(dir / "scan_moment.csv");
  if (code != 0 || rows.size() != scan_grid.size()) return {false, "scan exited " + std::to_string(code)};
  bool pass = true;
  std::string detail;
  std::size_t checked = 0;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const double X = real(rows[i], "X"), X2 = real(rows[i + 1], "X");
    if (X2 != 2 * X) continue;
    const double ratio = real(rows[i + 1], "S2") / real(rows[i], "S2");
    const double expect = 2 * std::pow(std::log(2 * X) / std::log(X), 3);
    const double rel = ratio / expect - 1;
    detail += " X=" + num(X) + ":" + num(ratio) + "/" + num(expect);
    if (X >= 1.6e4) {
      ++checked;
      pass = pass && std::abs(rel) <= 0.2;
    }
  }
  return {pass && checked > 0, "S2(2X)/S2(X) vs 2(log 2X/log X)^3:" + detail + ", " + num(secs) + " s"};
}

Outcome nonvanishing_criterion(const std::vector<std::map<std::string, std::string>>& rows) {
  bool pass = !rows.empty();
  std::string detail;
  for (const auto& r : rows) {
    const double cs = real(r, "cs_lower_bound"), nx = real(r, "N_X"), X = real(r, "X");
    pass = pass && cs <= nx + 1e-9 * std::max(1.0, nx);
    detail += " X=" + num(X) + ": " + num(cs) + "<=" + num(nx) + " (N_X log X/X " + num(nx * std::log(X) / X) + ")";
  }
  return {pass, "cs_lower_bound <= N_X on " + std::to_string(rows.size()) + " rows;" + detail};
}

Outcome sieve_criterion() {
  const auto dir = out_root / "sieve";
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run_command("sieve-diagnostic", {{"form", form_path}}, dir);
  const double secs = elapsed(t0);
  const auto rows = read_csv(dir / "sieve_diagnostic.csv");
  bool finite = !rows.empty();
  for (const auto& r : rows) finite = finite && std::isfinite(real(r, "ratio"));
  const auto summary = nlohmann::json::parse(slurp(dir / "sieve_diagnostic.json"));
  const bool pass = code == 0 && finite && summary["finite"].get<bool>() && summary["shape_ok"].get<bool>() && secs <= 600;
  return {pass, std::to_string(rows.size()) + " ratios, max " + num(summary["max_ratio"].get<double>()) +
                    ", max t-growth " + num(summary["max_t_growth"].get<double>()) + ", " + num(secs) + " s"};
}

Outcome determinism_criterion() {
  // The remaining commands, so that every command has a manifest to replay.
  bool ran = run_command("lvalue", {{"form", form_path}, {"D", "40"}, {"oracle", "true"}}, out_root / "lvalue") == 0;
  ran = run_command("nonvanishing", {{"form", form_path}}, out_root / "nonvanishing") == 0 && ran;
  std::size_t files = 0, differing = 0, manifests = 0;
  std::string bad;
  for (const char* sub : {"gauss", "poisson", "partition", "sieve", "scan", "lvalue", "nonvanishing"}) {
    for (const auto& entry : fs::directory_iterator(out_root / sub)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("manifest_", 0) != 0) continue;
      ++manifests;
      const auto replay = out_root / "rerun" / sub;
      fs::remove_all(replay);
      std::ostringstream err;
      const int code = cli::rerun(entry.path().string(), {{"out_dir", replay.string()}}, {&run_log, &err});
      if (code != 0) {
        ++differing;
        bad += " " + name + "(exit " + std::to_string(code) + ")";
        continue;
      }
      const auto m = nlohmann::json::parse(slurp(entry.path()));
      for (const auto& out : m["outputs"]) {
        const auto file = out["file"].get<std::string>();
        ++files;
        if (slurp(entry.path().parent_path() / file) != slurp(replay / file)) {
          ++differing;
          bad += " " + std::string(sub) + "/" + file;
        }
      }
    }
  }
  return {ran && manifests == 7 && differing == 0,
          std::to_string(manifests) + " manifests, " + std::to_string(files) + " data files replayed, " +
              std::to_string(differing) + " differ" + bad};
}

}  // namespace

int main() {
  fs::remove_all(out_root);
  fs::create_directories(out_root);
  int failures = 0;
  auto report = [&](int n, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", n, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  };
  report(1, "Gauss-sum closed form vs brute force", gauss_criterion);
  report(2, "Poisson identity", poisson_criterion);
  report(3, "partition identities", partition_criterion);
  report(4, "cutoff kernel W", kernel_criterion);
  report(5, "eigenvalue suite", eigenvalue_criterion);
  {
    const CentralFixture central;
    report(6, "central derivative vs oracle", [&] { return oracle_criterion(central); });
    report(7, "indicator and relation", [&] { return relation_criterion(central); });
  }
  std::vector<std::map<std::string, std::string>> scan_rows;
  report(8, "second-moment growth shape", [&] { return growth_criterion(scan_rows); });
  report(9, "non-vanishing lower bound", [&] { return nonvanishing_criterion(scan_rows); });
  report(10, "large-sieve diagnostics", sieve_criterion);
  report(11, "determinism from manifests", determinism_criterion);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures ? 1 : 0;
}
