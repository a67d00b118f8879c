#ifndef TWISTDERIV_CLI_HPP
#define TWISTDERIV_CLI_HPP

// Batch front end: strict key=value configuration, form-file parsing, one
// runner per subcommand, and a JSON manifest per run that `rerun` replays.
// Exit codes: 0 success, 1 a verification check failed, 2 bad configuration
// or input.

#include <boost/version.hpp>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "twistderiv/arith.hpp"
#include "twistderiv/central_values.hpp"
#include "twistderiv/errors.hpp"
#include "twistderiv/gauss_poisson.hpp"
#include "twistderiv/kernels.hpp"
#include "twistderiv/moments.hpp"
#include "twistderiv/newform.hpp"
#include "twistderiv/parallel.hpp"

namespace twistderiv::cli {

using arith::i64;
using arith::u64;
using json = nlohmann::ordered_json;

inline constexpr const char* version = "0.3.0";
inline constexpr const char* out_dir_env = "TWISTDERIV_OUT_DIR";

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Keys
// ---------------------------------------------------------------------------

enum class Kind { path, word, real, integer, count, boolean, reals, counts, words };

struct KeySpec {
  std::string name;
  Kind kind;
  std::vector<std::pair<std::string, std::string>> defaults;  // command -> default; absent = required
  std::string help;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"lvalue",         "scan-moment",      "nonvanishing",    "gauss-verify",
                                          "poisson-verify", "partition-verify", "sieve-diagnostic"};
  return c;
}

inline const std::vector<KeySpec>& key_specs() {
  const std::string lv = "lvalue", sc = "scan-moment", nv = "nonvanishing", gv = "gauss-verify",
                    pv = "poisson-verify", pa = "partition-verify", sd = "sieve-diagnostic";
  auto all = [&](const std::string& v) {
    std::vector<std::pair<std::string, std::string>> d;
    for (const auto& c : commands()) d.emplace_back(c, v);
    return d;
  };
  static const std::vector<KeySpec> specs{
      {"form", Kind::path, {}, "form file (weight, level, curve or ap_table)"},
      {"out_dir", Kind::path, all("twistderiv-out"), "output directory"},
      {"threads", Kind::count, all("0"), "worker threads, 0 = hardware concurrency"},
      {"D", Kind::integer, {}, "fundamental discriminant"},
      {"oracle", Kind::boolean, {{lv, "false"}}, "also run the finite-difference oracle (|D| <= 1600)"},
      {"tail_tol", Kind::real, {{lv, "1e-6"}, {sc, "1e-6"}, {nv, "1e-6"}}, "truncation tail tolerance"},
      {"trunc_factor", Kind::real, {{lv, "50"}, {sc, "50"}, {nv, "50"}}, "default trunc_N = trunc_factor |D|"},
      {"trunc_min", Kind::count, {{lv, "1000"}, {sc, "1000"}, {nv, "1000"}}, "lower limit for trunc_N"},
      {"oracle_tol", Kind::real, {{lv, "1e-4"}, {sc, "1e-4"}, {nv, "1e-4"}}, "oracle agreement tolerance"},
      {"X_grid",
       Kind::reals,
       {{sc, "1000,2000,4000,8000,16000,32000,64000"}, {nv, "10000,20000,40000"}},
       "increasing family sizes X"},
      {"J", Kind::word, {{sc, "J"}, {nv, "J"}}, "moment weight: J, G_paper or G_smooth"},
      {"with_even", Kind::boolean, {{sc, "true"}}, "evaluate omega = +1 members through L(1/2)"},
      {"vanish_eps", Kind::real, {{sc, "1e-3"}, {nv, "1e-3"}}, "threshold for |L'| > 0"},
      {"points", Kind::boolean, {{sc, "true"}}, "write per-point values and check the round trip"},
      {"timings", Kind::boolean, {{sc, "false"}}, "write wall_seconds into the moment CSV"},
      {"n_max", Kind::count, {{gv, "3000"}, {pv, "99"}}, "largest odd modulus"},
      {"k_min", Kind::integer, {{gv, "-50"}}, "smallest k"},
      {"k_max", Kind::integer, {{gv, "50"}}, "largest k"},
      {"X_list", Kind::reals, {{pv, "200,1000"}}, "Poisson scales X"},
      {"bumps", Kind::words, {{pv, "G_paper,G_smooth"}}, "bumps to check: G_paper, G_smooth, J"},
      {"tolerance", Kind::real, {{pv, "1e-6"}}, "Poisson residual tolerance"},
      {"transform_tol", Kind::real, {{pv, "1e-13"}}, "absolute tolerance of each transform"},
      {"K_trunc", Kind::count, {{pv, "0"}}, "direct dual terms, 0 = adaptive"},
      {"samples", Kind::count, {{pa, "10000"}}, "log-spaced samples for the dyadic sum"},
      {"H", Kind::count, {{pa, "20"}}, "dyadic depth"},
      {"grid_points", Kind::count, {{pa, "1000"}}, "uniform samples for V, V1 and G(x)+G(x/2)"},
      {"M_list", Kind::counts, {{sd, "100,1000"}}, "discriminant windows M"},
      {"N_list", Kind::counts, {{sd, "100,1000"}}, "sum lengths N"},
      {"t_list", Kind::reals, {{sd, "0,5"}}, "imaginary shifts t"},
      {"G", Kind::word, {{sd, "G_smooth"}}, "sieve weight: G_paper, G_smooth or J"},
      {"margin", Kind::real, {{sd, "10"}}, "t-shape margin"},
      {"Y_list", Kind::counts, {{sd, "1000"}}, "coprime variant: ranges Y"},
      {"ell_list", Kind::counts, {{sd, "1,3,15"}}, "coprime variant: moduli ell"},
  };
  return specs;
}

inline bool applies(const KeySpec& k, const std::string& command) {
  if (k.name == "form") return command == "lvalue" || command == "scan-moment" || command == "nonvanishing" ||
                               command == "sieve-diagnostic";
  if (k.name == "D") return command == "lvalue";
  return std::any_of(k.defaults.begin(), k.defaults.end(), [&](const auto& d) { return d.first == command; });
}

inline std::optional<std::string> default_for(const KeySpec& k, const std::string& command) {
  for (const auto& [c, v] : k.defaults) {
    if (c == command) return v;
  }
  return std::nullopt;
}

inline std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

// Closest name within edit distance max(2, |key|/3), if any.
inline std::optional<std::string> did_you_mean(const std::string& key, const std::vector<std::string>& names) {
  std::optional<std::string> best;
  std::size_t best_d = std::max<std::size_t>(2, key.size() / 3) + 1;
  for (const auto& n : names) {
    const auto d = levenshtein(key, n);
    if (d < best_d) {
      best_d = d;
      best = n;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Value parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) out.push_back(trim(part));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

template <class T>
std::optional<T> parse_number(const std::string& s) {
  T v{};
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  const auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || b == e) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) return std::nullopt;
  }
  return v;
}

inline std::optional<bool> parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  return std::nullopt;
}

inline std::string kind_name(Kind k) {
  switch (k) {
    case Kind::path: return "a path";
    case Kind::word: return "a name";
    case Kind::real: return "a real number";
    case Kind::integer: return "an integer";
    case Kind::count: return "a nonnegative integer";
    case Kind::boolean: return "true or false";
    case Kind::reals: return "a comma-separated list of reals";
    case Kind::counts: return "a comma-separated list of nonnegative integers";
    case Kind::words: return "a comma-separated list of names";
  }
  return "?";
}

inline bool well_formed(Kind k, const std::string& v) {
  switch (k) {
    case Kind::path:
    case Kind::word: return !v.empty();
    case Kind::real: return parse_number<double>(v).has_value();
    case Kind::integer: return parse_number<i64>(v).has_value();
    case Kind::count: return parse_number<u64>(v).has_value();
    case Kind::boolean: return parse_bool(v).has_value();
    case Kind::reals:
    case Kind::counts:
    case Kind::words: {
      if (v.empty()) return false;
      for (const auto& p : split(v, ',')) {
        const Kind one = k == Kind::reals ? Kind::real : k == Kind::counts ? Kind::count : Kind::word;
        if (!well_formed(one, p)) return false;
      }
      return true;
    }
  }
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

using Setting = std::pair<std::string, std::string>;

struct RunConfig {
  std::string command;
  std::map<std::string, std::string> values;  // every applicable key, defaults filled in

  const std::string& get(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw config_error("key '" + key + "' is not set for " + command);
    return it->second;
  }
  double real(const std::string& key) const { return *detail::parse_number<double>(get(key)); }
  i64 integer(const std::string& key) const { return *detail::parse_number<i64>(get(key)); }
  u64 count(const std::string& key) const { return *detail::parse_number<u64>(get(key)); }
  bool flag(const std::string& key) const { return *detail::parse_bool(get(key)); }
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& p : detail::split(get(key), ',')) out.push_back(*detail::parse_number<double>(p));
    return out;
  }
  std::vector<u64> counts(const std::string& key) const {
    std::vector<u64> out;
    for (const auto& p : detail::split(get(key), ',')) out.push_back(*detail::parse_number<u64>(p));
    return out;
  }
  std::vector<std::string> words(const std::string& key) const { return detail::split(get(key), ','); }
};

inline Setting parse_setting(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw config_error("expected key=value, got '" + text + "'");
  Setting s{detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1))};
  if (s.first.empty()) throw config_error("empty key in '" + text + "'");
  return s;
}

// key=value per line; '#' starts a comment.
inline std::vector<Setting> parse_settings(std::istream& in, const std::string& origin) {
  std::vector<Setting> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      out.push_back(parse_setting(line));
    } catch (const config_error& e) {
      throw config_error(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<Setting> load_settings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path);
  return parse_settings(in, path);
}

// Validates every key against the command, fills defaults, and makes the
// form and out_dir paths absolute. Later settings override earlier ones.
inline RunConfig resolve(const std::string& command, const std::vector<Setting>& settings) {
  if (std::find(commands().begin(), commands().end(), command) == commands().end()) {
    std::string msg = "unknown command '" + command + "'";
    if (auto s = did_you_mean(command, commands())) msg += "; did you mean '" + *s + "'?";
    throw config_error(msg);
  }
  std::vector<std::string> names;
  for (const auto& k : key_specs()) names.push_back(k.name);
  RunConfig cfg;
  cfg.command = command;
  for (const auto& [key, value] : settings) {
    const auto it = std::find_if(key_specs().begin(), key_specs().end(), [&](const KeySpec& k) { return k.name == key; });
    if (it == key_specs().end()) {
      std::vector<std::string> usable;
      for (const auto& k : key_specs()) {
        if (applies(k, command)) usable.push_back(k.name);
      }
      std::string msg = "unknown key '" + key + "'";
      if (auto s = did_you_mean(key, usable)) {
        msg += "; did you mean '" + *s + "'?";
      } else if (auto s2 = did_you_mean(key, names)) {
        msg += "; did you mean '" + *s2 + "'?";
      }
      throw config_error(msg);
    }
    if (!applies(*it, command)) throw config_error("key '" + key + "' does not apply to " + command);
    if (!detail::well_formed(it->kind, value)) {
      throw config_error("key '" + key + "' expects " + detail::kind_name(it->kind) + ", got '" + value + "'");
    }
    cfg.values[key] = value;
  }
  for (const auto& k : key_specs()) {
    if (!applies(k, command) || cfg.values.count(k.name)) continue;
    if (auto d = default_for(k, command)) {
      cfg.values[k.name] = *d;
    } else {
      throw config_error("missing required key '" + k.name + "' for " + command);
    }
  }
  for (const char* key : {"form", "out_dir"}) {
    if (auto it = cfg.values.find(key); it != cfg.values.end()) {
      it->second = std::filesystem::absolute(it->second).lexically_normal().string();
    }
  }
  return cfg;
}

// Config-file settings, then the out_dir environment override, then the
// command-line settings.
inline std::vector<Setting> layer_settings(const std::vector<Setting>& file, const std::vector<Setting>& line) {
  std::vector<Setting> all = file;
  if (const char* env = std::getenv(out_dir_env); env && *env) all.emplace_back("out_dir", env);
  all.insert(all.end(), line.begin(), line.end());
  return all;
}

inline std::string usage_keys(const std::string& command) {
  std::ostringstream os;
  os << "settings (key=value):\n";
  for (const auto& k : key_specs()) {
    if (!applies(k, command)) continue;
    os << "  " << k.name;
    if (auto d = default_for(k, command)) {
      os << " [" << *d << "]";
    } else {
      os << " (required)";
    }
    os << "  " << k.help << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Form files
// ---------------------------------------------------------------------------

struct FormFile {
  std::string path;
  newform::NewformSpec spec;
  std::string source;  // "curve" or "ap_table"
  std::map<std::string, std::string> raw;
};

inline FormFile parse_form(std::istream& in, const std::string& path) {
  static const std::vector<std::string> keys{"weight", "level", "curve", "ap_table", "fricke_eta", "bad_ap"};
  FormFile form;
  form.path = path;
  for (const auto& [k, v] : parse_settings(in, path)) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      std::string msg = path + ": unknown form key '" + k + "'";
      if (auto s = did_you_mean(k, keys)) msg += "; did you mean '" + *s + "'?";
      throw config_error(msg);
    }
    form.raw[k] = v;
  }
  auto need_int = [&](const std::string& k, const std::string& v) {
    auto n = detail::parse_number<i64>(v);
    if (!n) throw config_error(path + ": " + k + " expects an integer, got '" + v + "'");
    return *n;
  };
  for (const char* k : {"weight", "level"}) {
    if (!form.raw.count(k)) throw config_error(path + ": missing form key '" + std::string(k) + "'");
  }
  const i64 w = need_int("weight", form.raw["weight"]), q = need_int("level", form.raw["level"]);
  if (q < 1) throw config_error(path + ": level must be positive");
  form.spec.weight = static_cast<int>(w);
  form.spec.level = static_cast<u64>(q);
  if (auto it = form.raw.find("fricke_eta"); it != form.raw.end()) {
    form.spec.fricke_eta = static_cast<int>(need_int("fricke_eta", it->second));
  }
  const bool has_curve = form.raw.count("curve"), has_table = form.raw.count("ap_table");
  if (has_curve == has_table) throw config_error(path + ": give exactly one of curve and ap_table");
  if (has_curve) {
    const auto parts = detail::split(form.raw["curve"], ',');
    if (parts.size() != 5) throw config_error(path + ": curve expects a1,a2,a3,a4,a6");
    newform::CurveCoefficients c;
    i64* slots[5] = {&c.a1, &c.a2, &c.a3, &c.a4, &c.a6};
    for (int i = 0; i < 5; ++i) *slots[i] = need_int("curve", parts[i]);
    form.spec.source = c;
    form.source = "curve";
  } else {
    std::filesystem::path tp = form.raw["ap_table"];
    if (tp.is_relative()) tp = std::filesystem::path(path).parent_path() / tp;
    form.spec.source = newform::load_ap_table(tp.string());
    form.source = "ap_table";
  }
  if (auto it = form.raw.find("bad_ap"); it != form.raw.end()) {
    for (const auto& item : detail::split(it->second, ',')) {
      const auto colon = item.find(':');
      auto p = colon == std::string::npos ? std::nullopt : detail::parse_number<u64>(item.substr(0, colon));
      auto a = colon == std::string::npos ? std::nullopt : detail::parse_number<double>(item.substr(colon + 1));
      if (!p || !a) throw config_error(path + ": bad_ap expects p:a_p items, got '" + item + "'");
      form.spec.bad_ap[*p] = *a;
    }
  }
  newform::validate(form.spec);
  return form;
}

inline FormFile load_form(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open form file " + path);
  return parse_form(in, path);
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

struct Streams {
  std::ostream* log = &std::clog;
  std::ostream* err = &std::cerr;
};

namespace detail {

using moments::format_double;

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string seconds_text(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f s", s);
  return buf;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class Context {
 public:
  Context(const RunConfig& cfg, const Streams& io) : cfg_(cfg), io_(io), dir_(cfg.get("out_dir")) {
    threads_ = static_cast<unsigned>(cfg.count("threads"));
    manifest_["tool"] = "twistderiv";
    manifest_["command"] = cfg.command;
    json c = json::object();
    for (const auto& [k, v] : cfg.values) c[k] = v;
    manifest_["config"] = c;
    manifest_["versions"] = {{"twistderiv", version},
                             {"boost", BOOST_LIB_VERSION},
                             {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                             {"compiler", __VERSION__},
                             {"cplusplus", __cplusplus}};
    manifest_["started_at"] = utc_now();
    manifest_["outputs"] = json::array();
    manifest_["timings"] = json::object();
  }

  const RunConfig& cfg() const { return cfg_; }
  unsigned threads() const { return threads_; }
  json& manifest() { return manifest_; }

  void log(const std::string& line) const { *io_.log << "[twistderiv] " << line << std::endl; }

  void write(const std::string& name, const std::string& content) {
    std::filesystem::create_directories(dir_);
    const auto p = dir_ / name;
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write " + p.string());
    out << content;
    if (!out) throw data_error("write failed for " + p.string());
    manifest_["outputs"].push_back({{"file", name}, {"bytes", content.size()}});
    log("wrote " + p.string());
  }

  void timing(const std::string& key, json value) { manifest_["timings"][key] = std::move(value); }

  void fail(const std::string& check) { failures_.push_back(check); }
  const std::vector<std::string>& failures() const { return failures_; }

  void finish(int code, const std::chrono::steady_clock::time_point t0) {
    manifest_["finished_at"] = utc_now();
    manifest_["timings"]["total_seconds"] = seconds_since(t0);
    manifest_["failures"] = failures_;
    manifest_["exit_code"] = code;
    std::filesystem::create_directories(dir_);
    std::ofstream out(dir_ / manifest_name(cfg_.command), std::ios::binary | std::ios::trunc);
    out << manifest_.dump(2) << '\n';
  }

  static std::string manifest_name(const std::string& command) { return "manifest_" + command + ".json"; }

 private:
  const RunConfig& cfg_;
  Streams io_;
  std::filesystem::path dir_;
  unsigned threads_ = 0;
  json manifest_;
  std::vector<std::string> failures_;
};

inline kernels::BumpKind bump_named(const std::string& name) {
  if (name == "G_paper") return kernels::BumpKind::paper();
  if (name == "G_smooth") return kernels::BumpKind::smooth();
  if (name == "J") return kernels::BumpKind::J();
  std::string msg = "unknown bump '" + name + "'";
  if (auto s = did_you_mean(name, {"G_paper", "G_smooth", "J"})) msg += "; did you mean '" + *s + "'?";
  throw config_error(msg);
}

inline json form_json(const FormFile& form, int eta) {
  return {{"path", form.path},       {"weight", form.spec.weight}, {"level", form.spec.level},
          {"source", form.source},   {"fricke_eta_given", form.spec.fricke_eta},
          {"fricke_eta", eta}};
}

inline std::uint32_t table_length(u64 n) {
  if (n >= (u64{1} << 31)) throw precondition_error("eigenvalue table length " + std::to_string(n) + " is too large");
  return static_cast<std::uint32_t>(n);
}

inline central::EngineOptions engine_options(const RunConfig& cfg) {
  central::EngineOptions eo;
  eo.tail_tol = cfg.real("tail_tol");
  eo.trunc_factor = cfg.real("trunc_factor");
  eo.trunc_min = cfg.count("trunc_min");
  if (!(eo.tail_tol > 0)) throw config_error("tail_tol must be positive");
  if (!(eo.trunc_factor >= 1)) throw config_error("trunc_factor must be at least 1");
  return eo;
}

inline u64 trunc_for(const central::EngineOptions& eo, u64 absD) {
  return std::max(static_cast<u64>(std::ceil(eo.trunc_factor * static_cast<double>(absD))), eo.trunc_min);
}

// ---- lvalue ---------------------------------------------------------------

inline void run_lvalue(Context& ctx) {
  const auto& cfg = ctx.cfg();
  const auto form = load_form(cfg.get("form"));
  const i64 D = cfg.integer("D");
  // Surface the coprimality and discriminant preconditions before any table work.
  central::root_number(form.spec, 1, D);
  if (!arith::is_fundamental_discriminant(D)) {
    throw precondition_error("D = " + std::to_string(D) + " is not a fundamental discriminant");
  }
  const u64 absD = static_cast<u64>(D < 0 ? -D : D);
  const bool oracle = cfg.flag("oracle");
  const auto eo = engine_options(cfg);
  const double oracle_tol = cfg.real("oracle_tol");
  WorkerPool pool(ctx.threads());

  auto t0 = std::chrono::steady_clock::now();
  const u64 cap = trunc_for(eo, absD);
  u64 len = cap + 1;
  if (oracle) len = std::max<u64>(len, 64 * absD + 64);
  const auto f = newform::load_newform(form.spec, table_length(len), pool);
  ctx.manifest()["form"] = form_json(form, f.eta);
  ctx.timing("table_seconds", seconds_since(t0));

  t0 = std::chrono::steady_clock::now();
  const central::CentralValueEngine eng(f, absD, eo);
  const int omega = eng.omega(D);
  central::SeriesValue lp, lv;
  if (omega == -1) {
    lp = eng.lprime_central(D);
    lv = {0.0, 0.0, lp.trunc_N};
  } else {
    lv = eng.l_central(D);
    lp = eng.lprime_from_relation(D);
  }
  ctx.timing("series_seconds", seconds_since(t0));
  json rec;
  rec["D"] = D;
  rec["omega"] = omega;
  rec["lprime"] = lp.value;
  rec["lvalue"] = lv.value;
  rec["trunc_N"] = std::max(lp.trunc_N, lv.trunc_N);
  rec["tail_bound"] = std::max(lp.tail_bound, lv.tail_bound);
  ctx.log("D=" + std::to_string(D) + " omega=" + std::to_string(omega) + " L'(1/2)=" + format_double(lp.value) +
          " L(1/2)=" + format_double(lv.value));
  if (oracle) {
    t0 = std::chrono::steady_clock::now();
    const auto o = central::finite_difference_oracle(f, D);
    ctx.timing("oracle_seconds", seconds_since(t0));
    const double dprime = std::abs(o.lprime - lp.value);
    const double dvalue = std::abs(o.lvalue - lv.value);
    rec["oracle"] = {{"lprime", o.lprime},          {"lvalue", o.lvalue},
                     {"ratio", o.ratio},            {"converged", o.converged},
                     {"lprime_abs_diff", dprime},   {"lvalue_abs_diff", dvalue},
                     {"tolerance", oracle_tol}};
    if (!(dprime <= oracle_tol)) ctx.fail("oracle disagrees on L'(1/2) by " + format_double(dprime));
    if (!(dvalue <= oracle_tol)) ctx.fail("oracle disagrees on L(1/2) by " + format_double(dvalue));
    if (!o.converged) ctx.fail("oracle finite differences did not converge");
  }
  ctx.write("lvalue.json", rec.dump(2) + "\n");
}

// ---- scan-moment and nonvanishing ----------------------------------------

struct ScanSetup {
  FormFile form;
  std::vector<double> grid;
  moments::ScanOptions opt;
  central::EngineOptions eo;
  u64 max_abs_D = 8;
};

inline ScanSetup scan_setup(const RunConfig& cfg) {
  ScanSetup s{load_form(cfg.get("form")), cfg.reals("X_grid"), {}, engine_options(cfg), 8};
  s.opt.J = bump_named(cfg.get("J"));
  s.opt.vanish_eps = cfg.real("vanish_eps");
  s.opt.oracle_tol = cfg.real("oracle_tol");
  if (cfg.values.count("with_even")) s.opt.with_even = cfg.flag("with_even");
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    if (!(s.grid[i] >= 16)) throw precondition_error("every X must be at least 16");
    if (i && !(s.grid[i] > s.grid[i - 1])) throw precondition_error("X_grid must increase");
  }
  if (!(s.opt.vanish_eps > 0)) throw config_error("vanish_eps must be positive");
  moments::check_vanish_eps(s.opt, 0.0);
  s.max_abs_D = std::max<u64>(8, 8 * static_cast<u64>(std::floor(s.grid.back() / 4)));
  return s;
}

// Row-level invariants shared by scan-moment and nonvanishing.
inline void check_record(Context& ctx, const moments::MomentRecord& r) {
  const std::string at = "X=" + format_double(r.X) + ": ";
  if (!(r.S2 >= 0)) ctx.fail(at + "S2 is negative");
  if (r.N_X > r.n_omega_minus) ctx.fail(at + "N_X exceeds the omega = -1 count");
  if (r.n_omega_minus + r.n_omega_plus != r.family_size) ctx.fail(at + "sign classes do not partition the family");
  const double n = static_cast<double>(r.N_X);
  if (!(r.cs_lower_bound <= n + 1e-9 * std::max(1.0, n))) {
    ctx.fail(at + "cs_lower_bound " + format_double(r.cs_lower_bound) + " exceeds N_X");
  }
}

inline void run_scan(Context& ctx) {
  const auto& cfg = ctx.cfg();
  auto s = scan_setup(cfg);
  const bool timings = cfg.flag("timings"), points = cfg.flag("points");
  WorkerPool pool(ctx.threads());

  auto t0 = std::chrono::steady_clock::now();
  const u64 cap = trunc_for(s.eo, s.max_abs_D);
  const auto f = newform::load_newform(s.form.spec, table_length(cap + 1), pool);
  const central::CentralValueEngine eng(f, s.max_abs_D, s.eo);
  ctx.manifest()["form"] = form_json(s.form, f.eta);
  ctx.timing("setup_seconds", seconds_since(t0));
  ctx.log("tables ready: capacity " + std::to_string(cap) + ", eta " + std::to_string(f.eta));

  std::ostringstream main, signs, plot, pts;
  main << "X,family_size,n_omega_minus,S1,S2,ratio_log3,cs_lower_bound,N_X,wall_seconds\n";
  signs << "X,n_omega_minus,n_omega_plus,S1_minus,S2_minus,S1_plus,S2_plus,S2_plus_L,S2_plus_L_log2\n";
  plot << "# log_X ratio_log3\n";
  pts << moments::points_header << '\n';
  std::vector<moments::MomentRecord> recs;
  json per_x = json::array();
  for (double X : s.grid) {
    t0 = std::chrono::steady_clock::now();
    const auto p = moments::scan_points(eng, X, s.opt.with_even, pool);
    auto r = moments::reduce_points(X, p, s.opt);
    moments::check_vanish_eps(s.opt, r.max_tail_bound);
    r.wall_seconds = seconds_since(t0);
    per_x.push_back({{"X", X}, {"seconds", r.wall_seconds}, {"max_tail_bound", r.max_tail_bound}});
    ctx.log("X=" + format_double(X) + " family=" + std::to_string(r.family_size) + " S2=" + format_double(r.S2) +
            " N_X=" + std::to_string(r.N_X) + " (" + seconds_text(r.wall_seconds) + ")");
    check_record(ctx, r);
    const double lx = std::log(X);
    main << format_double(X) << ',' << r.family_size << ',' << r.n_omega_minus << ',' << format_double(r.S1) << ','
         << format_double(r.S2) << ',' << format_double(r.ratio_log3) << ',' << format_double(r.cs_lower_bound)
         << ',' << r.N_X << ',' << format_double(timings ? r.wall_seconds : 0.0) << '\n';
    signs << format_double(X) << ',' << r.n_omega_minus << ',' << r.n_omega_plus << ',' << format_double(r.S1)
          << ',' << format_double(r.S2) << ',' << format_double(r.S1_plus) << ',' << format_double(r.S2_plus) << ','
          << format_double(r.S2_plus_L) << ',' << format_double(lx * lx * r.S2_plus_L) << '\n';
    plot << format_double(lx) << ' ' << format_double(r.ratio_log3) << '\n';
    if (points) moments::write_points_csv(pts, X, p, s.opt);
    recs.push_back(r);
  }
  ctx.timing("per_X", per_x);
  ctx.write("scan_moment.csv", main.str());
  ctx.write("scan_moment_signs.csv", signs.str());
  ctx.write("scan_moment_plot.dat", plot.str());
  if (points) {
    ctx.write("scan_points.csv", pts.str());
    std::istringstream back(pts.str());
    const auto groups = moments::read_points_csv(back);
    std::size_t gi = 0;
    for (const auto& r : recs) {
      std::vector<central::TwistPoint> none;
      const auto& g = gi < groups.size() && groups[gi].first == r.X ? groups[gi++].second : none;
      const auto again = moments::reduce_points(r.X, g, s.opt);
      if (again.S1 != r.S1 || again.S2 != r.S2 || again.family_size != r.family_size) {
        ctx.fail("X=" + format_double(r.X) + ": moments recomputed from scan_points.csv differ");
      }
    }
  }
}

inline void run_nonvanishing(Context& ctx) {
  const auto& cfg = ctx.cfg();
  auto s = scan_setup(cfg);
  WorkerPool pool(ctx.threads());
  auto t0 = std::chrono::steady_clock::now();
  const u64 cap = trunc_for(s.eo, s.max_abs_D);
  const auto f = newform::load_newform(s.form.spec, table_length(cap + 1), pool);
  const central::CentralValueEngine eng(f, s.max_abs_D, s.eo);
  ctx.manifest()["form"] = form_json(s.form, f.eta);
  ctx.timing("setup_seconds", seconds_since(t0));

  json rows = json::array();
  double max_tail = 0;
  json per_x = json::array();
  for (double X : s.grid) {
    t0 = std::chrono::steady_clock::now();
    const auto p = moments::scan_points(eng, X, false, pool);
    const auto r = moments::reduce_points(X, p, s.opt);
    moments::check_vanish_eps(s.opt, r.max_tail_bound);
    per_x.push_back({{"X", X}, {"seconds", seconds_since(t0)}});
    check_record(ctx, r);
    max_tail = std::max(max_tail, r.max_tail_bound);
    const double normalized = static_cast<double>(r.N_X) * std::log(X) / X;
    rows.push_back({{"X", X},
                    {"family_size", r.family_size},
                    {"n_omega_minus", r.n_omega_minus},
                    {"S1", r.S1},
                    {"S2", r.S2},
                    {"cs_lower_bound", r.cs_lower_bound},
                    {"N_X", r.N_X},
                    {"normalized", normalized}});
    ctx.log("X=" + format_double(X) + " N_X=" + std::to_string(r.N_X) + " cs=" + format_double(r.cs_lower_bound) +
            " N_X log X / X=" + format_double(normalized));
  }
  ctx.timing("per_X", per_x);
  json out;
  out["vanish_eps"] = s.opt.vanish_eps;
  out["certified_floor"] = moments::certified_floor(max_tail, s.opt.oracle_tol);
  out["max_tail_bound"] = max_tail;
  out["rows"] = rows;
  ctx.write("nonvanishing.json", out.dump(2) + "\n");
}

// ---- verification suites --------------------------------------------------

inline void run_gauss(Context& ctx) {
  const auto& cfg = ctx.cfg();
  const u64 n_max = cfg.count("n_max");
  const i64 k_lo = cfg.integer("k_min"), k_hi = cfg.integer("k_max");
  WorkerPool pool(ctx.threads());
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = gauss::gauss_sweep(n_max, k_lo, k_hi, pool);
  ctx.timing("sweep_seconds", seconds_since(t0));
  std::string out = "k,n,closed_re,closed_im,brute_re,brute_im,abs_err\n";
  out.reserve(rows.size() * 96);
  double worst = 0, worst_scaled = 0;
  for (const auto& r : rows) {
    out += std::to_string(r.k) + ',' + std::to_string(r.n) + ',' + format_double(r.closed.real()) + ',' +
           format_double(r.closed.imag()) + ',' + format_double(r.brute.real()) + ',' + format_double(r.brute.imag()) +
           ',' + format_double(r.abs_err) + '\n';
    worst = std::max(worst, r.abs_err);
    worst_scaled = std::max(worst_scaled, r.abs_err / static_cast<double>(r.n));
    if (!(r.abs_err <= 1e-9 * static_cast<double>(r.n))) {
      ctx.fail("G_" + std::to_string(r.k) + "(" + std::to_string(r.n) + "): abs_err " + format_double(r.abs_err));
    }
  }
  ctx.manifest()["summary"] = {{"rows", rows.size()}, {"max_abs_err", worst}, {"max_abs_err_over_n", worst_scaled}};
  ctx.log(std::to_string(rows.size()) + " sums, max abs_err " + format_double(worst) + ", max abs_err/n " +
          format_double(worst_scaled));
  ctx.write("gauss_verify.csv", out);
}

inline void run_poisson(Context& ctx) {
  const auto& cfg = ctx.cfg();
  gauss::PoissonOptions opt;
  opt.tolerance = cfg.real("tolerance");
  opt.transform_tol = cfg.real("transform_tol");
  opt.K_trunc = cfg.count("K_trunc");
  const u64 n_max = cfg.count("n_max");
  const auto Xs = cfg.reals("X_list");
  std::vector<kernels::BumpKind> bumps;
  for (const auto& b : cfg.words("bumps")) bumps.push_back(bump_named(b));
  for (double X : Xs) {
    if (!(X > 0)) throw config_error("X_list entries must be positive");
  }
  std::vector<std::pair<u64, double>> cases;
  for (u64 n = 1; n <= n_max; n += 2) {
    for (double X : Xs) cases.emplace_back(n, X);
  }
  WorkerPool pool(ctx.threads());
  json summary = json::object();
  for (const auto& b : bumps) {
    const auto t0 = std::chrono::steady_clock::now();
    const gauss::PoissonVerifier ver(b, opt);
    const auto reps = pool.map(cases.size(), [&](std::size_t i) { return ver.verify(cases[i].first, cases[i].second); });
    ctx.timing(b.name() + "_seconds", seconds_since(t0));
    std::ostringstream csv;
    csv << "n,X,lhs,rhs,residual,tail_estimate\n";
    double worst = 0;
    for (const auto& r : reps) {
      csv << r.n << ',' << format_double(r.X) << ',' << format_double(r.lhs) << ','
          << format_double(r.rhs_main + r.rhs_dual) << ',' << format_double(r.residual) << ','
          << format_double(r.tail_estimate) << '\n';
      worst = std::max(worst, r.residual);
      if (!r.passed) {
        ctx.fail(b.name() + " n=" + std::to_string(r.n) + " X=" + format_double(r.X) + ": residual " +
                 format_double(r.residual) + ", tail " + format_double(r.tail_estimate));
      }
    }
    summary[b.name()] = {{"cases", reps.size()}, {"max_residual", worst}};
    ctx.log(b.name() + ": " + std::to_string(reps.size()) + " cases, max residual " + format_double(worst));
    ctx.write("poisson_verify_" + b.name() + ".csv", csv.str());
  }
  ctx.manifest()["summary"] = summary;
}

inline void run_partition(Context& ctx) {
  const auto& cfg = ctx.cfg();
  const u64 H = cfg.count("H");
  if (H < 1 || H > 60) throw config_error("H must lie in [1, 60]");
  const auto checks = kernels::partition_checks(cfg.count("samples"), static_cast<int>(H), cfg.count("grid_points"));
  std::ostringstream csv;
  csv << "identity,lo,hi,samples,max_deviation,tolerance,passed\n";
  for (const auto& c : checks) {
    csv << c.identity << ',' << format_double(c.lo) << ',' << format_double(c.hi) << ',' << c.samples << ','
        << format_double(c.max_deviation) << ',' << format_double(c.tolerance) << ',' << (c.passed ? 1 : 0) << '\n';
    ctx.log(c.identity + ": max deviation " + format_double(c.max_deviation));
    if (!c.passed) ctx.fail(c.identity + " deviates by " + format_double(c.max_deviation));
  }
  ctx.write("partition_verify.csv", csv.str());
}

inline void run_sieve(Context& ctx) {
  const auto& cfg = ctx.cfg();
  const auto form = load_form(cfg.get("form"));
  const auto Ms = cfg.counts("M_list"), Ns = cfg.counts("N_list"), Ys = cfg.counts("Y_list"),
             ells = cfg.counts("ell_list");
  const auto ts = cfg.reals("t_list");
  const auto G = bump_named(cfg.get("G"));
  const double margin = cfg.real("margin");
  WorkerPool pool(ctx.threads());
  auto t0 = std::chrono::steady_clock::now();
  const u64 Nmax = *std::max_element(Ns.begin(), Ns.end());
  const auto f = newform::load_newform(form.spec, table_length(2 * Nmax + 2), pool);
  ctx.manifest()["form"] = form_json(form, f.eta);
  t0 = std::chrono::steady_clock::now();
  const auto rep = moments::largesieve_grid(f.table, Ms, Ns, ts, G, pool, margin);
  ctx.timing("dyadic_seconds", seconds_since(t0));
  std::ostringstream csv;
  csv << "kind,M_or_Y,N,t,ell,terms,lhs,bound_shape,ratio\n";
  for (const auto& r : rep.rows) {
    csv << "dyadic," << r.M << ',' << r.N << ',' << format_double(r.t) << ",1," << r.diag.terms << ','
        << format_double(r.diag.lhs) << ',' << format_double(r.diag.bound_shape) << ',' << format_double(r.diag.ratio)
        << '\n';
  }
  t0 = std::chrono::steady_clock::now();
  double coprime_max = 0;
  bool coprime_finite = true;
  for (u64 Y : Ys) {
    for (u64 N : Ns) {
      for (double t : ts) {
        for (u64 ell : ells) {
          const auto d = moments::coprime_largesieve_diagnostic(f.table, Y, N, t, ell, G, pool);
          coprime_finite = coprime_finite && std::isfinite(d.ratio);
          coprime_max = std::max(coprime_max, d.ratio);
          csv << "coprime," << Y << ',' << N << ',' << format_double(t) << ',' << ell << ',' << d.terms << ','
              << format_double(d.lhs) << ',' << format_double(d.bound_shape) << ',' << format_double(d.ratio) << '\n';
        }
      }
    }
  }
  ctx.timing("coprime_seconds", seconds_since(t0));
  if (!rep.finite) ctx.fail("a dyadic ratio is not finite");
  if (!coprime_finite) ctx.fail("a coprime ratio is not finite");
  if (!rep.shape_ok) ctx.fail("ratio(t)/ratio(0) exceeds margin (1+|t|)^2");
  json summary;
  summary["max_ratio"] = rep.max_ratio;
  summary["max_t_growth"] = rep.max_t_growth;
  summary["margin"] = margin;
  summary["finite"] = rep.finite && coprime_finite;
  summary["shape_ok"] = rep.shape_ok;
  summary["coprime_max_ratio"] = coprime_max;
  ctx.log("max ratio " + format_double(rep.max_ratio) + ", max t-growth " + format_double(rep.max_t_growth));
  ctx.write("sieve_diagnostic.csv", csv.str());
  ctx.write("sieve_diagnostic.json", summary.dump(2) + "\n");
}

}  // namespace detail

// Runs one resolved command. Diagnostics go to io.err, progress to io.log.
inline int run(const RunConfig& cfg, const Streams& io = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<detail::Context> ctx;
  int code = 0;
  try {
    ctx.emplace(cfg, io);
    const auto& c = cfg.command;
    if (c == "lvalue") {
      detail::run_lvalue(*ctx);
    } else if (c == "scan-moment") {
      detail::run_scan(*ctx);
    } else if (c == "nonvanishing") {
      detail::run_nonvanishing(*ctx);
    } else if (c == "gauss-verify") {
      detail::run_gauss(*ctx);
    } else if (c == "poisson-verify") {
      detail::run_poisson(*ctx);
    } else if (c == "partition-verify") {
      detail::run_partition(*ctx);
    } else if (c == "sieve-diagnostic") {
      detail::run_sieve(*ctx);
    } else {
      throw config_error("unknown command '" + c + "'");
    }
    if (!ctx->failures().empty()) {
      for (const auto& f : ctx->failures()) *io.err << "twistderiv: check failed: " << f << '\n';
      code = 1;
    }
  } catch (const config_error& e) {
    *io.err << "twistderiv: configuration error: " << e.what() << '\n';
    code = 2;
  } catch (const precondition_error& e) {
    *io.err << "twistderiv: precondition violated: " << e.what() << '\n';
    code = 2;
  } catch (const data_error& e) {
    *io.err << "twistderiv: input error: " << e.what() << '\n';
    code = 2;
  } catch (const std::exception& e) {
    *io.err << "twistderiv: " << e.what() << '\n';
    code = 1;
  }
  if (ctx) {
    try {
      ctx->finish(code, t0);
    } catch (const std::exception& e) {
      *io.err << "twistderiv: cannot write manifest: " << e.what() << '\n';
      if (code == 0) code = 2;
    }
  }
  return code;
}

inline std::string manifest_path(const RunConfig& cfg) {
  return (std::filesystem::path(cfg.get("out_dir")) / detail::Context::manifest_name(cfg.command)).string();
}

// Rebuilds the configuration recorded in a manifest. The out_dir environment
// override and the given settings (out_dir, threads only) apply on top.
inline RunConfig config_from_manifest(const std::string& path, const std::vector<Setting>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open manifest " + path);
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw config_error("manifest " + path + " is not valid JSON: " + e.what());
  }
  if (!m.contains("command") || !m["command"].is_string() || !m.contains("config") || !m["config"].is_object()) {
    throw config_error("manifest " + path + " lacks command or config");
  }
  std::vector<Setting> recorded;
  for (const auto& [k, v] : m["config"].items()) {
    if (!v.is_string()) throw config_error("manifest " + path + ": config value of '" + k + "' is not a string");
    recorded.emplace_back(k, v.get<std::string>());
  }
  for (const auto& [k, v] : overrides) {
    if (k != "out_dir" && k != "threads") throw config_error("rerun accepts only out_dir and threads, got '" + k + "'");
  }
  return resolve(m["command"].get<std::string>(), layer_settings(recorded, overrides));
}

inline int rerun(const std::string& path, const std::vector<Setting>& overrides = {}, const Streams& io = {}) {
  RunConfig cfg;
  try {
    cfg = config_from_manifest(path, overrides);
  } catch (const config_error& e) {
    *io.err << "twistderiv: configuration error: " << e.what() << '\n';
    return 2;
  }
  return run(cfg, io);
}

}  // namespace twistderiv::cli

#endif  // TWISTDERIV_CLI_HPP
