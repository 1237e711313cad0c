#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"
#include "reprocs/datagen.hpp"
#include "reprocs/io.hpp"
#include "reprocs/tracker.hpp"

namespace reprocs {

struct TrackerConfig {
  std::optional<Index> r;
  std::optional<Index> alpha;  // unset means derived
  std::optional<int> K;
  std::string lambda_thresh_preset = "model";  // model | synthetic | video
  std::optional<double> lambda_thresh;
  double zeta = 1e-3;
  double delta = 1.0;
  double alpha_constant = kDefaultAlphaConstant;
  std::optional<double> xi, omega_supp, x_min, f, lambda_plus, lambda_minus;
  unsigned adaptive = adapt_fixed;
  bool store_offline = false;
  std::optional<std::int64_t> t_train;
  double solver_tol = 1e-6;
  int solver_max_iter = 2000;
  std::string init = "batch";  // batch | oracle
  int init_iters = 30;
  double init_oracle_se = 1e-3;
};

struct BenchConfig {
  int trials = 1;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct Config {
  bool has_datagen = false;
  DatasetConfig datagen;
  TrackerConfig tracker;
  BenchConfig bench;
  std::string canonical;  // normalized JSON text the hash is taken over
  std::uint64_t hash = 0;
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (j.at(key).is_string() && j.at(key).get<std::string>() == "auto") return std::nullopt;
  return get<T>(j, key, where);
}

inline SupportSpec parse_support(const json& j, Index n, const std::string& where) {
  check_keys(j, {"kind", "s", "s_frac", "c0", "tau", "rho"}, where);
  SupportSpec s;
  const auto kind = get<std::string>(j, "kind", where);
  if (kind == "none") {
    s.kind = SupportKind::none;
  } else if (kind == "moving_object") {
    s.kind = SupportKind::moving_object;
    if (j.contains("s") == j.contains("s_frac")) throw ConfigError(where + ": give exactly one of s, s_frac");
    s.s = j.contains("s") ? get<Index>(j, "s", where)
                          : static_cast<Index>(std::llround(get<double>(j, "s_frac", where) * static_cast<double>(n)));
    s.c0 = get<double>(j, "c0", where);
    s.tau = get<std::int64_t>(j, "tau", where);
  } else if (kind == "bernoulli") {
    s.kind = SupportKind::bernoulli;
    s.rho = get<double>(j, "rho", where);
  } else {
    throw ConfigError(where + ".kind: expected none, moving_object or bernoulli");
  }
  return s;
}

inline DatasetConfig parse_datagen(const json& j) {
  const std::string w = "datagen";
  check_keys(j,
             {"n", "t_max", "t_train", "r", "f", "lambda", "changes", "basis_mode", "random_rotation",
              "train_support", "support", "x_min", "x_max", "sign", "noise_sigma"},
             w);
  DatasetConfig c;
  c.n = get<Index>(j, "n", w);
  c.t_max = get<std::int64_t>(j, "t_max", w);
  c.t_train = get<std::int64_t>(j, "t_train", w);
  c.r = get<Index>(j, "r", w);
  if (j.contains("f")) c.f = get<double>(j, "f", w);
  if (j.contains("lambda")) c.lambda = get<std::vector<double>>(j, "lambda", w);
  if (j.contains("changes")) {
    if (!j.at("changes").is_array()) throw ConfigError("datagen.changes: expected an array");
    for (const json& cj : j.at("changes")) {
      check_keys(cj, {"t", "theta_deg", "ch_index"}, "datagen.changes[]");
      SubspaceChangeSpec s;
      s.t = get<std::int64_t>(cj, "t", "datagen.changes[]");
      s.theta = get<double>(cj, "theta_deg", "datagen.changes[]") * 3.14159265358979323846 / 180.0;
      if (cj.contains("ch_index")) s.ch_index = get<Index>(cj, "ch_index", "datagen.changes[]");
      c.changes.push_back(s);
    }
  }
  if (j.contains("basis_mode")) {
    const auto m = get<std::string>(j, "basis_mode", w);
    if (m == "gaussian_complement")
      c.basis_mode = BasisMode::gaussian_complement;
    else if (m == "preallocated_q")
      c.basis_mode = BasisMode::preallocated_q;
    else
      throw ConfigError("datagen.basis_mode: expected gaussian_complement or preallocated_q");
  }
  if (j.contains("random_rotation")) c.random_rotation = get<bool>(j, "random_rotation", w);
  if (j.contains("train_support")) c.train_support = parse_support(j.at("train_support"), c.n, "datagen.train_support");
  if (j.contains("support")) c.support = parse_support(j.at("support"), c.n, "datagen.support");
  if (j.contains("x_min")) c.x_min = get<double>(j, "x_min", w);
  if (j.contains("x_max")) c.x_max = get<double>(j, "x_max", w);
  if (j.contains("sign")) {
    const auto s = get<std::string>(j, "sign", w);
    if (s == "positive")
      c.sign = SignMode::positive;
    else if (s == "random")
      c.sign = SignMode::random;
    else
      throw ConfigError("datagen.sign: expected positive or random");
  }
  if (j.contains("noise_sigma")) c.noise_sigma = get<double>(j, "noise_sigma", w);
  validate(c);
  return c;
}

inline TrackerConfig parse_tracker(const json& j) {
  const std::string w = "tracker";
  check_keys(j,
             {"r", "alpha", "K", "lambda_thresh", "zeta", "delta", "alpha_constant", "xi", "omega_supp", "x_min", "f",
              "lambda_plus", "lambda_minus", "adaptive", "store_offline", "t_train", "solver_tol", "solver_max_iter",
              "init", "init_iters", "init_oracle_se"},
             w);
  TrackerConfig t;
  t.r = get_opt<Index>(j, "r", w);
  t.alpha = get_opt<Index>(j, "alpha", w);
  t.K = get_opt<int>(j, "K", w);
  if (j.contains("lambda_thresh")) {
    const json& lt = j.at("lambda_thresh");
    if (lt.is_number()) {
      t.lambda_thresh = lt.get<double>();
    } else if (lt.is_string()) {
      t.lambda_thresh_preset = lt.get<std::string>();
      if (t.lambda_thresh_preset == "auto") t.lambda_thresh_preset = "model";
      if (t.lambda_thresh_preset != "model" && t.lambda_thresh_preset != "synthetic" &&
          t.lambda_thresh_preset != "video")
        throw ConfigError("tracker.lambda_thresh: expected a number or model, synthetic, video");
    } else {
      throw ConfigError("tracker.lambda_thresh: expected a number or preset name");
    }
  }
  if (j.contains("zeta")) t.zeta = get<double>(j, "zeta", w);
  if (j.contains("delta")) t.delta = get<double>(j, "delta", w);
  if (j.contains("alpha_constant")) t.alpha_constant = get<double>(j, "alpha_constant", w);
  t.xi = get_opt<double>(j, "xi", w);
  t.omega_supp = get_opt<double>(j, "omega_supp", w);
  t.x_min = get_opt<double>(j, "x_min", w);
  t.f = get_opt<double>(j, "f", w);
  t.lambda_plus = get_opt<double>(j, "lambda_plus", w);
  t.lambda_minus = get_opt<double>(j, "lambda_minus", w);
  if (j.contains("adaptive")) {
    const json& a = j.at("adaptive");
    auto flag = [](const std::string& s) -> unsigned {
      if (s == "fixed") return adapt_fixed;
      if (s == "xi_from_prev_lhat") return adapt_xi_from_prev_lhat;
      if (s == "xmin_from_prev_support") return adapt_xmin_from_prev_support;
      throw ConfigError("tracker.adaptive: unknown flag '" + s + "'");
    };
    if (a.is_string()) {
      t.adaptive = flag(a.get<std::string>());
    } else if (a.is_array()) {
      for (const json& e : a) {
        if (!e.is_string()) throw ConfigError("tracker.adaptive: expected strings");
        t.adaptive |= flag(e.get<std::string>());
      }
    } else {
      throw ConfigError("tracker.adaptive: expected a string or array");
    }
  }
  if (j.contains("store_offline")) t.store_offline = get<bool>(j, "store_offline", w);
  t.t_train = get_opt<std::int64_t>(j, "t_train", w);
  if (j.contains("solver_tol")) t.solver_tol = get<double>(j, "solver_tol", w);
  if (j.contains("solver_max_iter")) t.solver_max_iter = get<int>(j, "solver_max_iter", w);
  if (j.contains("init")) {
    t.init = get<std::string>(j, "init", w);
    if (t.init != "batch" && t.init != "oracle") throw ConfigError("tracker.init: expected batch or oracle");
  }
  if (j.contains("init_iters")) t.init_iters = get<int>(j, "init_iters", w);
  if (j.contains("init_oracle_se")) t.init_oracle_se = get<double>(j, "init_oracle_se", w);
  if (!(t.zeta > 0.0) || !(t.delta > 0.0) || !(t.alpha_constant > 0.0))
    throw ConfigError("tracker: zeta, delta and alpha_constant must be > 0");
  if (!(t.init_oracle_se >= 0.0 && t.init_oracle_se <= 1.0))
    throw ConfigError("tracker.init_oracle_se must lie in [0, 1]");
  if (t.init_iters < 1) throw ConfigError("tracker.init_iters must be >= 1");
  return t;
}

inline BenchConfig parse_bench(const json& j) {
  check_keys(j, {"trials", "seed", "jobs"}, "bench");
  BenchConfig b;
  if (j.contains("trials")) b.trials = get<int>(j, "trials", "bench");
  if (j.contains("seed")) b.seed = get<std::uint64_t>(j, "seed", "bench");
  if (j.contains("jobs")) b.jobs = get<int>(j, "jobs", "bench");
  if (b.trials < 1 || b.jobs < 1) throw ConfigError("bench: trials and jobs must be >= 1");
  return b;
}

}  // namespace detail

inline Config parse_config(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  detail::check_keys(j, {"datagen", "tracker", "bench"}, "config");
  Config c;
  if (j.contains("datagen")) {
    c.has_datagen = true;
    c.datagen = detail::parse_datagen(j.at("datagen"));
  }
  if (j.contains("tracker")) c.tracker = detail::parse_tracker(j.at("tracker"));
  if (j.contains("bench")) c.bench = detail::parse_bench(j.at("bench"));
  c.canonical = j.dump();
  c.hash = io::fnv1a64(c.canonical);
  return c;
}

inline Config load_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

// Fills every unset tracker knob from the data model and default_params.
inline TrackerParams resolve_tracker(const Config& c, Index n) {
  const TrackerConfig& t = c.tracker;
  const DatasetConfig* d = c.has_datagen ? &c.datagen : nullptr;
  const Index r = t.r ? *t.r : (d ? d->r : 0);
  if (r < 1) throw ConfigError("tracker.r is required without a datagen section");
  double lam_plus = 0.0, lam_minus = 0.0;
  if (d) {
    const auto lam = effective_lambda(*d);
    lam_plus = *std::max_element(lam.begin(), lam.end());
    lam_minus = *std::min_element(lam.begin(), lam.end());
  }
  if (t.lambda_plus) lam_plus = *t.lambda_plus;
  if (t.lambda_minus) lam_minus = *t.lambda_minus;
  double f = t.f ? *t.f : (lam_minus > 0.0 ? lam_plus / lam_minus : 0.0);
  const double x_min = t.x_min ? *t.x_min : (d ? d->x_min : 0.0);

  TrackerParams p;
  p.r = r;
  const bool need_defaults = !t.alpha || !t.K || !t.xi || !t.omega_supp ||
                             (!t.lambda_thresh && t.lambda_thresh_preset == "model");
  if (need_defaults) {
    if (!(f > 0.0) || !(lam_plus > 0.0) || !(x_min > 0.0))
      throw ConfigError("tracker: derived parameters need f, lambda_plus and x_min (from datagen or tracker)");
    p = default_params(r, n, f, lam_plus, x_min, t.zeta, t.delta, t.alpha_constant);
  }
  if (t.alpha) p.alpha = *t.alpha;
  if (t.K) p.K = *t.K;
  if (t.xi) p.cs.xi = *t.xi;
  if (t.omega_supp) p.cs.omega_supp = *t.omega_supp;
  if (t.lambda_thresh) {
    p.lambda_thresh = *t.lambda_thresh;
  } else if (t.lambda_thresh_preset != "model") {
    if (!(lam_minus > 0.0)) throw ConfigError("tracker.lambda_thresh preset needs lambda_minus");
    p.lambda_thresh = (t.lambda_thresh_preset == "synthetic" ? 0.0025 : 0.0011) * lam_minus;
  }
  p.cs.adaptive = t.adaptive;
  p.cs.solver_tol = t.solver_tol;
  p.cs.solver_max_iter = t.solver_max_iter;
  p.store_offline = t.store_offline;
  p.t_train = t.t_train ? *t.t_train : (d ? d->t_train : 0);
  try {
    validate(p);
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

}  // namespace reprocs
