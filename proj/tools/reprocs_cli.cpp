// reprocs: generate synthetic data, track it, score runs, and benchmark.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reprocs/config.hpp"
#include "reprocs/datagen.hpp"
#include "reprocs/io.hpp"
#include "reprocs/metrics.hpp"
#include "reprocs/pipeline.hpp"
#include "reprocs/store.hpp"
#include "reprocs/tracker.hpp"
#include "reprocs/version.hpp"

namespace fs = std::filesystem;
using namespace reprocs;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kIo = 3, kNumerical = 4 };

int cmd_generate(const std::string& config_path, std::uint64_t seed, const fs::path& out, bool csv) {
  const Config c = load_config(config_path);
  if (!c.has_datagen) throw ConfigError("generate needs a datagen section");
  const Dataset ds = gen_dataset(c.datagen, seed);
  store::write_dataset(out, ds, c.hash, csv);
  return kOk;
}

int cmd_track(const fs::path& input, const std::string& config_path, const fs::path& out, int offline,
              double init_oracle, bool timing) {
  Config c = load_config(config_path);
  // External inputs may be a bare Y.rstm with no manifest.
  const json man = fs::exists(input / "manifest.json") ? store::read_manifest(input) : json::object();
  Matrix y = io::read_rstm(input / "Y.rstm");
  std::optional<Dataset> truth;
  if (man.value("kind", "") == "dataset") {
    truth = store::read_dataset(input);
    if (!c.tracker.t_train) c.tracker.t_train = truth->truth.t_train;
  }
  if (offline >= 0) c.tracker.store_offline = offline == 1;
  if (init_oracle >= 0) {
    c.tracker.init = "oracle";
    c.tracker.init_oracle_se = init_oracle;
  }
  if (c.has_datagen && c.datagen.n != y.rows())
    throw Misalignment("config datagen.n differs from the input's n");
  const TrackerParams p = resolve_tracker(c, y.rows());
  const std::uint64_t seed = man.value("seed", std::uint64_t{0});
  TrackOutput tr = run_track(y, p, init_from_config(c.tracker, seed), truth ? &truth->truth : nullptr);
  std::int64_t flagged = 0;
  for (const FrameEstimate& e : tr.online) flagged += e.flagged ? 1 : 0;
  if (flagged > 0) std::cerr << "reprocs track: " << flagged << " frame(s) flagged by the sparse solver\n";
  json m = {{"seed", seed},
            {"config_hash", io::hex64(c.hash)},
            {"t0", p.t_train},
            {"r", p.r},
            {"alpha", p.alpha},
            {"K", p.K},
            {"lambda_thresh", p.lambda_thresh},
            {"xi", p.cs.xi},
            {"omega_supp", p.cs.omega_supp}};
  if (!std::isnan(tr.init_se)) m["init_se"] = tr.init_se;
  store::write_run(out, y.rows(), tr.online, p.store_offline ? &tr.offline : nullptr, tr.events, m, timing);
  if (truth) {
    EvalOptions opt;
    opt.alpha = p.alpha;
    opt.K = p.K;
    const RunMetrics rm =
        evaluate(tr.online, truth->truth, tr.registry, p.store_offline ? &tr.offline : nullptr, opt);
    io::write_atomic(out / "metrics.csv", store::frame_rows_csv(rm.frames, timing));
    if (p.store_offline) io::write_atomic(out / "metrics_offline.csv", store::frame_rows_csv(rm.offline_frames, false));
  }
  return kOk;
}

std::string sibling(const fs::path& out, const std::string& suffix) {
  return (out.parent_path() / (out.stem().string() + suffix + out.extension().string())).string();
}

int cmd_eval(const fs::path& est_dir, const fs::path& truth_dir, const fs::path& out, bool timing, Index alpha,
             int K) {
  const Dataset ds = store::read_dataset(truth_dir);
  const json est_man = store::read_manifest(est_dir);
  store::RunFiles run = est_man.value("kind", "") == "dataset" ? store::truth_as_run(store::read_dataset(est_dir))
                                                                  : store::read_run(est_dir);
  if (run.n != ds.Y.rows()) throw Misalignment("estimate n differs from truth n");
  if (run.online.empty() || run.online.back().t + 1 != ds.Y.cols())
    throw Misalignment("estimate frame count differs from truth T");
  EvalOptions opt;
  opt.alpha = alpha > 0 ? alpha : est_man.value("alpha", Index{0});
  opt.K = K > 0 ? K : est_man.value("K", 0);
  const RunMetrics m = evaluate(run.online, ds.truth, run.registry, run.has_offline ? &run.offline : nullptr, opt);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_atomic(out, store::frame_rows_csv(m.frames, timing));
  if (run.has_offline) io::write_atomic(sibling(out, "_offline"), store::frame_rows_csv(m.offline_frames, false));
  std::string ch = "j,t_j,t_hat_j,delay_frames,spacing_ok\n";
  for (const ChangeRow& c : m.changes)
    ch += std::to_string(c.j) + "," + std::to_string(c.t_j) + "," + (c.t_hat_j ? std::to_string(*c.t_hat_j) : "") +
          "," + std::to_string(c.delay_frames) + "," + (c.spacing_ok ? "1" : "0") + "\n";
  io::write_atomic(sibling(out, "_changes"), ch);
  std::string agg = "metric,value\n";
  agg += "mean_se," + io::format_double(m.mean_se) + "\n";
  agg += "mean_se_offline," + io::format_double(m.mean_se_offline) + "\n";
  agg += "mean_l_rel_err," + io::format_double(m.mean_l_rel_err) + "\n";
  agg += "mean_l_rel_err_offline," + io::format_double(m.mean_l_rel_err_offline) + "\n";
  agg += "exact_support_frac," + io::format_double(m.exact_support_frac) + "\n";
  agg += "false_detections," + std::to_string(m.false_detections.size()) + "\n";
  agg += "flagged_frames," + std::to_string(m.flagged_frames) + "\n";
  agg += "mean_frame_time_us," + io::format_double(timing ? m.mean_frame_time_us : 0.0) + "\n";
  io::write_atomic(sibling(out, "_summary"), agg);
  const Index a = opt.alpha > 0 ? opt.alpha : 0;
  if (a > 0) {
    std::string s = "t,se,se_offline,l_rel_err,l_rel_err_offline\n";
    for (const SummaryRow& r : summarize(m, a, ds.truth.t_train))
      s += std::to_string(r.t) + "," + io::format_double(r.se) + "," + io::format_double(r.se_offline) + "," +
           io::format_double(r.l_rel_err) + "," + io::format_double(r.l_rel_err_offline) + "\n";
    io::write_atomic(sibling(out, "_series"), s);
  }
  return kOk;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

int cmd_bench(const std::string& config_path, int trials, std::int64_t seed_arg, const fs::path& out, int jobs) {
  const Config c = load_config(config_path);
  const int n_trials = trials > 0 ? trials : c.bench.trials;
  const std::uint64_t seed = seed_arg >= 0 ? static_cast<std::uint64_t>(seed_arg) : c.bench.seed;
  const int n_jobs = jobs > 0 ? jobs : c.bench.jobs;
  const TrackerParams p = resolve_tracker(c, c.datagen.n);
  const std::vector<TrialResult> res = run_trials(c, n_trials, seed, n_jobs);

  std::string per = "trial,seed,init_se,mean_se,mean_se_offline,mean_l_rel_err,mean_l_rel_err_offline,"
                    "exact_support_frac,detections,false_detections,max_delay,flagged_frames\n";
  std::string timing = "trial,seed,mean_frame_time_us\n";
  std::string failures = "trial,seed,error\n";
  std::vector<double> se, se_off, lre, lre_off, exact, ftime, delays;
  std::int64_t false_det = 0, pairs = 0, within = 0, failed = 0;
  std::map<std::int64_t, std::vector<const SummaryRow*>> series;
  for (std::size_t i = 0; i < res.size(); ++i) {
    const TrialResult& r = res[i];
    if (!r.ok) {
      ++failed;
      failures += std::to_string(i) + "," + std::to_string(r.seed) + ",\"" + r.error + "\"\n";
      continue;
    }
    const RunMetrics& m = r.metrics;
    std::int64_t det = 0, max_delay = -1;
    for (const ChangeRow& ch : m.changes) {
      ++pairs;
      if (ch.t_hat_j) {
        ++det;
        max_delay = std::max(max_delay, ch.delay_frames);
        delays.push_back(static_cast<double>(ch.delay_frames));
        if (ch.delay_frames <= 2 * p.alpha) ++within;
      }
    }
    false_det += static_cast<std::int64_t>(m.false_detections.size());
    per += std::to_string(i) + "," + std::to_string(r.seed) + "," + io::format_double(r.init_se) + "," +
           io::format_double(m.mean_se) + "," + io::format_double(m.mean_se_offline) + "," +
           io::format_double(m.mean_l_rel_err) + "," + io::format_double(m.mean_l_rel_err_offline) + "," +
           io::format_double(m.exact_support_frac) + "," + std::to_string(det) + "," +
           std::to_string(m.false_detections.size()) + "," + std::to_string(max_delay) + "," +
           std::to_string(m.flagged_frames) + "\n";
    timing += std::to_string(i) + "," + std::to_string(r.seed) + "," + io::format_double(m.mean_frame_time_us) + "\n";
    se.push_back(m.mean_se);
    if (!std::isnan(m.mean_se_offline)) se_off.push_back(m.mean_se_offline);
    lre.push_back(m.mean_l_rel_err);
    if (!std::isnan(m.mean_l_rel_err_offline)) lre_off.push_back(m.mean_l_rel_err_offline);
    exact.push_back(m.exact_support_frac);
    ftime.push_back(m.mean_frame_time_us);
    for (const SummaryRow& s : r.series) series[s.t].push_back(&s);
  }
  timing += "mean,," + io::format_double(mean_of(ftime)) + "\n";

  std::string agg = "metric,value\n";
  auto row = [&](const std::string& k, const std::string& v) { agg += k + "," + v + "\n"; };
  row("trials", std::to_string(n_trials));
  row("failed_trials", std::to_string(failed));
  row("seed", std::to_string(seed));
  row("mean_se", io::format_double(mean_of(se)));
  row("mean_se_offline", io::format_double(mean_of(se_off)));
  row("offline_online_ratio", io::format_double(mean_of(se_off) / mean_of(se)));
  row("mean_l_rel_err", io::format_double(mean_of(lre)));
  row("mean_l_rel_err_offline", io::format_double(mean_of(lre_off)));
  row("exact_support_frac", io::format_double(mean_of(exact)));
  row("changes_detected_within_2alpha",
      io::format_double(pairs > 0 ? static_cast<double>(within) / static_cast<double>(pairs) : 1.0));
  row("mean_delay_frames", io::format_double(mean_of(delays)));
  row("false_detections", std::to_string(false_det));

  std::string ser = "t,mean_se,mean_se_offline,mean_l_rel_err,mean_l_rel_err_offline\n";
  for (const auto& [t, rows] : series) {
    std::vector<double> a, b, cc, d;
    for (const SummaryRow* s : rows) {
      a.push_back(s->se);
      if (!std::isnan(s->se_offline)) b.push_back(s->se_offline);
      cc.push_back(s->l_rel_err);
      if (!std::isnan(s->l_rel_err_offline)) d.push_back(s->l_rel_err_offline);
    }
    ser += std::to_string(t) + "," + io::format_double(mean_of(a)) + "," + io::format_double(mean_of(b)) + "," +
           io::format_double(mean_of(cc)) + "," + io::format_double(mean_of(d)) + "\n";
  }

  fs::create_directories(out);
  io::write_atomic(out / "trials.csv", per);
  io::write_atomic(out / "aggregate.csv", agg);
  io::write_atomic(out / "series.csv", ser);
  io::write_atomic(out / "timing.csv", timing);
  if (failed > 0) io::write_atomic(out / "failures.csv", failures);
  store::write_manifest(out, {{"kind", "bench"},
                              {"seed", seed},
                              {"trials", n_trials},
                              {"config_hash", io::hex64(c.hash)}});
  if (failed > 0) {
    std::cerr << "reprocs bench: " << failed << " of " << n_trials << " trial(s) failed, see failures.csv\n";
    return kNumerical;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust subspace tracking: synthetic generation, tracking, evaluation and benchmarks"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config, out, input, est, truth;
  std::uint64_t seed = 0;
  bool csv = false;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  gen->add_option("--config", config, "JSON config with a datagen section")->required();
  gen->add_option("--seed", seed, "Dataset seed")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_flag("--csv", csv, "Also write CSV copies of Y, L and X");

  bool offline = false;
  double init_oracle = -1.0;
  bool no_timing = false;
  auto* track = app.add_subcommand("track", "Track a dataset or an external Y.rstm");
  track->add_option("--input", input, "Input directory holding Y.rstm and manifest.json")->required();
  track->add_option("--config", config, "JSON config")->required();
  track->add_option("--out", out, "Output directory")->required();
  auto* off_opt = track->add_option("--offline", offline, "Also write offline-refined estimates (true/false)");
  track->add_option("--init-oracle", init_oracle, "Initialize from the true basis perturbed to this SE");
  track->add_flag("--no-timing", no_timing, "Skip timing.csv");

  Index alpha = 0;
  int K = 0;
  bool eval_no_timing = false;
  auto* ev = app.add_subcommand("eval", "Score estimates against ground truth");
  ev->add_option("--est", est, "Estimates directory (or a dataset directory)")->required();
  ev->add_option("--truth", truth, "Dataset directory")->required();
  ev->add_option("--out", out, "Per-frame metrics CSV path")->required();
  ev->add_option("--alpha", alpha, "Window length for the change-spacing flag and series sampling");
  ev->add_option("--K", K, "Update count for the change-spacing flag");
  ev->add_flag("--no-timing", eval_no_timing, "Write zero frame times");

  int trials = 0, jobs = 0;
  std::int64_t bseed = -1;
  auto* bench = app.add_subcommand("bench", "Run seeded generate+track+eval trials");
  bench->add_option("--config", config, "JSON config")->required();
  bench->add_option("--trials", trials, "Trial count (overrides bench.trials)");
  bench->add_option("--seed", bseed, "First seed (overrides bench.seed)");
  bench->add_option("--out", out, "Output directory")->required();
  bench->add_option("--jobs", jobs, "Worker threads (overrides bench.jobs)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfig;
  }

  try {
    if (*gen) return cmd_generate(config, seed, out, csv);
    if (*track) return cmd_track(input, config, out, off_opt->count() ? (offline ? 1 : 0) : -1, init_oracle, !no_timing);
    if (*ev) return cmd_eval(est, truth, out, !eval_no_timing, alpha, K);
    if (*bench) return cmd_bench(config, trials, bseed, out, jobs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const FormatError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const Misalignment& e) {
    std::cerr << "Misalignment: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const PreconditionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kOk;
}
