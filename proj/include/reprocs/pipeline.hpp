#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "reprocs/config.hpp"
#include "reprocs/datagen.hpp"
#include "reprocs/metrics.hpp"
#include "reprocs/tracker.hpp"

namespace reprocs {

// Rotates the last column of P toward a seeded direction orthogonal to span(P)
// so that SE(result, P) equals se exactly.
inline Basis oracle_init(const Basis& p, double se, std::uint64_t seed) {
  if (!(se >= 0.0 && se <= 1.0)) throw PreconditionError("oracle_init: se must lie in [0, 1]");
  if (se == 0.0) return p;
  Rng rng(seed, stream::init, 0);
  SubspaceChangeSpec spec;
  spec.theta = std::asin(se);
  return rotate_subspace(p, spec, rng).P;
}

struct InitSpec {
  std::string mode = "batch";  // batch | oracle
  int iters = 30;
  double oracle_se = 1e-3;
  std::uint64_t seed = 0;
};

struct TrackOutput {
  Basis p0;
  double init_se = std::numeric_limits<double>::quiet_NaN();
  std::vector<FrameEstimate> online;
  std::vector<FrameEstimate> offline;
  std::vector<BasisEvent> events;
  BasisRegistry registry;
  std::size_t max_state_doubles = 0;
};

inline Basis initial_basis(const Matrix& y, const TrackerParams& p, const InitSpec& init, const GroundTruth* truth) {
  if (init.mode == "oracle") {
    if (truth == nullptr || truth->bases.empty()) throw ConfigError("oracle init needs the ground-truth bases");
    return oracle_init(truth->bases.front(), init.oracle_se, init.seed);
  }
  if (p.t_train < p.r + 1 || p.t_train > y.cols()) throw ConfigError("batch init needs r+1 <= t_train <= T");
  return init_batch(y.leftCols(p.t_train), p.r, init.iters);
}

// Streams frames [t_train, T) through a fresh tracker.
inline TrackOutput run_track(const Matrix& y, const TrackerParams& p, const InitSpec& init,
                             const GroundTruth* truth = nullptr) {
  TrackOutput out;
  out.p0 = initial_basis(y, p, init, truth);
  if (truth != nullptr && !truth->bases.empty()) out.init_se = subspace_error(out.p0, truth->bases.front());
  Tracker tr(out.p0, p);
  auto collect = [&] {
    for (BasisEvent& b : tr.take_bases()) {
      out.registry[b.id] = b.basis;
      out.events.push_back(std::move(b));
    }
  };
  collect();
  out.online.reserve(static_cast<std::size_t>(y.cols() - p.t_train));
  for (Index t = p.t_train; t < y.cols(); ++t) {
    out.online.push_back(tr.step(y.col(t)));
    collect();
    out.max_state_doubles = std::max(out.max_state_doubles, tr.state_doubles());
  }
  tr.finish();
  out.offline = tr.take_offline();
  return out;
}

inline InitSpec init_from_config(const TrackerConfig& t, std::uint64_t seed) {
  InitSpec s;
  s.mode = t.init;
  s.iters = t.init_iters;
  s.oracle_se = t.init_oracle_se;
  s.seed = seed;
  return s;
}

struct TrialResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double init_se = std::numeric_limits<double>::quiet_NaN();
  RunMetrics metrics;
  std::vector<SummaryRow> series;
};

inline TrialResult run_trial(const Config& c, const TrackerParams& p, std::uint64_t seed) {
  TrialResult res;
  res.seed = seed;
  try {
    Dataset ds = gen_dataset(c.datagen, seed);
    TrackOutput tr = run_track(ds.Y, p, init_from_config(c.tracker, seed), &ds.truth);
    res.init_se = tr.init_se;
    EvalOptions opt;
    opt.alpha = p.alpha;
    opt.K = p.K;
    res.metrics = evaluate(tr.online, ds.truth, tr.registry, p.store_offline ? &tr.offline : nullptr, opt);
    res.series = summarize(res.metrics, p.alpha, p.t_train);
    res.ok = true;
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  return res;
}

// Trials run on a worker pool; results land by index, so output order and
// values do not depend on scheduling.
inline std::vector<TrialResult> run_trials(const Config& c, int trials, std::uint64_t seed, int jobs) {
  if (!c.has_datagen) throw ConfigError("bench needs a datagen section");
  const TrackerParams p = resolve_tracker(c, c.datagen.n);
  std::vector<TrialResult> results(static_cast<std::size_t>(trials));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < trials; i = next++)
      results[static_cast<std::size_t>(i)] = run_trial(c, p, seed + static_cast<std::uint64_t>(i));
  };
  const int nthreads = std::max(1, std::min(jobs, trials));
  std::vector<std::thread> pool;
  for (int i = 1; i < nthreads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return results;
}

}  // namespace reprocs
