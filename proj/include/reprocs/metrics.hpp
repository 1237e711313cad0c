#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "reprocs/datagen.hpp"
#include "reprocs/tracker.hpp"

namespace reprocs {

using BasisRegistry = std::map<std::uint64_t, Basis>;

struct FrameRow {
  std::int64_t t = 0;
  double se = 0.0;
  double l_rel_err = 0.0;
  double x_abs_err = 0.0;
  double supp_precision = 1.0;
  double supp_recall = 1.0;
  Phase phase = Phase::Detect;
  int j = 1;
  int k = 0;
  bool detect_flag = false;
  double frame_time_us = 0.0;
  bool flagged = false;
};

struct ChangeRow {
  int j = 0;
  std::int64_t t_j = 0;
  std::optional<std::int64_t> t_hat_j;
  std::int64_t delay_frames = -1;  // -1 when undetected
  bool spacing_ok = true;          // t_{j+1} - t_j > (K+3) alpha
};

struct RunMetrics {
  std::vector<FrameRow> frames;
  std::vector<FrameRow> offline_frames;
  std::vector<ChangeRow> changes;
  std::vector<std::int64_t> false_detections;
  double mean_se = 0.0;
  double mean_se_offline = std::numeric_limits<double>::quiet_NaN();
  double mean_l_rel_err = 0.0;
  double mean_l_rel_err_offline = std::numeric_limits<double>::quiet_NaN();
  double mean_frame_time_us = 0.0;
  double exact_support_frac = 1.0;
  std::int64_t flagged_frames = 0;
};

struct EvalOptions {
  Index alpha = 0;  // spacing flag is skipped when zero
  int K = 0;
  int timing_warmup = 10;
};

// 0/0 is 0; anything else over 0 is infinite.
inline double safe_ratio(double num, double den) {
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

inline std::int64_t intersection_size(const IndexSet& a, const IndexSet& b) {
  std::int64_t c = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++c;
      ++i;
      ++j;
    }
  }
  return c;
}

inline void support_scores(const IndexSet& est, const IndexSet& truth, double& precision, double& recall) {
  const auto hit = static_cast<double>(intersection_size(est, truth));
  if (est.empty())
    precision = truth.empty() ? 1.0 : 0.0;
  else
    precision = hit / static_cast<double>(est.size());
  recall = truth.empty() ? 1.0 : hit / static_cast<double>(truth.size());
}

namespace detail {

inline FrameRow score_frame(const FrameEstimate& e, const GroundTruth& truth, const BasisRegistry& reg) {
  const Index n = truth.L.rows();
  if (e.t < 0 || e.t >= truth.L.cols()) throw Misalignment("evaluate: frame index outside ground truth");
  if (e.x_hat.size() != n || e.l_hat.size() != n) throw Misalignment("evaluate: estimate length differs from n");
  const auto it = reg.find(e.basis_id);
  if (it == reg.end()) throw Misalignment("evaluate: unknown basis id " + std::to_string(e.basis_id));
  if (it->second.n() != n) throw Misalignment("evaluate: basis dimension differs from n");
  FrameRow row;
  row.t = e.t;
  row.se = subspace_error(it->second, truth.bases[static_cast<std::size_t>(truth.segment_of(e.t))]);
  const auto l = truth.L.col(e.t);
  row.l_rel_err = safe_ratio((e.l_hat - l).squaredNorm(), l.squaredNorm());
  row.x_abs_err = (e.x_hat - truth.X.col(e.t)).norm();
  support_scores(e.support, truth.supports[static_cast<std::size_t>(e.t)], row.supp_precision, row.supp_recall);
  row.phase = e.phase;
  row.j = e.j;
  row.k = e.k;
  row.detect_flag = e.detect_flag;
  row.frame_time_us = e.frame_time_us;
  row.flagged = e.flagged;
  return row;
}

}  // namespace detail

inline RunMetrics evaluate(const std::vector<FrameEstimate>& estimates, const GroundTruth& truth,
                           const BasisRegistry& reg, const std::vector<FrameEstimate>* offline = nullptr,
                           const EvalOptions& opt = {}) {
  RunMetrics m;
  m.frames.reserve(estimates.size());
  double se_sum = 0.0, lre_sum = 0.0, time_sum = 0.0;
  std::int64_t exact = 0, timed = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    FrameRow row = detail::score_frame(estimates[i], truth, reg);
    se_sum += row.se;
    lre_sum += row.l_rel_err;
    if (row.supp_precision == 1.0 && row.supp_recall == 1.0) ++exact;
    if (static_cast<int>(i) >= opt.timing_warmup) {
      time_sum += row.frame_time_us;
      ++timed;
    }
    if (row.flagged) ++m.flagged_frames;
    m.frames.push_back(row);
  }
  if (!m.frames.empty()) {
    const auto cnt = static_cast<double>(m.frames.size());
    m.mean_se = se_sum / cnt;
    m.mean_l_rel_err = lre_sum / cnt;
    m.exact_support_frac = static_cast<double>(exact) / cnt;
  }
  if (timed > 0) m.mean_frame_time_us = time_sum / static_cast<double>(timed);

  if (offline != nullptr && !offline->empty()) {
    double so = 0.0, lo = 0.0;
    for (const FrameEstimate& e : *offline) {
      FrameRow row = detail::score_frame(e, truth, reg);
      so += row.se;
      lo += row.l_rel_err;
      m.offline_frames.push_back(row);
    }
    std::sort(m.offline_frames.begin(), m.offline_frames.end(),
              [](const FrameRow& a, const FrameRow& b) { return a.t < b.t; });
    m.mean_se_offline = so / static_cast<double>(offline->size());
    m.mean_l_rel_err_offline = lo / static_cast<double>(offline->size());
  }

  // Each detection goes to the earliest undetected change at or before it.
  for (std::size_t j = 0; j < truth.change_times.size(); ++j) {
    ChangeRow c;
    c.j = static_cast<int>(j) + 1;
    c.t_j = truth.change_times[j];
    if (opt.alpha > 0 && j + 1 < truth.change_times.size())
      c.spacing_ok = truth.change_times[j + 1] - c.t_j > static_cast<std::int64_t>(opt.K + 3) * opt.alpha;
    m.changes.push_back(c);
  }
  for (const FrameRow& row : m.frames) {
    if (!row.detect_flag) continue;
    bool matched = false;
    for (ChangeRow& c : m.changes) {
      if (!c.t_hat_j && c.t_j <= row.t) {
        c.t_hat_j = row.t;
        c.delay_frames = row.t - c.t_j;
        matched = true;
        break;
      }
    }
    if (!matched) m.false_detections.push_back(row.t);
  }
  return m;
}

struct SummaryRow {
  std::int64_t t = 0;
  double se = 0.0;
  double se_offline = std::numeric_limits<double>::quiet_NaN();
  double l_rel_err = 0.0;
  double l_rel_err_offline = std::numeric_limits<double>::quiet_NaN();
};

// Samples the series at t = t_train + k alpha - 1 (k >= 1), plus the final
// frame when it is not already a sample point.
inline std::vector<SummaryRow> summarize(const RunMetrics& m, Index alpha, std::int64_t t_train) {
  std::vector<SummaryRow> rows;
  if (m.frames.empty() || alpha < 1) return rows;
  std::map<std::int64_t, const FrameRow*> off;
  for (const FrameRow& r : m.offline_frames) off[r.t] = &r;
  const std::int64_t last = m.frames.back().t;
  auto emit = [&](const FrameRow& r) {
    SummaryRow s;
    s.t = r.t;
    s.se = r.se;
    s.l_rel_err = r.l_rel_err;
    if (auto it = off.find(r.t); it != off.end()) {
      s.se_offline = it->second->se;
      s.l_rel_err_offline = it->second->l_rel_err;
    }
    rows.push_back(s);
  };
  for (const FrameRow& r : m.frames) {
    const std::int64_t u = r.t - t_train + 1;
    if ((u >= alpha && u % alpha == 0) || r.t == last) emit(r);
  }
  return rows;
}

}  // namespace reprocs
