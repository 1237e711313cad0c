#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reprocs/linalg.hpp"
#include "reprocs/sparse_recovery.hpp"

namespace reprocs {

struct TrackerParams {
  Index r = 1;
  Index alpha = 2;
  int K = 1;
  double lambda_thresh = 1.0;
  Index t_train = 0;
  ProjCsParams cs;
  bool store_offline = false;
  double svd_tol = 1e-10;
  int svd_max_iter = 10000;
};

inline void validate(const TrackerParams& p) {
  if (p.r < 1) throw PreconditionError("TrackerParams: r must be >= 1");
  if (p.alpha < p.r + 1) throw PreconditionError("TrackerParams: alpha must be >= r+1");
  if (p.K < 1) throw PreconditionError("TrackerParams: K must be >= 1");
  if (!(p.lambda_thresh > 0.0)) throw PreconditionError("TrackerParams: lambda_thresh must be > 0");
  validate(p.cs);
}

// Chosen so that n=5000, r=5, f=16 gives alpha=500.
inline const double kDefaultAlphaConstant = 500.0 / (256.0 * 5.0 * std::log(5000.0));

inline TrackerParams default_params(Index r, Index n, double f, double lambda_plus, double x_min, double zeta,
                                    double delta, double alpha_constant = kDefaultAlphaConstant) {
  if (r < 1 || n < 1 || !(f > 0) || !(lambda_plus > 0) || !(x_min > 0) || !(zeta > 0) || !(delta > 0))
    throw PreconditionError("default_params: inputs must be positive");
  TrackerParams p;
  p.r = r;
  const double a = alpha_constant * f * f * static_cast<double>(r) * std::log(static_cast<double>(n));
  p.alpha = std::max<Index>(r + 1, static_cast<Index>(std::ceil(a - 1e-9)));
  p.K = std::max(1, static_cast<int>(std::ceil(-0.8 * std::log(0.9 * zeta) - 1e-9)));
  p.cs.xi = x_min / 15.0;
  p.cs.omega_supp = x_min / 2.0;
  p.lambda_thresh = 5.0 * zeta * zeta * f * lambda_plus;
  return p;
}

enum class Phase { Detect, Update };

inline const char* phase_name(Phase p) { return p == Phase::Detect ? "detect" : "update"; }

struct FrameEstimate {
  std::int64_t t = 0;
  Vector x_hat;
  Vector l_hat;
  IndexSet support;
  Phase phase = Phase::Detect;
  int j = 1;
  int k = 0;
  bool detect_flag = false;
  double frame_time_us = 0.0;
  std::uint64_t basis_id = 0;  // id of the estimate in force after this frame
  bool flagged = false;
};

// A basis estimate the tracker started using at frame t.
struct BasisEvent {
  std::uint64_t id = 0;
  std::int64_t t = 0;
  Basis basis;
};

struct HistoryRecord {
  std::int64_t t = 0;
  Vector y;
  IndexSet support;
  Vector x_online;  // online values on the support, in support order
  Phase phase = Phase::Detect;
  int j = 1;
  int k = 0;
  bool detect_flag = false;
};

struct TrackerState {
  Phase phase = Phase::Detect;
  int k = 0;  // Update: index of the window being filled, 1..K+1
  int j = 1;  // change currently awaited or being tracked
  std::optional<std::int64_t> t_hat_j;
  std::int64_t t_hat_fin = -1;
  Basis P_star;
  std::optional<Vector> P_rot;
  Basis P_current;
  Matrix buffer;  // n x alpha, columns [0, fill) valid
  Index fill = 0;
  std::int64_t t = 0;  // index of the next frame
  std::uint64_t basis_id = 0;
  std::uint64_t next_basis_id = 1;
  std::optional<PrevFrame> prev;
  std::vector<HistoryRecord> history;
  double last_detect_stat = 0.0;  // sigma_max(B)^2 / alpha lower bound of the last check
  std::vector<std::int64_t> detections;
};

inline TrackerState init_from_basis(const Basis& p0_hat, const TrackerParams& params) {
  validate(params);
  if (p0_hat.d() != params.r)
    throw BadRank("init_from_basis: basis has " + std::to_string(p0_hat.d()) + " columns, expected r=" +
                  std::to_string(params.r));
  TrackerState s;
  s.P_star = p0_hat;
  s.P_current = p0_hat;
  s.buffer = Matrix::Zero(p0_hat.n(), params.alpha);
  s.t = params.t_train;
  s.t_hat_fin = params.t_train - 1;
  return s;
}

// Simplified alternating projections: hard-threshold the residual, refit a
// rank-r truncated SVD, with thresholds decaying by 0.7 per pass. Within a pass
// the threshold is iterated to a fixed point of tau = beta sigma1(Y - X) 0.7^k,
// since sigma1(Y) alone is inflated by the very outliers being removed.
inline Basis init_batch(const Matrix& y_train, Index r, int iters = 30) {
  if (r < 1 || y_train.cols() < r + 1 || y_train.rows() < r)
    throw PreconditionError("init_batch: need at least r+1 frames and n >= r");
  if (y_train.norm() == 0.0) throw RankDeficient("init_batch: training block is all zero");
  const double beta = 1.0 / std::sqrt(static_cast<double>(y_train.cols()));
  TruncatedSvd svd = truncated_svd(y_train, r, 1e-8, 200, nullptr, false);
  double sigma1 = svd.sigma(0);
  Matrix low = Matrix::Zero(y_train.rows(), y_train.cols());
  Matrix clean(y_train.rows(), y_train.cols());
  auto threshold = [&](double tau) {
    clean = y_train;
    for (Index c = 0; c < y_train.cols(); ++c)
      for (Index i = 0; i < y_train.rows(); ++i)
        if (std::abs(y_train(i, c) - low(i, c)) > tau) clean(i, c) = low(i, c);
  };
  for (int k = 1; k <= iters; ++k) {
    const double decay = std::pow(0.7, k);
    double tau = beta * sigma1 * decay;
    threshold(tau);
    for (int inner = 0; inner < 20; ++inner) {
      const double s1 = truncated_svd(clean, 1, 1e-6, 100, nullptr, false).sigma(0);
      const double next = beta * s1 * decay;
      if (!(next < tau * (1.0 - 1e-3))) break;
      tau = next;
      threshold(tau);
    }
    const bool last = k == iters;
    svd = truncated_svd(clean, r, last ? 1e-10 : 1e-8, last ? 10000 : 200, &svd.u, last);
    sigma1 = svd.sigma(0);
    low.noalias() = svd.u.mat() * (svd.u.mat().transpose() * clean);
  }
  return svd.u;
}

inline void clear_buffer(TrackerState& s) { s.fill = 0; }

// Change test on a full, aligned window. On success the window is discarded
// and the tracker enters the first update window.
inline bool detect_change(TrackerState& s, const TrackerParams& params) {
  if (s.phase != Phase::Detect) throw PreconditionError("detect_change: not in detect phase");
  if (s.fill != params.alpha) throw PreconditionError("detect_change: buffer not full");
  const Matrix b = project_complement(s.P_star, s.buffer);
  const double level = std::sqrt(static_cast<double>(params.alpha) * params.lambda_thresh);
  const SigmaTest st = sigma_max_reaches(b, level, params.svd_tol, params.svd_max_iter);
  s.last_detect_stat = st.estimate * st.estimate / static_cast<double>(params.alpha);
  clear_buffer(s);
  if (!st.reached) return false;
  s.t_hat_j = s.t;
  s.detections.push_back(s.t);
  s.phase = Phase::Update;
  s.k = 1;
  return true;
}

inline void projection_svd_update(TrackerState& s, const TrackerParams& params) {
  if (s.phase != Phase::Update || s.k < 1 || s.k > params.K)
    throw PreconditionError("projection_svd_update: not in an update window");
  if (s.fill != params.alpha) throw PreconditionError("projection_svd_update: buffer not full");
  const Matrix b = project_complement(s.P_star, s.buffer);
  SingularPair sp = top_singular_vector(b, params.svd_tol, params.svd_max_iter);
  // Re-project to remove round-off leakage into span(P_star).
  Vector u = project_complement(s.P_star, sp.u);
  u.normalize();
  Matrix cur(s.P_star.n(), s.P_star.d() + 1);
  cur.leftCols(s.P_star.d()) = s.P_star.mat();
  cur.col(s.P_star.d()) = u;
  s.P_rot = u;
  s.P_current = Basis::trusted(std::move(cur));
  s.basis_id = s.next_basis_id++;
  s.k += 1;
  clear_buffer(s);
}

inline void deletion_svd(TrackerState& s, const TrackerParams& params) {
  if (s.phase != Phase::Update || s.k != params.K + 1)
    throw PreconditionError("deletion_svd: not in the deletion window");
  if (s.fill != params.alpha) throw PreconditionError("deletion_svd: buffer not full");
  Basis pj = truncated_svd(s.buffer, params.r, params.svd_tol, params.svd_max_iter).u;
  s.P_star = pj;
  s.P_current = std::move(pj);
  s.P_rot.reset();
  s.basis_id = s.next_basis_id++;
  s.j += 1;
  s.k = 0;
  s.phase = Phase::Detect;
  s.t_hat_fin = s.t;
  clear_buffer(s);
}

// Re-solves the stored frames by least squares on their estimated supports
// with a fixed refined basis.
inline std::vector<FrameEstimate> offline_pass(const std::vector<HistoryRecord>& history, const Basis& p_off,
                                               std::uint64_t basis_id) {
  std::vector<FrameEstimate> out;
  out.reserve(history.size());
  for (const HistoryRecord& h : history) {
    if (h.y.size() != p_off.n()) throw MissingHistory("offline_pass: history frame has wrong length");
    FrameEstimate e;
    e.t = h.t;
    e.support = h.support;
    e.phase = h.phase;
    e.j = h.j;
    e.k = h.k;
    e.detect_flag = h.detect_flag;
    e.basis_id = basis_id;
    const Vector y_tilde = project_complement(p_off, h.y);
    try {
      e.x_hat = restricted_ls(p_off, y_tilde, h.support);
    } catch (const IllConditioned&) {
      e.flagged = true;
      e.x_hat = Vector::Zero(h.y.size());
      for (std::size_t i = 0; i < h.support.size(); ++i) e.x_hat(h.support[i]) = h.x_online(static_cast<Index>(i));
    }
    e.l_hat = h.y - e.x_hat;
    detail::enforce_split_identity(h.y, e.x_hat, e.l_hat);
    out.push_back(std::move(e));
  }
  return out;
}

class Tracker {
 public:
  Tracker(const Basis& p0_hat, TrackerParams params) : params_(std::move(params)) {
    state_ = init_from_basis(p0_hat, params_);
    bases_.push_back({state_.basis_id, state_.t, state_.P_current});
  }

  const TrackerParams& params() const { return params_; }
  const TrackerState& state() const { return state_; }

  FrameEstimate step(const Vector& y) {
    if (y.size() != state_.P_current.n()) throw DimensionMismatch("step: frame length differs from n");
    const auto t0 = std::chrono::steady_clock::now();
    FrameEstimate e;
    e.t = state_.t;
    e.phase = state_.phase;
    e.j = state_.j;
    e.k = state_.phase == Phase::Update ? state_.k : 0;

    ProjCsResult cs;
    try {
      cs = projected_cs_step(state_.P_current, y, params_.cs, state_.prev ? &*state_.prev : nullptr);
    } catch (const Error&) {
      // Keep the stream alive: treat the frame as outlier-free.
      cs = ProjCsResult{};
      cs.x_hat_cs = Vector::Zero(y.size());
      cs.x_hat = Vector::Zero(y.size());
      cs.l_hat = y;
      cs.solver_failed = true;
    }
    e.flagged = cs.flagged();

    state_.buffer.col(state_.fill++) = cs.l_hat;
    if (params_.store_offline) {
      HistoryRecord h;
      h.t = e.t;
      h.y = y;
      h.support = cs.support;
      h.x_online.resize(static_cast<Index>(cs.support.size()));
      for (std::size_t i = 0; i < cs.support.size(); ++i) h.x_online(static_cast<Index>(i)) = cs.x_hat(cs.support[i]);
      h.phase = e.phase;
      h.j = e.j;
      h.k = e.k;
      state_.history.push_back(std::move(h));
    }
    if (!state_.prev) state_.prev.emplace();
    state_.prev->l_hat = cs.l_hat;
    state_.prev->x_hat = cs.x_hat;
    state_.prev->support = cs.support;
    if (cs.mu > 0.0) state_.prev->mu = cs.mu;

    if (state_.fill == params_.alpha) transition(e);

    e.basis_id = state_.basis_id;
    e.x_hat = std::move(cs.x_hat);
    e.l_hat = std::move(cs.l_hat);
    e.support = std::move(cs.support);
    state_.t += 1;
    e.frame_time_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    return e;
  }

  // Refines whatever history is left after the last offline anchor with the
  // current estimate. Call once after the final frame.
  void finish() {
    if (!params_.store_offline || state_.history.empty()) return;
    emit_offline(state_.P_current, state_.basis_id);
  }

  std::vector<BasisEvent> take_bases() { return std::exchange(bases_, {}); }
  std::vector<FrameEstimate> take_offline() { return std::exchange(offline_, {}); }

  // Doubles held by the online state, excluding the offline history.
  std::size_t state_doubles() const {
    std::size_t c = static_cast<std::size_t>(state_.buffer.size() + state_.P_star.mat().size() +
                                             state_.P_current.mat().size());
    if (state_.P_rot) c += static_cast<std::size_t>(state_.P_rot->size());
    if (state_.prev) c += static_cast<std::size_t>(state_.prev->l_hat.size() + state_.prev->x_hat.size());
    return c;
  }

 private:
  void transition(FrameEstimate& e) {
    if (state_.phase == Phase::Detect) {
      if (detect_change(state_, params_)) e.detect_flag = true;
      if (params_.store_offline && e.detect_flag) state_.history.back().detect_flag = true;
      return;
    }
    if (state_.k <= params_.K) {
      projection_svd_update(state_, params_);
      bases_.push_back({state_.basis_id, state_.t + 1, state_.P_current});
      if (state_.k == params_.K + 1 && params_.store_offline) emit_offline(state_.P_current, state_.basis_id);
      return;
    }
    deletion_svd(state_, params_);
    bases_.push_back({state_.basis_id, state_.t + 1, state_.P_current});
  }

  void emit_offline(const Basis& p_off, std::uint64_t id) {
    std::vector<FrameEstimate> refined = offline_pass(state_.history, p_off, id);
    for (FrameEstimate& f : refined) offline_.push_back(std::move(f));
    state_.history.clear();
  }

  TrackerParams params_;
  TrackerState state_;
  std::vector<BasisEvent> bases_;
  std::vector<FrameEstimate> offline_;
};

struct EvdReport {
  double se = 0.0;        // SE([P_star, P_rot_hat], P_rot)
  double se_bound = 0.0;  // 0.4 q_rot + 0.11 zeta
  double lambda_max = 0.0;
  double lambda_floor = 0.0;  // (0.97 sin^2 - 0.4 q_rot |sin| - 0.15 zeta |sin|) lambda_ch
  bool se_ok = false;
  bool lambda_ok = false;
  Vector p_rot_hat;

  bool passed() const { return se_ok && lambda_ok; }
};

// One projection-EVD step on an alpha-frame window, scored against the
// one-step error bound and eigenvalue floor for PCA in data-dependent noise.
// Not used by the streaming tracker.
inline EvdReport projection_evd_check(const Basis& p_star_hat, const Matrix& frames, const Vector& p_rot_true,
                                      double q_rot, double zeta, double sin_theta, double lambda_ch) {
  if (frames.rows() != p_star_hat.n() || p_rot_true.size() != p_star_hat.n())
    throw DimensionMismatch("projection_evd_check: dimensions differ");
  EvdReport rep;
  const Matrix b = project_complement(p_star_hat, frames);
  const SingularPair sp = top_singular_vector(b, 1e-12, 100000);
  Vector u = project_complement(p_star_hat, sp.u);
  u.normalize();
  rep.p_rot_hat = u;
  Matrix ph(p_star_hat.n(), p_star_hat.d() + 1);
  ph.leftCols(p_star_hat.d()) = p_star_hat.mat();
  ph.col(p_star_hat.d()) = u;
  Matrix target = p_rot_true / p_rot_true.norm();
  rep.se = subspace_error(Basis::trusted(ph), Basis::trusted(target));
  rep.lambda_max = sp.sigma * sp.sigma / static_cast<double>(frames.cols());
  const double s = std::abs(sin_theta);
  rep.se_bound = 0.4 * q_rot + 0.11 * zeta;
  rep.lambda_floor = (0.97 * s * s - 0.4 * q_rot * s - 0.15 * zeta * s) * lambda_ch;
  rep.se_ok = rep.se < rep.se_bound || (q_rot == 0.0 && zeta == 0.0 && rep.se <= 1e-10);
  rep.lambda_ok = rep.lambda_max >= rep.lambda_floor;
  return rep;
}

}  // namespace reprocs
