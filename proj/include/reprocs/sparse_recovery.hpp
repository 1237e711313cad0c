#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "reprocs/linalg.hpp"

namespace reprocs {

// Bit flags for per-frame threshold adaptation.
enum AdaptiveFlags : unsigned {
  adapt_fixed = 0,
  adapt_xi_from_prev_lhat = 1u << 0,
  adapt_xmin_from_prev_support = 1u << 1,
};

struct ProjCsParams {
  double xi = 0.0;          // l2 residual budget
  double omega_supp = 1.0;  // support threshold
  double solver_tol = 1e-6;
  int solver_max_iter = 2000;
  int mu_max_steps = 30;
  unsigned adaptive = adapt_fixed;
};

inline void validate(const ProjCsParams& p) {
  if (!(p.xi >= 0.0)) throw PreconditionError("ProjCsParams: xi must be >= 0");
  if (!(p.omega_supp > 0.0)) throw PreconditionError("ProjCsParams: omega_supp must be > 0");
  if (!(p.solver_tol > 0.0) || p.solver_max_iter < 1 || p.mu_max_steps < 1)
    throw PreconditionError("ProjCsParams: bad solver settings");
}

struct BpdnResult {
  Vector x;
  double mu = 0.0;
  double residual = 0.0;  // ||y_tilde - Psi x||
  int outer_steps = 0;
  int admm_iterations = 0;
  bool converged = true;
};

namespace detail {

struct AdmmWork {
  Vector z, u, x, w, v, zold;
  Vector pw;
};

// ADMM for min 0.5||y - Psi x||^2 + mu ||x||_1 with Psi = I - P P^T and
// rho = 1. The x-update inverts Psi + rho I in closed form. z and u carry the
// warm start in and the solution out. Returns the iteration count, negative on
// hitting max_iter.
inline int admm_lasso(const Matrix& p, const Vector& psi_y, double mu, double tol, int max_iter,
                      AdmmWork& wk) {
  constexpr double rho = 1.0;
  const double a = 1.0 / (1.0 + rho);
  const double c = 1.0 / rho - a;
  const Index n = psi_y.size();
  const double eps = tol * std::sqrt(static_cast<double>(n));
  const double kappa = mu / rho;
  wk.pw.resize(p.cols());
  for (int it = 1; it <= max_iter; ++it) {
    wk.w = psi_y + rho * (wk.z - wk.u);
    wk.x = a * wk.w;
    if (p.cols() > 0) {
      wk.pw.noalias() = p.transpose() * wk.w;
      wk.x.noalias() += c * (p * wk.pw);
    }
    wk.zold = wk.z;
    wk.v = wk.x + wk.u;
    wk.z = wk.v.array().sign() * (wk.v.array().abs() - kappa).max(0.0);
    wk.u += wk.x - wk.z;
    const double r_pri = (wk.x - wk.z).norm();
    const double r_dual = rho * (wk.z - wk.zold).norm();
    if (r_pri <= eps && r_dual <= eps) return it;
  }
  return -max_iter;
}

inline double residual_norm(const Matrix& p, const Vector& y_tilde, const Vector& x) {
  Vector r = y_tilde - x;
  if (p.cols() > 0) r.noalias() += p * (p.transpose() * x);
  return r.norm();
}

}  // namespace detail

// min ||x||_1 s.t. ||y_tilde - Psi x|| <= xi, solved as a LASSO whose penalty
// mu is searched (Illinois false position inside a bisection bracket) until
// the residual lands in [0.95 xi, xi]. mu_hint seeds the search, typically the
// previous frame's mu.
inline BpdnResult bpdn_solve_ex(const Basis& p_hat, const Vector& y_tilde, double xi, double tol = 1e-6,
                                int max_iter = 2000, int max_outer = 30,
                                std::optional<double> mu_hint = std::nullopt) {
  const Index n = p_hat.n();
  if (y_tilde.size() != n) throw DimensionMismatch("bpdn_solve: length mismatch");
  BpdnResult out;
  const double ynorm = y_tilde.norm();
  if (ynorm <= xi) {
    out.x = Vector::Zero(n);
    out.residual = ynorm;
    return out;
  }
  const Matrix& p = p_hat.mat();
  const Vector psi_y = project_complement(p_hat, y_tilde);
  const double lo_target = 0.95 * xi;
  const double target = 0.975 * xi;

  double mu_lo = 0.0;
  double f_lo = detail::residual_norm(p, y_tilde, psi_y) - target;
  double mu_hi = psi_y.cwiseAbs().maxCoeff();
  double f_hi = ynorm - target;
  if (f_lo > 0.0) {
    // Not even the unpenalized fit reaches the budget; report the closest point.
    out.x = psi_y;
    out.residual = f_lo + target;
    out.converged = false;
    return out;
  }

  double mu = 0.0;
  if (mu_hint && *mu_hint > 0.0 && *mu_hint < mu_hi) {
    mu = *mu_hint;
  } else {
    const double big = (psi_y.array().abs() > xi).count();
    mu = std::min(0.5 * mu_hi, xi / std::sqrt(std::max(1.0, big)));
  }

  detail::AdmmWork wk;
  wk.z = Vector::Zero(n);
  wk.u = Vector::Zero(n);
  double mu_prev = 0.0;
  int side = 0;  // Illinois bookkeeping: which endpoint moved last
  Vector best_x;
  double best_res = -1.0;
  double best_mu = 0.0;
  bool all_converged = true;
  for (int step = 1; step <= max_outer; ++step) {
    if (mu_prev > 0.0) wk.u *= mu / mu_prev;
    const int its = detail::admm_lasso(p, psi_y, mu, tol, max_iter, wk);
    out.admm_iterations += std::abs(its);
    const bool conv = its > 0;
    mu_prev = mu;
    out.outer_steps = step;
    const double res = detail::residual_norm(p, y_tilde, wk.z);
    if (res <= xi * (1.0 + 10.0 * tol) && res > best_res) {
      best_res = res;
      best_x = wk.z;
      best_mu = mu;
      all_converged = conv;
    }
    if (res >= lo_target && res <= xi) break;
    const double f = res - target;
    if (f < 0.0) {
      mu_lo = mu;
      f_lo = f;
      if (side == -1) f_hi *= 0.5;
      side = -1;
    } else {
      mu_hi = mu;
      f_hi = f;
      if (side == 1) f_lo *= 0.5;
      side = 1;
    }
    double next = (mu_lo * f_hi - mu_hi * f_lo) / (f_hi - f_lo);
    const double width = mu_hi - mu_lo;
    if (!(next > mu_lo + 1e-3 * width && next < mu_hi - 1e-3 * width)) next = 0.5 * (mu_lo + mu_hi);
    mu = next;
  }
  if (best_res < 0.0) {
    // No feasible iterate; fall back to the least-penalized one we can afford.
    out.x = wk.z;
    out.mu = mu_prev;
    out.residual = detail::residual_norm(p, y_tilde, wk.z);
    out.converged = false;
    return out;
  }
  out.x = std::move(best_x);
  out.mu = best_mu;
  out.residual = best_res;
  out.converged = all_converged && best_res >= lo_target;
  return out;
}

inline Vector bpdn_solve(const Basis& p_hat, const Vector& y_tilde, double xi, double tol = 1e-6,
                         int max_iter = 2000) {
  BpdnResult r = bpdn_solve_ex(p_hat, y_tilde, xi, tol, max_iter);
  if (!r.converged)
    throw NoConvergence("bpdn_solve: residual " + std::to_string(r.residual) + " outside [0.95xi, xi]",
                        r.admm_iterations, r.residual);
  return r.x;
}

inline IndexSet estimate_support(const Vector& x_cs, double omega_supp) {
  if (!(omega_supp > 0.0)) throw PreconditionError("estimate_support: omega_supp must be > 0");
  IndexSet s;
  for (Index i = 0; i < x_cs.size(); ++i)
    if (std::abs(x_cs(i)) > omega_supp) s.push_back(i);
  return s;
}

struct PrevFrame {
  Vector l_hat;
  Vector x_hat;
  IndexSet support;
  double mu = 0.0;
};

struct ProjCsResult {
  Vector x_hat_cs;
  IndexSet support;
  Vector x_hat;
  Vector l_hat;
  double residual_norm = 0.0;
  double xi_used = 0.0;
  double omega_used = 0.0;
  double mu = 0.0;
  int admm_iterations = 0;
  bool ill_conditioned = false;
  bool solver_failed = false;

  bool flagged() const { return ill_conditioned || solver_failed; }
};

namespace detail {

// Makes fl(x + l) == y hold entrywise after l = fl(y - x). Off-support and
// Sterbenz-range entries already satisfy it; the rest get x nudged.
inline void enforce_split_identity(const Vector& y, Vector& x, Vector& l) {
  for (Index i = 0; i < y.size(); ++i) {
    if (x(i) + l(i) == y(i)) continue;
    double xi = x(i);
    for (int tries = 0; tries < 64; ++tries) {
      const double li = y(i) - xi;
      if (xi + li == y(i)) {
        x(i) = xi;
        l(i) = li;
        break;
      }
      xi = y(i) - li;
      if (tries > 2) xi = std::nextafter(xi, (xi + li < y(i)) ? std::numeric_limits<double>::infinity()
                                                                : -std::numeric_limits<double>::infinity());
    }
  }
}

}  // namespace detail

inline ProjCsResult projected_cs_step(const Basis& p_hat, const Vector& y, const ProjCsParams& params,
                                      const PrevFrame* prev = nullptr) {
  if (p_hat.n() != y.size()) throw DimensionMismatch("projected_cs_step: basis and frame lengths differ");
  ProjCsResult out;
  double xi = params.xi;
  if ((params.adaptive & adapt_xi_from_prev_lhat) && prev != nullptr && prev->l_hat.size() == y.size())
    xi = std::max(project_complement(p_hat, prev->l_hat).norm(), 1e-3 * params.xi);
  double omega = params.omega_supp;
  if ((params.adaptive & adapt_xmin_from_prev_support) && prev != nullptr && !prev->support.empty()) {
    double xmin = std::numeric_limits<double>::infinity();
    for (Index i : prev->support) xmin = std::min(xmin, std::abs(prev->x_hat(i)));
    omega = std::max(0.5 * xmin, 2.0 * xi);
  }
  out.xi_used = xi;
  out.omega_used = omega;

  const Vector y_tilde = project_complement(p_hat, y);
  std::optional<double> hint;
  if (prev != nullptr && prev->mu > 0.0) hint = prev->mu;
  BpdnResult cs = bpdn_solve_ex(p_hat, y_tilde, xi, params.solver_tol, params.solver_max_iter,
                                params.mu_max_steps, hint);
  out.solver_failed = !cs.converged;
  out.mu = cs.mu;
  out.admm_iterations = cs.admm_iterations;
  out.x_hat_cs = std::move(cs.x);
  out.support = estimate_support(out.x_hat_cs, omega);
  try {
    out.x_hat = restricted_ls(p_hat, y_tilde, out.support);
  } catch (const IllConditioned&) {
    out.ill_conditioned = true;
    out.x_hat = Vector::Zero(y.size());
    for (Index i : out.support) out.x_hat(i) = out.x_hat_cs(i);
  }
  out.l_hat = y - out.x_hat;
  detail::enforce_split_identity(y, out.x_hat, out.l_hat);
  out.residual_norm = detail::residual_norm(p_hat.mat(), y_tilde, out.x_hat);
  return out;
}

}  // namespace reprocs
