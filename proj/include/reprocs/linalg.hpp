#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "reprocs/errors.hpp"
#include "reprocs/rng.hpp"

namespace reprocs {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexSet = std::vector<Index>;

// Column-orthonormal n x d matrix. A zero-column basis is allowed only through
// Basis::empty and stands for the trivial subspace (projector I).
class Basis {
 public:
  Basis() = default;

  explicit Basis(Matrix cols) : m_(std::move(cols)) {
    if (m_.cols() < 1 || m_.cols() > m_.rows())
      throw BadRank("basis needs 1 <= d <= n, got d=" + std::to_string(m_.cols()));
    const double dev = (m_.transpose() * m_ - Matrix::Identity(m_.cols(), m_.cols())).norm();
    if (dev > 1e-10 * static_cast<double>(m_.cols()))
      throw RankDeficient("columns are not orthonormal (deviation " + std::to_string(dev) + ")");
  }

  static Basis empty(Index n) {
    Basis b;
    b.m_.resize(n, 0);
    return b;
  }

  // Skips the orthonormality check; for callers that produced the columns by
  // an orthonormal factorization.
  static Basis trusted(Matrix cols) {
    Basis b;
    b.m_ = std::move(cols);
    return b;
  }

  const Matrix& mat() const { return m_; }
  Index n() const { return m_.rows(); }
  Index d() const { return m_.cols(); }

 private:
  Matrix m_;
};

namespace detail {

// Makes the largest-magnitude entry positive (first one on ties).
inline void fix_sign(Eigen::Ref<Vector> v) {
  if (v.size() == 0) return;
  Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v(imax) < 0) v = -v;
}

inline Matrix fixed_gaussian(Index rows, Index cols, std::uint64_t tag) {
  Rng rng(0x5eedULL, stream::solver, tag);
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) g(i, j) = rng.normal();
  return g;
}

// Householder QR with R's diagonal made positive, so an already orthonormal
// input comes back unchanged.
inline Matrix orthonormal_factor(const Matrix& m, double scale) {
  const Index n = m.rows();
  const Index d = m.cols();
  Eigen::HouseholderQR<Matrix> qr(m);
  const Matrix& packed = qr.matrixQR();
  Matrix q = qr.householderQ() * Matrix::Identity(n, d);
  const double tol = 1e-12 * scale;
  for (Index i = 0; i < d; ++i) {
    const double rii = packed(i, i);
    if (!(std::abs(rii) >= tol) || std::abs(rii) == 0.0)
      throw RankDeficient("rank deficient at column " + std::to_string(i));
    if (rii < 0) q.col(i) = -q.col(i);
  }
  return q;
}

}  // namespace detail

inline Basis orthonormalize(const Matrix& m) {
  if (m.cols() < 1 || m.cols() > m.rows())
    throw RankDeficient("cannot orthonormalize " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
  return Basis::trusted(detail::orthonormal_factor(m, m.norm()));
}

// ||(I - Ph Ph^T) P||_2 via the d x d Gram of the residual.
inline double subspace_error(const Basis& p_hat, const Basis& p) {
  if (p_hat.n() != p.n()) throw DimensionMismatch("subspace_error: ambient dimensions differ");
  if (p.d() == 0) return 0.0;
  // Identical bases are exactly aligned; skip the rounding of the residual.
  if (p_hat.d() == p.d() && p_hat.mat() == p.mat()) return 0.0;
  Matrix res = p.mat();
  if (p_hat.d() > 0) res.noalias() -= p_hat.mat() * (p_hat.mat().transpose() * p.mat());
  const Matrix gram = res.transpose() * res;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  const double lam = es.eigenvalues().maxCoeff();
  return std::clamp(std::sqrt(std::max(lam, 0.0)), 0.0, 1.0);
}

inline Vector project_complement(const Basis& p_hat, const Vector& v) {
  if (p_hat.n() != v.size()) throw DimensionMismatch("project_complement: length mismatch");
  if (p_hat.d() == 0) return v;
  Vector out = v;
  out.noalias() -= p_hat.mat() * (p_hat.mat().transpose() * v);
  return out;
}

inline Matrix project_complement(const Basis& p_hat, const Matrix& m) {
  if (p_hat.n() != m.rows()) throw DimensionMismatch("project_complement: row mismatch");
  if (p_hat.d() == 0) return m;
  Matrix out = m;
  out.noalias() -= p_hat.mat() * (p_hat.mat().transpose() * m);
  return out;
}

struct SingularPair {
  Vector u;
  double sigma = 0.0;
  int iterations = 0;
};

// Power iteration on M M^T, applied as M (M^T u).
inline SingularPair top_singular_vector(const Matrix& m, double tol = 1e-10, int max_iter = 10000) {
  if (m.rows() == 0 || m.cols() == 0 || m.norm() == 0.0)
    throw RankDeficient("top_singular_vector: zero matrix");
  Vector u = m * detail::fixed_gaussian(m.cols(), 1, 1).col(0);
  if (u.norm() == 0.0) {
    Index jmax = 0;
    m.colwise().norm().maxCoeff(&jmax);
    u = m.col(jmax);
  }
  u.normalize();
  Vector z(m.cols());
  Vector w(m.rows());
  double resid = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    z.noalias() = m.transpose() * u;
    w.noalias() = m * z;
    const double s2 = z.squaredNorm();
    resid = (w - s2 * u).norm();
    const double wn = w.norm();
    if (wn == 0.0) throw RankDeficient("top_singular_vector: iterate fell into null space");
    if (resid <= tol * s2) {
      detail::fix_sign(u);
      return {u, std::sqrt(s2), it};
    }
    u = w / wn;
  }
  throw NoConvergence("top_singular_vector: power iteration did not converge", max_iter, resid);
}

struct SigmaTest {
  bool reached = false;
  double estimate = 0.0;  // lower bound on sigma_max, or the Frobenius norm when that already rules it out
  bool converged = true;
};

// Decides sigma_max(M) >= level. The power-iteration Rayleigh estimate never
// decreases and never exceeds sigma_max, so it can stop as soon as it crosses.
inline SigmaTest sigma_max_reaches(const Matrix& m, double level, double tol = 1e-10,
                                   int max_iter = 10000) {
  SigmaTest out;
  const double fro = m.norm();
  if (fro < level || fro == 0.0) {
    out.estimate = fro;
    return out;
  }
  Vector u = m * detail::fixed_gaussian(m.cols(), 1, 1).col(0);
  if (u.norm() == 0.0) {
    Index jmax = 0;
    m.colwise().norm().maxCoeff(&jmax);
    u = m.col(jmax);
  }
  u.normalize();
  Vector z(m.cols());
  Vector w(m.rows());
  for (int it = 0; it < max_iter; ++it) {
    z.noalias() = m.transpose() * u;
    w.noalias() = m * z;
    const double s2 = z.squaredNorm();
    out.estimate = std::sqrt(s2);
    if (out.estimate >= level) {
      out.reached = true;
      return out;
    }
    if ((w - s2 * u).norm() <= tol * s2) return out;
    u = w / w.norm();
  }
  out.converged = false;
  return out;
}

struct TruncatedSvd {
  Basis u;
  Vector sigma;
  int iterations = 0;
};

// Orthogonal iteration with QR re-orthonormalization, finished by a
// Rayleigh-Ritz rotation so columns come out in decreasing singular value.
// With strict == false an unconverged iterate is returned instead of throwing.
inline TruncatedSvd truncated_svd(const Matrix& m, Index r, double tol = 1e-10, int max_iter = 10000,
                                  const Basis* warm = nullptr, bool strict = true) {
  if (r < 1 || r > std::min(m.rows(), m.cols()))
    throw BadRank("truncated_svd: need 1 <= r <= min(rows, cols)");
  if (m.norm() == 0.0) throw RankDeficient("truncated_svd: zero matrix");
  Matrix q;
  if (warm != nullptr && warm->n() == m.rows() && warm->d() == r) {
    q = warm->mat();
  } else {
    const Matrix start = m * detail::fixed_gaussian(m.cols(), r, 2);
    q = detail::orthonormal_factor(start, start.norm());
  }
  int it = 0;
  double change = 1.0;
  Matrix z(m.rows(), r);
  for (it = 1; it <= max_iter; ++it) {
    z.noalias() = m * (m.transpose() * q);
    Matrix qn = detail::orthonormal_factor(z, z.norm());
    change = subspace_error(Basis::trusted(q), Basis::trusted(qn));
    q = std::move(qn);
    if (change <= tol) break;
  }
  it = std::min(it, max_iter);
  if (change > tol && strict) throw NoConvergence("truncated_svd: orthogonal iteration did not converge", max_iter, change);
  const Matrix c = q.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Matrix> es(c * c.transpose());
  Matrix u(m.rows(), r);
  Vector sigma(r);
  for (Index i = 0; i < r; ++i) {
    const Index src = r - 1 - i;
    u.col(i) = q * es.eigenvectors().col(src);
    detail::fix_sign(u.col(i));
    sigma(i) = std::sqrt(std::max(es.eigenvalues()(src), 0.0));
  }
  return {Basis::trusted(std::move(u)), sigma, it};
}

inline Basis top_r_left_singular_vectors(const Matrix& m, Index r, double tol = 1e-10,
                                         int max_iter = 10000) {
  return truncated_svd(m, r, tol, max_iter).u;
}

// Least squares on the support through the Woodbury identity:
// (I - A A^T)^{-1} = I + A (I - A^T A)^{-1} A^T with A the support rows of P.
// The d x d capacitance matrix has the same smallest eigenvalue as the
// |T| x |T| Gram matrix.
inline Vector restricted_ls(const Basis& p_hat, const Vector& y_tilde, const IndexSet& support) {
  const Index n = p_hat.n();
  if (y_tilde.size() != n) throw DimensionMismatch("restricted_ls: length mismatch");
  Vector x = Vector::Zero(n);
  const Index s = static_cast<Index>(support.size());
  if (s == 0) return x;
  if (s > n) throw PreconditionError("restricted_ls: support larger than n");
  const Index d = p_hat.d();
  Vector psi_y = project_complement(p_hat, y_tilde);
  Vector b(s);
  for (Index i = 0; i < s; ++i) {
    const Index k = support[static_cast<std::size_t>(i)];
    if (k < 0 || k >= n) throw PreconditionError("restricted_ls: support index out of range");
    b(i) = psi_y(k);
  }
  if (d == 0) {
    for (Index i = 0; i < s; ++i) x(support[static_cast<std::size_t>(i)]) = b(i);
    return x;
  }
  Matrix a(s, d);
  for (Index i = 0; i < s; ++i) a.row(i) = p_hat.mat().row(support[static_cast<std::size_t>(i)]);
  Matrix h = Matrix::Identity(d, d);
  h.noalias() -= a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < 1e-10)
    throw IllConditioned("restricted_ls: Gram matrix smallest eigenvalue " + std::to_string(min_eig), min_eig);
  Eigen::LLT<Matrix> llt(h);
  const Vector corr = a * llt.solve(a.transpose() * b);
  for (Index i = 0; i < s; ++i) x(support[static_cast<std::size_t>(i)]) = b(i) + corr(i);
  return x;
}

}  // namespace reprocs
