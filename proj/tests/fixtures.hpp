#pragma once

// Random problem instances shared by the unit and acceptance tests.

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "reprocs/linalg.hpp"

namespace fixture {

using reprocs::Index;
using reprocs::IndexSet;
using reprocs::Matrix;
using reprocs::Vector;

struct CsInstance {
  Matrix p_hat;
  Vector x;
  Vector y;
  Vector b;  // Psi l, the part of the low-rank term the projection misses
  IndexSet support;
};

inline IndexSet random_support(std::mt19937_64& g, Index n, Index s) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), g);
  IndexSet t(perm.begin(), perm.begin() + s);
  std::sort(t.begin(), t.end());
  return t;
}

// n x d basis whose entries all have magnitude 1/sqrt(n), built from columns of
// a Sylvester-Hadamard matrix. n must be a power of two.
inline Matrix flat_basis(std::mt19937_64& g, Index n, Index d) {
  Matrix h = Matrix::Ones(1, 1);
  while (h.rows() < n) {
    Matrix next(2 * h.rows(), 2 * h.rows());
    next << h, h, h, -h;
    h = next;
  }
  const IndexSet cols = random_support(g, n, d);
  Matrix out(n, d);
  for (Index k = 0; k < d; ++k) out.col(k) = h.col(cols[static_cast<std::size_t>(k)]) / std::sqrt(static_cast<double>(n));
  return out;
}

// y = l + x with l = P_hat a + b and b orthogonal to P_hat, ||b|| = b_norm.
inline CsInstance cs_instance(std::mt19937_64& g, const Matrix& p_hat, Index s, double x_min, double x_max,
                              double b_norm) {
  const Index n = p_hat.rows();
  CsInstance c;
  c.p_hat = p_hat;
  c.support = random_support(g, n, s);
  std::uniform_real_distribution<double> mag(x_min, x_max);
  c.x = Vector::Zero(n);
  for (Index i : c.support) c.x(i) = (g() & 1 ? 1.0 : -1.0) * mag(g);
  Vector b = oracle::gaussian(g, n, 1).col(0);
  b -= p_hat * (p_hat.transpose() * b);
  c.b = b_norm > 0.0 ? Vector(b * (b_norm / b.norm())) : Vector(Vector::Zero(n));
  const Vector ell = p_hat * (5.0 * oracle::gaussian(g, p_hat.cols(), 1).col(0)) + c.b;
  c.y = ell + c.x;
  return c;
}

}  // namespace fixture
