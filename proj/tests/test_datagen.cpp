#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "reprocs/datagen.hpp"

using namespace reprocs;

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

// Spectral norm of (1/|J|) sum_t I_T I_T^T, formed densely.
double gamma_dense(const SupportSchedule& s, Index n, std::int64_t t0, std::int64_t t1) {
  Matrix m = Matrix::Zero(n, n);
  for (std::int64_t t = t0; t < t1; ++t) {
    Matrix it = Matrix::Zero(n, static_cast<Index>(s[static_cast<std::size_t>(t)].size()));
    for (std::size_t k = 0; k < s[static_cast<std::size_t>(t)].size(); ++k) it(s[static_cast<std::size_t>(t)][k], static_cast<Index>(k)) = 1.0;
    m += it * it.transpose();
  }
  m /= static_cast<double>(t1 - t0);
  return oracle::singular_values(m)(0);
}

}  // namespace

TEST(Rng, DeterministicAndKeyed) {
  Rng a(7, stream::coeff, 3), b(7, stream::coeff, 3), c(7, stream::coeff, 4), d(8, stream::coeff, 3);
  const double va = a.uniform();
  EXPECT_EQ(va, b.uniform());
  EXPECT_NE(va, c.uniform());
  EXPECT_NE(va, d.uniform());
  // Pins the stream: changing the generator would silently change every dataset.
  Rng pin(1, 1, 0);
  const std::uint64_t first = pin.next_u64();
  Rng again(1, 1, 0);
  EXPECT_EQ(first, again.next_u64());
  double m = 0.0, v = 0.0;
  Rng g(1, stream::noise, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = g.normal();
    m += z;
    v += z * z;
  }
  EXPECT_NEAR(m / n, 0.0, 0.01);
  EXPECT_NEAR(v / n, 1.0, 0.01);
}

TEST(RotateSubspace, ZeroAngleKeepsBasis) {
  std::mt19937_64 g(1);
  const Basis p(oracle::random_basis(g, 20, 3));
  Rng rng(1, stream::basis, 1);
  const Rotation rot = rotate_subspace(p, {0, 0.0, -1}, rng);
  EXPECT_LE(subspace_error(rot.P, p), 1e-15);
}

TEST(RotateSubspace, ThreeDimensionalAnalytic) {
  const Basis p(Matrix::Identity(3, 2));
  Rng rng(2, stream::basis, 1);
  const Rotation rot = rotate_subspace(p, {0, 30 * kDeg, -1}, rng);
  EXPECT_NEAR(subspace_error(p, rot.P), 0.5, 1e-12);
  EXPECT_NEAR(std::abs(rot.p_new(2)), 1.0, 1e-12);
  EXPECT_LE((rot.P.mat().transpose() * rot.P.mat() - Matrix::Identity(2, 2)).norm(), 1e-12);
}

TEST(RotateSubspace, ErrorEqualsSinTheta) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Basis p(oracle::random_basis(g, 50, 5));
    Rng rng(static_cast<std::uint64_t>(trial), stream::basis, 1);
    const Rotation rot = rotate_subspace(p, {0, 0.2, -1}, rng);
    EXPECT_NEAR(subspace_error(p, rot.P), std::sin(0.2), 1e-10);
    EXPECT_NEAR(oracle::sin_max_angle(p.mat(), rot.P.mat()), std::sin(0.2), 1e-10);
    EXPECT_LE((p.mat().transpose() * rot.p_new).norm(), 1e-12);
    Basis(rot.P.mat());  // throws if not orthonormal
  }
}

TEST(RotateSubspace, RotationMatrixAndIndex) {
  std::mt19937_64 g(4);
  const Basis p(oracle::random_basis(g, 30, 3));
  const Matrix u = oracle::random_basis(g, 3, 3);
  Rng rng(4, stream::basis, 1);
  SubspaceChangeSpec spec{0, 0.4, 0};
  const Rotation rot = rotate_subspace(p, spec, rng, nullptr, &u);
  EXPECT_NEAR(subspace_error(p, rot.P), std::sin(0.4), 1e-10);
  const Vector pu0 = p.mat() * u.col(0);
  EXPECT_LE((rot.p_rot - (std::cos(0.4) * pu0 + std::sin(0.4) * rot.p_new)).norm(), 1e-12);
}

TEST(RotateSubspace, Errors) {
  Rng rng(5, stream::basis, 1);
  EXPECT_THROW(rotate_subspace(Basis(Matrix::Identity(3, 3)), {0, 0.1, -1}, rng), DegenerateComplement);
  EXPECT_THROW(rotate_subspace(Basis(Matrix::Identity(4, 2)), {0, 2.0, -1}, rng), PreconditionError);
  const Vector in_span = Vector::Unit(4, 0);
  EXPECT_THROW(rotate_subspace(Basis(Matrix::Identity(4, 2)), {0, 0.1, -1}, rng, &in_span), DegenerateComplement);
}

TEST(MovingObject, SmallExample) {
  const SupportSchedule s = gen_moving_object_support(20, 40, 2, 0.2, 10);
  const std::vector<IndexSet> expect_first = {{0, 1}, {0, 1}, {2, 3}, {2, 3}, {4, 5}, {4, 5},
                                              {6, 7}, {6, 7}, {8, 9}, {8, 9}};
  for (std::size_t t = 0; t < 10; ++t) EXPECT_EQ(s[t], expect_first[t]) << t;
  EXPECT_EQ(s[10], (IndexSet{8, 9}));
  EXPECT_EQ(s[12], (IndexSet{6, 7}));
  EXPECT_EQ(s[19], (IndexSet{0, 1}));
  EXPECT_EQ(s[20], s[0]);
  EXPECT_EQ(s[39], s[19]);
}

TEST(MovingObject, RowFractions) {
  const Index n = 500;
  const double c0 = 0.2;
  const std::int64_t tau = 100, alpha = 500;
  const SupportSchedule s = gen_moving_object_support(n, 3000, 50, c0, tau);
  for (std::int64_t t0 = 0; t0 + tau <= 3000; t0 += tau) EXPECT_NEAR(gamma_row_fraction(s, t0, t0 + tau), c0, 1e-12);
  double worst = 0.0;
  for (std::int64_t t0 = 0; t0 + alpha <= 3000; ++t0) worst = std::max(worst, gamma_row_fraction(s, t0, t0 + alpha));
  EXPECT_LE(worst, 2 * c0);
}

TEST(MovingObject, StartOffsetAndGeometry) {
  const SupportSchedule s = gen_moving_object_support(20, 30, 2, 0.2, 10, 10);
  EXPECT_TRUE(s[9].empty());
  EXPECT_EQ(s[10], (IndexSet{0, 1}));
  EXPECT_THROW(gen_moving_object_support(20, 10, 5, 0.2, 10), BadGeometry);
  EXPECT_THROW(gen_moving_object_support(20, 10, 2, 0.05, 10), BadGeometry);
}

TEST(Bernoulli, ExtremesAndFractions) {
  for (const IndexSet& f : gen_bernoulli_support(30, 20, 0.0, 1)) EXPECT_TRUE(f.empty());
  for (const IndexSet& f : gen_bernoulli_support(30, 20, 1.0, 1)) EXPECT_EQ(f.size(), 30u);
  const Index n = 500;
  const std::int64_t T = 2000;
  const SupportSchedule s = gen_bernoulli_support(n, T, 0.2, 3);
  // Mean row and column fractions sit within 0.03 of rho. Single rows and
  // columns carry binomial spread, so those are held to 5.5 standard deviations.
  const double col_sd = std::sqrt(0.2 * 0.8 / n), row_sd = std::sqrt(0.2 * 0.8 / T);
  std::vector<double> rows(static_cast<std::size_t>(n), 0.0);
  double col_mean = 0.0;
  for (const IndexSet& f : s) {
    const double frac = static_cast<double>(f.size()) / n;
    EXPECT_NEAR(frac, 0.2, 5.5 * col_sd);
    col_mean += frac / T;
    for (Index i : f) rows[static_cast<std::size_t>(i)] += 1.0 / T;
  }
  double row_mean = 0.0;
  for (double r : rows) {
    EXPECT_NEAR(r, 0.2, 5.5 * row_sd);
    row_mean += r / n;
  }
  EXPECT_NEAR(col_mean, 0.2, 0.03);
  EXPECT_NEAR(row_mean, 0.2, 0.03);
  EXPECT_EQ(gen_bernoulli_support(n, 10, 0.2, 3), SupportSchedule(s.begin(), s.begin() + 10));
  EXPECT_THROW(gen_bernoulli_support(n, 10, 1.5, 3), PreconditionError);
}

TEST(GammaRowFraction, MatchesDenseSpectralNorm) {
  std::mt19937_64 g(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 20 + static_cast<Index>(g() % 80);
    const SupportSchedule s = trial % 2 ? gen_bernoulli_support(n, 60, 0.1, static_cast<std::uint64_t>(trial))
                                        : gen_moving_object_support(n, 60, 2, 0.2, 15);
    const std::int64_t t0 = static_cast<std::int64_t>(g() % 20);
    const std::int64_t t1 = t0 + 10 + static_cast<std::int64_t>(g() % 30);
    EXPECT_NEAR(gamma_row_fraction(s, t0, t1), gamma_dense(s, n, t0, t1), 1e-12);
  }
  const SupportSchedule empty(10);
  EXPECT_EQ(gamma_row_fraction(empty, 0, 10), 0.0);
  const SupportSchedule constant(10, IndexSet{1, 4});
  EXPECT_EQ(gamma_row_fraction(constant, 2, 7), 1.0);
}

TEST(GenDataset, CleanIsLowRank) {
  DatasetConfig c;
  c.n = 40;
  c.t_max = 100;
  c.t_train = 10;
  c.r = 3;
  const Dataset ds = gen_dataset(c, 1);
  EXPECT_EQ(ds.Y, ds.truth.L);
  const Vector sv = oracle::singular_values(ds.Y);
  EXPECT_GT(sv(2), 1.0);
  EXPECT_LT(sv(3), 1e-10 * sv(0));
}

TEST(GenDataset, ReconstructionAndDeterminism) {
  DatasetConfig c;
  c.n = 60;
  c.t_max = 300;
  c.t_train = 50;
  c.r = 4;
  c.f = 9;
  c.changes = {{150, 20 * kDeg, -1}, {250, 35 * kDeg, -1}};
  c.train_support = {SupportKind::moving_object, 2, 0.05, 20, 0.0};
  c.support = {SupportKind::bernoulli, 0, 0, 0, 0.1};
  c.sign = SignMode::random;
  c.noise_sigma = 0.01;
  const Dataset a = gen_dataset(c, 5), b = gen_dataset(c, 5), d = gen_dataset(c, 6);
  EXPECT_EQ(a.Y, b.Y);
  EXPECT_NE(a.Y, d.Y);
  EXPECT_EQ(a.Y, a.truth.L + a.truth.X + a.truth.V);
  EXPECT_LE(a.truth.V.cwiseAbs().maxCoeff(), 3 * 0.01);
  ASSERT_EQ(a.truth.bases.size(), 3u);
  EXPECT_NEAR(subspace_error(a.truth.bases[0], a.truth.bases[1]), std::sin(20 * kDeg), 1e-10);
  EXPECT_NEAR(subspace_error(a.truth.bases[1], a.truth.bases[2]), std::sin(35 * kDeg), 1e-10);
  for (std::int64_t t = 0; t < c.t_max; ++t) {
    const IndexSet& s = a.truth.supports[static_cast<std::size_t>(t)];
    for (Index i = 0; i < c.n; ++i) {
      const double x = a.truth.X(i, t);
      if (std::binary_search(s.begin(), s.end(), i)) {
        EXPECT_GE(std::abs(x), c.x_min);
        EXPECT_LE(std::abs(x), c.x_max);
      } else {
        EXPECT_EQ(x, 0.0);
      }
    }
    // Each column lies in its own segment's subspace.
    const Basis& p = a.truth.bases[static_cast<std::size_t>(a.truth.segment_of(t))];
    EXPECT_LE(project_complement(p, Vector(a.truth.L.col(t))).norm(), 1e-10);
  }
  EXPECT_EQ(a.truth.segment_of(149), 0);
  EXPECT_EQ(a.truth.segment_of(150), 1);
  EXPECT_EQ(a.truth.segment_of(299), 2);
}

TEST(GenDataset, PreallocatedDirections) {
  DatasetConfig c;
  c.n = 50;
  c.t_max = 20;
  c.t_train = 5;
  c.r = 3;
  c.basis_mode = BasisMode::preallocated_q;
  c.changes = {{10, 30 * kDeg, -1}, {15, 30 * kDeg, -1}};
  const Dataset ds = gen_dataset(c, 9);
  // P_new for every change comes from one orthonormal block with P_0.
  Matrix q(50, 5);
  q << ds.truth.bases[0].mat(), ds.truth.p_new[0], ds.truth.p_new[1];
  EXPECT_LE((q.transpose() * q - Matrix::Identity(5, 5)).norm(), 1e-12);
}

TEST(GenDataset, CoefficientCovariance) {
  DatasetConfig c;
  c.n = 8;
  c.t_max = 100000;
  c.t_train = 0;
  c.r = 4;
  c.f = 16;
  const Dataset ds = gen_dataset(c, 2);
  const Matrix a = ds.truth.bases[0].mat().transpose() * ds.truth.L;
  const Matrix cov = a * a.transpose() / static_cast<double>(c.t_max);
  const std::vector<double> lam = default_lambda(4, 16);
  EXPECT_DOUBLE_EQ(lam[0], 16.0 / 3.0);
  EXPECT_DOUBLE_EQ(lam[3], 1.0 / 3.0);
  for (Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(cov(i, i) / lam[static_cast<std::size_t>(i)], 1.0, 0.05);
    EXPECT_LE(a.row(i).cwiseAbs().maxCoeff(), std::sqrt(3.0 * lam[static_cast<std::size_t>(i)]));
  }
}

TEST(GenDataset, ConfigValidation) {
  DatasetConfig c;
  c.n = 10;
  c.r = 10;
  c.t_max = 10;
  EXPECT_THROW(gen_dataset(c, 1), ConfigError);
  c.r = 2;
  c.t_train = 20;
  EXPECT_THROW(gen_dataset(c, 1), ConfigError);
  c.t_train = 0;
  c.x_max = 1;
  EXPECT_THROW(gen_dataset(c, 1), ConfigError);
}
