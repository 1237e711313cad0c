#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reprocs/linalg.hpp"
#include "reprocs/rng.hpp"

namespace reprocs {

struct SubspaceChangeSpec {
  std::int64_t t = 0;
  double theta = 0.0;   // radians, in [0, pi/2]
  Index ch_index = -1;  // column of P_{j-1} U_j that rotates; -1 means the last
};

struct Rotation {
  Basis P;
  Vector p_new;
  Vector p_rot;
};

// P_j = [P_fix, P_ch cos(theta) + P_new sin(theta)] where P_ch is the chosen
// column of P_prev U and P_new is a unit vector orthogonal to span(P_prev).
// Without an explicit p_new, a Gaussian vector from rng is orthogonalized.
inline Rotation rotate_subspace(const Basis& p_prev, const SubspaceChangeSpec& spec, Rng& rng,
                                const Vector* p_new = nullptr, const Matrix* u = nullptr) {
  const Index n = p_prev.n();
  const Index r = p_prev.d();
  if (n <= r) throw DegenerateComplement("rotate_subspace: n == r leaves no complement");
  if (!(spec.theta >= 0.0 && spec.theta <= 1.5707963267948966 + 1e-12))
    throw PreconditionError("rotate_subspace: theta must lie in [0, pi/2]");
  const Index ch = spec.ch_index < 0 ? r - 1 : spec.ch_index;
  if (ch >= r) throw PreconditionError("rotate_subspace: ch_index out of range");
  Matrix m = p_prev.mat();
  if (u != nullptr) {
    if (u->rows() != r || u->cols() != r) throw DimensionMismatch("rotate_subspace: U must be r x r");
    m = p_prev.mat() * (*u);
  }
  Vector dir;
  if (p_new != nullptr) {
    if (p_new->size() != n) throw DimensionMismatch("rotate_subspace: P_new length");
    dir = *p_new;
  } else {
    dir.resize(n);
    for (Index i = 0; i < n; ++i) dir(i) = rng.normal();
  }
  dir = project_complement(p_prev, dir);
  dir = project_complement(p_prev, dir);
  const double dn = dir.norm();
  if (dn < 1e-12) throw DegenerateComplement("rotate_subspace: new direction lies in span(P_prev)");
  dir /= dn;

  Rotation out;
  out.p_new = dir;
  out.p_rot = std::cos(spec.theta) * m.col(ch) + std::sin(spec.theta) * dir;
  Matrix pj(n, r);
  Index c = 0;
  for (Index i = 0; i < r; ++i)
    if (i != ch) pj.col(c++) = m.col(i);
  pj.col(r - 1) = out.p_rot;
  out.P = Basis::trusted(std::move(pj));
  return out;
}

using SupportSchedule = std::vector<IndexSet>;

// Moving-object support: s consecutive indices that step down by s every
// beta = ceil(c0 tau) frames for tau frames and then walk back up.
inline SupportSchedule gen_moving_object_support(Index n, std::int64_t T, Index s, double c0, std::int64_t tau,
                                                 std::int64_t t_start = 0) {
  if (s < 1 || tau < 1 || !(c0 > 0.0) || c0 * static_cast<double>(tau) < 1.0 - 1e-9)
    throw BadGeometry("moving object: need s >= 1, tau >= 1 and c0*tau >= 1");
  if (static_cast<double>(s) / c0 > static_cast<double>(n) * (1.0 + 1e-9))
    throw BadGeometry("moving object: s/c0 exceeds n");
  const std::int64_t beta = static_cast<std::int64_t>(std::ceil(c0 * static_cast<double>(tau) - 1e-9));
  const std::int64_t positions = (tau + beta - 1) / beta;
  if (positions * s > n) throw BadGeometry("moving object: path leaves the frame");
  SupportSchedule out(static_cast<std::size_t>(std::max<std::int64_t>(T, 0)));
  for (std::int64_t t = std::max<std::int64_t>(t_start, 0); t < T; ++t) {
    const std::int64_t w = (t - t_start) % (2 * tau);
    const std::int64_t p = w < tau ? w / beta : (positions - 1) - (w - tau) / beta;
    IndexSet& set = out[static_cast<std::size_t>(t)];
    set.resize(static_cast<std::size_t>(s));
    for (Index i = 0; i < s; ++i) set[static_cast<std::size_t>(i)] = p * s + i;
  }
  return out;
}

inline IndexSet bernoulli_frame(Index n, double rho, Rng& rng) {
  IndexSet set;
  for (Index i = 0; i < n; ++i)
    if (rng.uniform() < rho) set.push_back(i);
  return set;
}

// Frame t draws from its own stream (seed, support, t + t_offset).
inline SupportSchedule gen_bernoulli_support(Index n, std::int64_t T, double rho, std::uint64_t seed,
                                             std::int64_t t_offset = 0) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw PreconditionError("bernoulli support: rho must lie in [0, 1]");
  SupportSchedule out(static_cast<std::size_t>(std::max<std::int64_t>(T, 0)));
  for (std::int64_t t = 0; t < T; ++t) {
    Rng rng(seed, stream::support, static_cast<std::uint64_t>(t + t_offset));
    out[static_cast<std::size_t>(t)] = bernoulli_frame(n, rho, rng);
  }
  return out;
}

// max over rows of the fraction of frames in [t0, t1) whose support holds it.
inline double gamma_row_fraction(const SupportSchedule& supports, std::int64_t t0, std::int64_t t1) {
  if (t0 < 0 || t1 > static_cast<std::int64_t>(supports.size()) || t1 <= t0)
    throw PreconditionError("gamma_row_fraction: window outside schedule");
  std::vector<std::int64_t> counts;
  for (std::int64_t t = t0; t < t1; ++t)
    for (Index i : supports[static_cast<std::size_t>(t)]) {
      if (static_cast<std::size_t>(i) >= counts.size()) counts.resize(static_cast<std::size_t>(i) + 1, 0);
      counts[static_cast<std::size_t>(i)] += 1;
    }
  std::int64_t best = 0;
  for (std::int64_t c : counts) best = std::max(best, c);
  return static_cast<double>(best) / static_cast<double>(t1 - t0);
}

enum class SupportKind { none, moving_object, bernoulli };

struct SupportSpec {
  SupportKind kind = SupportKind::none;
  Index s = 0;
  double c0 = 0.0;
  std::int64_t tau = 0;
  double rho = 0.0;
};

enum class BasisMode { gaussian_complement, preallocated_q };
enum class SignMode { positive, random };

struct DatasetConfig {
  Index n = 0;
  std::int64_t t_max = 0;
  std::int64_t t_train = 0;
  Index r = 0;
  double f = 1.0;
  std::vector<double> lambda;  // per-coordinate variances; derived from f when empty
  std::vector<SubspaceChangeSpec> changes;
  BasisMode basis_mode = BasisMode::gaussian_complement;
  bool random_rotation = false;
  SupportSpec train_support;
  SupportSpec support;
  double x_min = 10.0;
  double x_max = 25.0;
  SignMode sign = SignMode::positive;
  double noise_sigma = 0.0;
};

// Variances f/3 on all but the last two coordinates and 1/3 on those, which
// is what unif(-sqrt f, sqrt f) and unif(-1, 1) draws give.
inline std::vector<double> default_lambda(Index r, double f) {
  std::vector<double> lam(static_cast<std::size_t>(r), 1.0 / 3.0);
  const Index big = r >= 3 ? r - 2 : 1;
  for (Index i = 0; i < big && i < r; ++i) lam[static_cast<std::size_t>(i)] = f / 3.0;
  return lam;
}

inline std::vector<double> effective_lambda(const DatasetConfig& c) {
  return c.lambda.empty() ? default_lambda(c.r, c.f) : c.lambda;
}

inline void validate(const DatasetConfig& c) {
  if (c.n < 2 || c.r < 1 || c.r >= c.n) throw ConfigError("datagen: need n >= 2 and 1 <= r < n");
  if (c.t_max < 1 || c.t_train < 0 || c.t_train > c.t_max) throw ConfigError("datagen: need 0 <= t_train <= t_max");
  if (!c.lambda.empty()) {
    if (static_cast<Index>(c.lambda.size()) != c.r) throw ConfigError("datagen: lambda needs r entries");
    for (double l : c.lambda)
      if (!(l >= 0.0)) throw ConfigError("datagen: lambda entries must be >= 0");
  } else if (!(c.f > 0.0)) {
    throw ConfigError("datagen: f must be > 0");
  }
  std::int64_t last = 0;
  for (const auto& ch : c.changes) {
    if (ch.t <= last || ch.t >= c.t_max) throw ConfigError("datagen: change times must increase inside (0, t_max)");
    if (!(ch.theta >= 0.0 && ch.theta <= 1.5707963267948966 + 1e-12))
      throw ConfigError("datagen: theta must lie in [0, 90] degrees");
    if (ch.ch_index >= c.r) throw ConfigError("datagen: ch_index out of range");
    last = ch.t;
  }
  if (c.basis_mode == BasisMode::preallocated_q && c.r + static_cast<Index>(c.changes.size()) > c.n)
    throw ConfigError("datagen: preallocated_q needs r + J <= n");
  if (!(c.x_min > 0.0) || c.x_max < c.x_min) throw ConfigError("datagen: need 0 < x_min <= x_max");
  if (!(c.noise_sigma >= 0.0)) throw ConfigError("datagen: noise sigma must be >= 0");
  for (const SupportSpec* s : {&c.train_support, &c.support}) {
    if (s->kind == SupportKind::bernoulli && !(s->rho >= 0.0 && s->rho <= 1.0))
      throw ConfigError("datagen: rho must lie in [0, 1]");
  }
}

struct GroundTruth {
  std::vector<Basis> bases;  // segment 0 .. J
  std::vector<std::int64_t> change_times;
  std::vector<double> thetas;
  std::vector<Vector> p_new;
  std::vector<Vector> p_rot;
  SupportSchedule supports;
  Matrix X, L, V;
  std::uint64_t seed = 0;
  std::int64_t t_train = 0;

  int segment_of(std::int64_t t) const {
    int s = 0;
    while (s < static_cast<int>(change_times.size()) && change_times[static_cast<std::size_t>(s)] <= t) ++s;
    return s;
  }
};

struct Dataset {
  Matrix Y;
  GroundTruth truth;
};

namespace detail {

inline SupportSchedule block_support(const SupportSpec& spec, Index n, std::int64_t T, std::int64_t t_begin,
                                     std::int64_t t_end, std::uint64_t seed) {
  SupportSchedule out(static_cast<std::size_t>(T));
  if (spec.kind == SupportKind::moving_object) {
    SupportSchedule m = gen_moving_object_support(n, t_end, spec.s, spec.c0, spec.tau, t_begin);
    for (std::int64_t t = t_begin; t < t_end; ++t) out[static_cast<std::size_t>(t)] = std::move(m[static_cast<std::size_t>(t)]);
  } else if (spec.kind == SupportKind::bernoulli) {
    for (std::int64_t t = t_begin; t < t_end; ++t) {
      Rng rng(seed, stream::support, static_cast<std::uint64_t>(t));
      out[static_cast<std::size_t>(t)] = bernoulli_frame(n, spec.rho, rng);
    }
  }
  return out;
}

inline Matrix random_orthogonal(Index r, Rng& rng) {
  Matrix g(r, r);
  for (Index j = 0; j < r; ++j)
    for (Index i = 0; i < r; ++i) g(i, j) = rng.normal();
  return orthonormalize(g).mat();
}

}  // namespace detail

inline Dataset gen_dataset(const DatasetConfig& c, std::uint64_t seed) {
  validate(c);
  const Index n = c.n;
  const Index r = c.r;
  const std::int64_t T = c.t_max;
  const std::size_t J = c.changes.size();
  Dataset ds;
  GroundTruth& g = ds.truth;
  g.seed = seed;
  g.t_train = c.t_train;

  Rng brng(seed, stream::basis, 0);
  Matrix q;
  if (c.basis_mode == BasisMode::preallocated_q) {
    Matrix raw(n, r + static_cast<Index>(J));
    for (Index j = 0; j < raw.cols(); ++j)
      for (Index i = 0; i < n; ++i) raw(i, j) = brng.normal();
    q = orthonormalize(raw).mat();
    g.bases.push_back(Basis::trusted(q.leftCols(r)));
  } else {
    Matrix raw(n, r);
    for (Index j = 0; j < r; ++j)
      for (Index i = 0; i < n; ++i) raw(i, j) = brng.normal();
    g.bases.push_back(orthonormalize(raw));
  }
  for (std::size_t j = 0; j < J; ++j) {
    Rng rrng(seed, stream::basis, j + 1);
    std::optional<Matrix> u;
    if (c.random_rotation) {
      Rng urng(seed, stream::rotation, j + 1);
      u = detail::random_orthogonal(r, urng);
    }
    std::optional<Vector> pn;
    if (c.basis_mode == BasisMode::preallocated_q) pn = q.col(r + static_cast<Index>(j));
    Rotation rot = rotate_subspace(g.bases.back(), c.changes[j], rrng, pn ? &*pn : nullptr, u ? &*u : nullptr);
    g.bases.push_back(rot.P);
    g.p_new.push_back(rot.p_new);
    g.p_rot.push_back(rot.p_rot);
    g.change_times.push_back(c.changes[j].t);
    g.thetas.push_back(c.changes[j].theta);
  }

  g.supports = detail::block_support(c.train_support, n, T, 0, c.t_train, seed);
  SupportSchedule main = detail::block_support(c.support, n, T, c.t_train, T, seed);
  for (std::int64_t t = c.t_train; t < T; ++t)
    g.supports[static_cast<std::size_t>(t)] = std::move(main[static_cast<std::size_t>(t)]);

  const std::vector<double> lam = effective_lambda(c);
  g.L.resize(n, T);
  g.X = Matrix::Zero(n, T);
  g.V = Matrix::Zero(n, T);
  Vector a(r);
  for (std::int64_t t = 0; t < T; ++t) {
    Rng crng(seed, stream::coeff, static_cast<std::uint64_t>(t));
    for (Index i = 0; i < r; ++i) {
      const double half = std::sqrt(3.0 * lam[static_cast<std::size_t>(i)]);
      a(i) = crng.uniform(-half, half);
    }
    g.L.col(t).noalias() = g.bases[static_cast<std::size_t>(g.segment_of(t))].mat() * a;

    Rng mrng(seed, stream::magnitude, static_cast<std::uint64_t>(t));
    for (Index i : g.supports[static_cast<std::size_t>(t)]) {
      double v = mrng.uniform(c.x_min, c.x_max);
      if (v > c.x_max) v = c.x_max;
      if (c.sign == SignMode::random && mrng.uniform() < 0.5) v = -v;
      g.X(i, t) = v;
    }
    if (c.noise_sigma > 0.0) {
      Rng nrng(seed, stream::noise, static_cast<std::uint64_t>(t));
      for (Index i = 0; i < n; ++i) {
        double z = nrng.normal();
        while (std::abs(z) > 3.0) z = nrng.normal();
        g.V(i, t) = c.noise_sigma * z;
      }
    }
  }
  ds.Y = g.L + g.X + g.V;
  return ds;
}

}  // namespace reprocs
