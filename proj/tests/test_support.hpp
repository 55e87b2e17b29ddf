#pragma once

#include <ceqn/ceqn.hpp>

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

namespace ceqn::testing {

inline Vector random_vector(Index d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

/// Q diag(eigs) Qᵀ with eigenvalues log-uniform in [lo, hi].
inline Matrix random_spd(Index d, std::mt19937_64& rng, double lo = 0.5, double hi = 5.0) {
  Matrix g(d, d);
  std::normal_distribution<double> n;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) g(i, j) = n(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  Vector eig(d);
  for (Index i = 0; i < d; ++i) eig[i] = std::exp(u(rng));
  Matrix a = q * eig.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

/// Well-conditioned invertible map: random orthogonal times diag in [0.5, 2].
inline Matrix random_invertible(Index d, std::mt19937_64& rng) {
  Matrix g(d, d);
  std::normal_distribution<double> n;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) g(i, j) = n(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Vector s(d);
  for (Index i = 0; i < d; ++i) s[i] = u(rng);
  return q * s.asDiagonal();
}

/// Dense-ish Gaussian features, labels from a planted model with noise.
inline std::shared_ptr<LogisticProblem> random_logistic(Index n, Index d, double mu, std::mt19937_64& rng,
                                                        double density = 0.6) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Vector w = random_vector(d, rng);
  std::vector<std::vector<SparseDesignMatrix::Entry>> rows(static_cast<std::size_t>(n));
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    double margin = 0.0;
    for (Index j = 0; j < d; ++j) {
      if (unif(rng) < density) {
        const double v = normal(rng);
        rows[static_cast<std::size_t>(i)].emplace_back(j, v);
        margin += v * w[j];
      }
    }
    labels[static_cast<std::size_t>(i)] = unif(rng) < 1.0 / (1.0 + std::exp(-margin)) ? 1 : -1;
  }
  return std::make_shared<LogisticProblem>(SparseDesignMatrix(d, rows), std::move(labels), mu);
}

inline std::shared_ptr<QuadraticProblem> random_quadratic(Index d, std::mt19937_64& rng) {
  return std::make_shared<QuadraticProblem>(random_spd(d, rng), random_vector(d, rng));
}

inline double rel_err(const Vector& got, const Vector& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

inline double rel_err_strict(const Vector& got, const Vector& want) {
  return (got - want).norm() / want.norm();
}

}  // namespace ceqn::testing
