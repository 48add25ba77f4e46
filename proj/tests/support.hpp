#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>

#include "fhmg/core.hpp"
#include "fhmg/random.hpp"

namespace fhmg::test {

/// m areas, intercept plus p - 1 standard normal covariates, D log-spaced on
/// [d_min, d_max], y drawn from the two-level model with A = 1, beta = 1.
inline AreaLevelDataset random_dataset(std::uint64_t seed, int m, int p, double d_min = 0.5, double d_max = 8.0,
                                       double A = 1.0) {
  NormalStream rng(seed, 0, 99);
  Matrix x(m, p);
  Vector d(m), y(m);
  for (int i = 0; i < m; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) x(i, j) = rng.normal();
    d[i] = m == 1 ? d_min : d_min * std::pow(d_max / d_min, static_cast<double>(i) / (m - 1));
  }
  for (int i = 0; i < m; ++i) y[i] = x.row(i).sum() + std::sqrt(A) * rng.normal() + std::sqrt(d[i]) * rng.normal();
  return AreaLevelDataset(y, d, x);
}

inline AreaLevelDataset balanced_dataset(std::uint64_t seed, int m, double d = 1.0, double A = 1.0) {
  NormalStream rng(seed, 0, 98);
  Vector y(m);
  for (int i = 0; i < m; ++i) y[i] = std::sqrt(A + d) * rng.normal();
  return AreaLevelDataset(y, Vector::Constant(m, d), Matrix::Ones(m, 1));
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double relative_gap(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double sum_sq_dev(const Vector& y) { return (y.array() - y.mean()).square().sum(); }

}  // namespace fhmg::test
