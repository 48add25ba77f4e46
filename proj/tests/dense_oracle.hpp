#pragma once

#include <cmath>
#include <vector>

#include "fhmg/bayes.hpp"
#include "fhmg/core.hpp"
#include "fhmg/likelihood.hpp"

namespace fhmg::test {

struct OracleSummary {
  double e_b, v_b, e_theta, v_theta;
};

/// Trapezoid rule on `nodes` points equally spaced in t = log A over
/// [t_lo, t_hi]; the integrand carries the Jacobian A. Independent of the
/// adaptive engine except for the residual likelihood and prior evaluators.
inline OracleSummary dense_grid_oracle(const AreaLevelDataset& data, const PriorSpec& prior, std::size_t area,
                                       double t_lo = std::log(1e-10), double t_hi = std::log(1e12),
                                       int nodes = 200000) {
  const double d = data.d()[static_cast<Eigen::Index>(area)];
  std::vector<double> logw(nodes), b(nodes), theta(nodes), g12(nodes);
  const double h = (t_hi - t_lo) / (nodes - 1);
  double top = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < nodes; ++k) {
    const double a = std::exp(t_lo + k * h);
    const auto eval = evaluate_model(data, a);
    logw[k] = eval.log_likelihood + log_prior(prior, data, a) + std::log(a);
    top = std::max(top, logw[k]);
    b[k] = d / (a + d);
    const Vector xi = data.x().row(static_cast<Eigen::Index>(area)).transpose();
    theta[k] = (1.0 - b[k]) * data.y()[static_cast<Eigen::Index>(area)] + b[k] * xi.dot(eval.gls.beta);
    g12[k] = a * d / (a + d) + b[k] * b[k] * xi.dot(eval.gls.cov * xi);
  }
  auto integrate = [&](auto&& f) {
    double s = 0.0;
    for (int k = 0; k < nodes; ++k) s += (k == 0 || k == nodes - 1 ? 0.5 : 1.0) * std::exp(logw[k] - top) * f(k);
    return s * h;
  };
  const double z = integrate([](int) { return 1.0; });
  OracleSummary out;
  out.e_b = integrate([&](int k) { return b[k]; }) / z;
  out.v_b = integrate([&](int k) { return (b[k] - out.e_b) * (b[k] - out.e_b); }) / z;
  out.e_theta = integrate([&](int k) { return theta[k]; }) / z;
  out.v_theta = integrate([&](int k) { return g12[k] + (theta[k] - out.e_theta) * (theta[k] - out.e_theta); }) / z;
  return out;
}

}  // namespace fhmg::test
