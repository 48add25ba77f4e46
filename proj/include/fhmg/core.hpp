#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fhmg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Condition number of X'V^{-1}X above which the design is treated as singular.
inline constexpr double kMaxConditionNumber = 1e12;

/// Area-level data for the two-level normal model
///   y_i | theta_i ~ N(theta_i, D_i),   theta_i ~ N(x_i' beta, A).
///
/// Construction validates the invariants every estimator relies on: equal
/// lengths, finite values, D_i > 0 and rank(X) = p <= m. Area order is
/// preserved exactly as given.
class AreaLevelDataset {
 public:
  AreaLevelDataset(Vector y, Vector d, Matrix x, std::vector<std::string> area_ids = {});

  std::size_t num_areas() const noexcept { return static_cast<std::size_t>(y_.size()); }
  std::size_t num_covariates() const noexcept { return static_cast<std::size_t>(x_.cols()); }

  const Vector& y() const noexcept { return y_; }
  const Vector& d() const noexcept { return d_; }
  const Matrix& x() const noexcept { return x_; }
  const std::vector<std::string>& area_ids() const noexcept { return area_ids_; }

  /// Same D, X and ids with a new response vector. The design was validated
  /// once already, so only the length and finiteness of y are checked.
  AreaLevelDataset with_response(Vector y) const;

  /// m > p + 2, the requirement of the multi-goal adjustment.
  bool supports_multi_goal() const noexcept { return num_areas() > num_covariates() + 2; }

  /// Sample variance of y (denominator m - 1); 0 when m == 1.
  double response_variance() const;

 private:
  AreaLevelDataset() = default;

  Vector y_;
  Vector d_;
  Matrix x_;
  std::vector<std::string> area_ids_;
};

struct Hyperparameters {
  Vector beta;
  double A = 0.0;
};

/// B_i(A) = D_i / (A + D_i).
double shrinkage(double A, double d);

/// sum_i (A + D_i)^{-k}, i.e. tr[V^{-k}] for V = diag(A + D_i); k in {1,2,3,4}.
double trace_v_inv_pow(const AreaLevelDataset& data, double A, int k);

struct GlsEstimate {
  Vector beta;
  Matrix cov;  ///< (X'V^{-1}X)^{-1}
  double log_det_information = 0.0;  ///< log det(X'V^{-1}X)
  double condition_number = 1.0;
};

/// Weighted least squares with weights w_i = 1/(A + D_i).
GlsEstimate gls_beta(const AreaLevelDataset& data, double A);

/// GLS with V = diag(A_i + D_i): the plug-in for beta-hat(A_1, ..., A_m).
GlsEstimate gls_beta_heterogeneous(const AreaLevelDataset& data, std::span<const double> a_values);

/// GLS for arbitrary positive weights; the shared kernel of the two above.
GlsEstimate weighted_gls(const AreaLevelDataset& data, const Vector& weights);

/// (1 - B_i) y_i + B_i x_i' beta-hat(A).
double blup(const AreaLevelDataset& data, double A, std::size_t area);

/// BLUP with a precomputed beta.
double blup(const AreaLevelDataset& data, double A, std::size_t area, const Vector& beta);

}  // namespace fhmg
