#include "fhmg/core.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "fhmg/errors.hpp"

namespace fhmg {

namespace {

void require_finite(const Vector& v, const char* name) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << name << "[" << i << "] is not finite";
      throw DomainError(os.str());
    }
  }
}

}  // namespace

AreaLevelDataset::AreaLevelDataset(Vector y, Vector d, Matrix x, std::vector<std::string> area_ids)
    : y_(std::move(y)), d_(std::move(d)), x_(std::move(x)), area_ids_(std::move(area_ids)) {
  const auto m = y_.size();
  if (m == 0) throw DomainError("dataset has no areas");
  if (d_.size() != m || x_.rows() != m) {
    throw DomainError("y, D and X must have the same number of rows");
  }
  if (x_.cols() == 0) throw DomainError("X must have at least one column");
  if (x_.cols() > m) throw DomainError("more covariates than areas (p > m)");
  require_finite(y_, "y");
  require_finite(d_, "D");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(d_[i] > 0.0)) {
      std::ostringstream os;
      os << "sampling variance D[" << i << "] = " << d_[i] << " is not positive";
      throw DomainError(os.str());
    }
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      if (!std::isfinite(x_(i, j))) throw DomainError("X contains a non-finite entry");
    }
  }

  Eigen::ColPivHouseholderQR<Matrix> qr(x_);
  if (qr.rank() < x_.cols()) {
    std::ostringstream os;
    os << "X has rank " << qr.rank() << " < p = " << x_.cols();
    throw SingularDesignError(os.str(), std::numeric_limits<double>::infinity());
  }

  if (area_ids_.empty()) {
    area_ids_.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) area_ids_.push_back(std::to_string(i + 1));
  } else if (area_ids_.size() != static_cast<std::size_t>(m)) {
    throw DomainError("area_ids length differs from number of areas");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : area_ids_) {
    if (!seen.insert(id).second) throw DomainError("duplicate area id '" + id + "'");
  }
}

AreaLevelDataset AreaLevelDataset::with_response(Vector y) const {
  if (y.size() != y_.size()) throw DomainError("response length differs from number of areas");
  require_finite(y, "y");
  AreaLevelDataset out;
  out.y_ = std::move(y);
  out.d_ = d_;
  out.x_ = x_;
  out.area_ids_ = area_ids_;
  return out;
}

double AreaLevelDataset::response_variance() const {
  const auto m = y_.size();
  if (m < 2) return 0.0;
  const double mean = y_.mean();
  return (y_.array() - mean).square().sum() / static_cast<double>(m - 1);
}

double shrinkage(double A, double d) {
  if (!(d > 0.0)) throw DomainError("shrinkage: D must be positive");
  if (!(A >= 0.0)) throw DomainError("shrinkage: A must be nonnegative");
  return d / (A + d);
}

double trace_v_inv_pow(const AreaLevelDataset& data, double A, int k) {
  if (k < 1 || k > 4) throw DomainError("trace_v_inv_pow: k must be in {1,2,3,4}");
  if (!(A >= 0.0)) throw DomainError("trace_v_inv_pow: A must be nonnegative");
  double sum = 0.0;
  for (double d : data.d()) sum += std::pow(A + d, -k);
  return sum;
}

GlsEstimate weighted_gls(const AreaLevelDataset& data, const Vector& weights) {
  const Matrix& x = data.x();
  // X'WX and X'Wy by accumulation over the diagonal weight matrix.
  const Matrix xw = x.transpose() * weights.asDiagonal();
  const Matrix info = xw * x;
  const Vector score = xw * data.y();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(info);
  const Vector& lambda = eig.eigenvalues();
  const double lmin = lambda.minCoeff();
  const double lmax = lambda.maxCoeff();
  const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxConditionNumber)) {
    std::ostringstream os;
    os << "X'V^{-1}X is singular (condition number " << cond << ")";
    throw SingularDesignError(os.str(), cond);
  }

  GlsEstimate out;
  out.cov = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.beta = out.cov * score;
  out.log_det_information = lambda.array().log().sum();
  out.condition_number = cond;
  return out;
}

GlsEstimate gls_beta(const AreaLevelDataset& data, double A) {
  if (!(A >= 0.0)) throw DomainError("gls_beta: A must be nonnegative");
  const Vector w = (data.d().array() + A).inverse();
  return weighted_gls(data, w);
}

GlsEstimate gls_beta_heterogeneous(const AreaLevelDataset& data, std::span<const double> a_values) {
  if (a_values.size() != data.num_areas()) {
    throw DomainError("gls_beta_heterogeneous: need one A per area");
  }
  Vector w(static_cast<Eigen::Index>(a_values.size()));
  for (std::size_t i = 0; i < a_values.size(); ++i) {
    if (!(a_values[i] > 0.0)) throw DomainError("gls_beta_heterogeneous: every A_i must be positive");
    w[static_cast<Eigen::Index>(i)] = 1.0 / (a_values[i] + data.d()[static_cast<Eigen::Index>(i)]);
  }
  return weighted_gls(data, w);
}

double blup(const AreaLevelDataset& data, double A, std::size_t area, const Vector& beta) {
  const auto i = static_cast<Eigen::Index>(area);
  const double b = shrinkage(A, data.d()[i]);
  const double synthetic = data.x().row(i).dot(beta);
  return (1.0 - b) * data.y()[i] + b * synthetic;
}

double blup(const AreaLevelDataset& data, double A, std::size_t area) {
  if (area >= data.num_areas()) throw DomainError("blup: area index out of range");
  return blup(data, A, area, gls_beta(data, A).beta);
}

}  // namespace fhmg
