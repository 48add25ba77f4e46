#include "fhmg/nerm.hpp"

#include <cmath>
#include <sstream>

#include "fhmg/errors.hpp"

namespace fhmg::nerm {

namespace {

void validate(const Psi& psi) {
  if (!(psi.sigma_v2 > 0.0) || !(psi.sigma_e2 > 0.0) || !std::isfinite(psi.sigma_v2) ||
      !std::isfinite(psi.sigma_e2)) {
    throw DomainError("psi components must be positive and finite");
  }
}

int units_of(const NermDesign& design, std::size_t area) {
  if (area >= design.num_areas()) throw DomainError("NERM area index out of range");
  return design.units()[area];
}

}  // namespace

NermDesign::NermDesign(std::vector<int> units_per_area) : n_(std::move(units_per_area)) {
  if (n_.empty()) throw DomainError("NERM design needs at least one area");
  bool replicated = false;
  for (int n : n_) {
    if (n < 1) throw DomainError("every area needs n_i >= 1");
    replicated = replicated || n >= 2;
  }
  if (!replicated) throw DomainError("sigma_e^2 is not identifiable: every n_i = 1");
}

Mat2 fisher_inverse(const NermDesign& design, const Psi& psi) {
  validate(psi);
  const double se4 = psi.sigma_e2 * psi.sigma_e2;
  double s11 = 0.0, s12 = 0.0, s22 = 0.0;
  for (int n_int : design.units()) {
    const double n = n_int;
    const double c = n * psi.sigma_v2 + psi.sigma_e2;
    const double c2 = c * c;
    s11 += (n - 1.0) / se4 + 1.0 / c2;
    s12 -= n / c2;
    s22 += n * n / c2;
  }
  const double a = s22 * s11 - s12 * s12;
  if (!(a > 0.0)) {
    std::ostringstream os;
    os << "degenerate NERM information (a = " << a << ")";
    throw DomainError(os.str());
  }
  const double f = 2.0 / a;
  return Mat2{{{f * s11, f * s12}, {f * s12, f * s22}}};
}

double shrinkage(const Psi& psi, int n_i) {
  validate(psi);
  return psi.sigma_e2 / (n_i * psi.sigma_v2 + psi.sigma_e2);
}

Vec2 shrinkage_gradient(const Psi& psi, int n_i) {
  validate(psi);
  if (n_i < 1) throw DomainError("n_i must be >= 1");
  const double n = n_i;
  const double c = n * psi.sigma_v2 + psi.sigma_e2;
  const double f = n / (c * c);
  return {-f * psi.sigma_e2, f * psi.sigma_v2};
}

Mat2 shrinkage_hessian(const Psi& psi, int n_i) {
  validate(psi);
  if (n_i < 1) throw DomainError("n_i must be >= 1");
  const double n = n_i;
  const double c = n * psi.sigma_v2 + psi.sigma_e2;
  const double c3 = c * c * c;
  const double vv = 2.0 * n * n * psi.sigma_e2 / c3;
  const double ve = n * (psi.sigma_e2 - n * psi.sigma_v2) / c3;
  const double ee = -2.0 * n * psi.sigma_v2 / c3;
  return Mat2{{{vv, ve}, {ve, ee}}};
}

double curvature_h(const NermDesign& design, const Psi& psi, std::size_t area) {
  const Mat2 hess = shrinkage_hessian(psi, units_of(design, area));
  const Mat2 inv = fisher_inverse(design, psi);
  double trace = 0.0;
  for (int j = 0; j < 2; ++j) {
    for (int k = 0; k < 2; ++k) trace += hess[j][k] * inv[k][j];
  }
  return -0.5 * trace;
}

Vec2 adjustment_gradient(const NermDesign& design, const Psi& psi, std::size_t area, const Vec2& k) {
  const int n_i = units_of(design, area);
  const Mat2 inv = fisher_inverse(design, psi);
  const Vec2 grad = shrinkage_gradient(psi, n_i);
  const Vec2 ig = {inv[0][0] * grad[0] + inv[0][1] * grad[1], inv[1][0] * grad[0] + inv[1][1] * grad[1]};
  const double denom = k[0] * ig[0] + k[1] * ig[1];
  const double scale = std::hypot(k[0], k[1]) * std::hypot(ig[0], ig[1]);
  if (!(std::abs(denom) > 1e-12 * scale)) {
    std::ostringstream os;
    os << "direction k is orthogonal to I_F^{-1} dB/dpsi (k' I_F^{-1} dB/dpsi = " << denom << ")";
    throw DomainError(os.str());
  }
  const double v = curvature_h(design, psi, area) / denom;
  return {v * k[0], v * k[1]};
}

}  // namespace fhmg::nerm
