#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace fhmg::nerm {

/// Unit counts n_i per area of a nested error regression model
///   y_ij = x_ij' beta + v_i + e_ij,  v_i ~ N(0, sigma_v^2),  e_ij ~ N(0, sigma_e^2).
class NermDesign {
 public:
  explicit NermDesign(std::vector<int> units_per_area);

  const std::vector<int>& units() const noexcept { return n_; }
  std::size_t num_areas() const noexcept { return n_.size(); }

 private:
  std::vector<int> n_;
};

struct Psi {
  double sigma_v2 = 1.0;
  double sigma_e2 = 1.0;
};

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

/// Inverse Fisher information of psi = (sigma_v^2, sigma_e^2):
///   (2/a) [[ sum (n_i - 1)/s_e^4 + c_i^{-2},  -sum n_i/c_i^2 ],
///          [ -sum n_i/c_i^2,                   sum n_i^2/c_i^2 ]],
/// c_i = n_i s_v^2 + s_e^2 and a the determinant of the bracketed matrix.
Mat2 fisher_inverse(const NermDesign& design, const Psi& psi);

/// B_i = sigma_e^2 / (n_i sigma_v^2 + sigma_e^2).
double shrinkage(const Psi& psi, int n_i);

/// dB_i/dpsi = n_i / c_i^2 (-sigma_e^2, sigma_v^2)'.
Vec2 shrinkage_gradient(const Psi& psi, int n_i);

/// d^2 B_i / dpsi^2 (analytic).
Mat2 shrinkage_hessian(const Psi& psi, int n_i);

/// H(psi) = -1/2 tr[ d^2 B_i/dpsi^2  I_F^{-1} ].
double curvature_h(const NermDesign& design, const Psi& psi, std::size_t area);

/// d log h / dpsi = v k with v = H / (k' I_F^{-1} dB_i/dpsi), the solution of
/// [d log h/dpsi]' I_F^{-1} dB_i/dpsi = H(psi) along the direction k.
Vec2 adjustment_gradient(const NermDesign& design, const Psi& psi, std::size_t area, const Vec2& k);

}  // namespace fhmg::nerm
