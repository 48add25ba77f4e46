#pragma once

#include <cstddef>
#include <functional>
#include <variant>
#include <vector>

#include "fhmg/core.hpp"

namespace fhmg {

// ---------------------------------------------------------------------------
// Residual likelihood
//
// l_RE(A) = -1/2 [ sum_i log(A + D_i) + log det(X'V^{-1}X) + y'P y ],
// P = V^{-1} - V^{-1} X (X'V^{-1}X)^{-1} X'V^{-1}.
//
// The constant -(m - p)/2 log(2 pi) (and +1/2 log det X'X) is omitted
// everywhere; consumers only use differences and normalized ratios.
// ---------------------------------------------------------------------------

double log_residual_likelihood(const AreaLevelDataset& data, double A);

/// Analytic k-th derivative (k in {1,2,3}) of l_RE; requires A > 0.
double log_residual_likelihood_derivative(const AreaLevelDataset& data, double A, int order);

struct ResidualLikelihoodDerivatives {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
  double d3 = 0.0;
};

/// Value and first three derivatives from a single factorization.
ResidualLikelihoodDerivatives residual_likelihood_derivatives(const AreaLevelDataset& data, double A);

/// Everything a posterior node needs at one A: the GLS fit, residuals and l_RE.
struct ModelEvaluation {
  double A = 0.0;
  GlsEstimate gls;
  Vector residual;  ///< y - X beta-hat(A)
  double quadratic_form = 0.0;  ///< y'P y
  double log_likelihood = 0.0;  ///< l_RE(A)
};

ModelEvaluation evaluate_model(const AreaLevelDataset& data, double A);

// ---------------------------------------------------------------------------
// Adjustment factors h(A)
// ---------------------------------------------------------------------------

/// h == 1: plain residual likelihood.
struct RemlAdjustment {};

/// h = det(X'V^{-1}X)^{1/2}: turns l_RE into the profile likelihood.
struct MlAdjustment {};

/// h_i = (A + D_i)^s.
struct PowerAdjustment {
  double s = 1.0;
  std::size_t area = 0;
};

/// h~_i = h_+(A) (A + D_i) with h_+(A) = [arctan(sum_j A/(A + D_j))]^{1/m}.
struct MultiGoalAdjustment {
  std::size_t area = 0;
};

/// User supplied log h and its first derivative; both must be pure.
struct CustomAdjustment {
  std::function<double(double)> log_h;
  std::function<double(double)> log_h_derivative;
};

using AdjustmentSpec =
    std::variant<RemlAdjustment, MlAdjustment, PowerAdjustment, MultiGoalAdjustment, CustomAdjustment>;

double log_adjustment(const AdjustmentSpec& spec, const AreaLevelDataset& data, double A);
double log_adjustment_derivative(const AdjustmentSpec& spec, const AreaLevelDataset& data, double A);

/// True when the adjustment depends on the target area.
bool is_area_specific(const AdjustmentSpec& spec);

/// Copy of spec re-targeted at another area (no-op for shared kinds).
AdjustmentSpec with_area(const AdjustmentSpec& spec, std::size_t area);

/// True when h(0) = 0, so the search must stay on the open ray A > 0.
bool vanishes_at_zero(const AdjustmentSpec& spec);

double log_h_plus(const AreaLevelDataset& data, double A);
double log_h_plus_derivative(const AreaLevelDataset& data, double A);

// ---------------------------------------------------------------------------
// Priors on A (beta is always flat)
// ---------------------------------------------------------------------------

struct FlatPrior {};

/// pi_i(A) ∝ (A + D_i)^2 tr[V^{-2}].
struct MultiGoalPrior {
  std::size_t area = 0;
};

/// pi_{i;G}(A) ∝ h_{i;G}(A) (A + D_i) tr[V^{-2}].
struct GeneralMultiGoalPrior {
  AdjustmentSpec adjustment;
  std::size_t area = 0;
};

/// pi(A) ∝ sum_i (A + D_i)^{-2} / sum_i w_i D_i^2 (A + D_i)^{-2}.
struct GaneshLahiriPrior {
  std::vector<double> weights;

  static GaneshLahiriPrior uniform(std::size_t m);
};

using PriorSpec = std::variant<FlatPrior, MultiGoalPrior, GeneralMultiGoalPrior, GaneshLahiriPrior>;

double log_prior(const PriorSpec& prior, const AreaLevelDataset& data, double A);

/// d log pi / dA, the rho_1 of the posterior expansions.
double log_prior_derivative(const PriorSpec& prior, const AreaLevelDataset& data, double A);

const char* prior_name(const PriorSpec& prior);

// ---------------------------------------------------------------------------
// Posterior propriety for h(A) = (A + D_i)^s
// ---------------------------------------------------------------------------

struct ProprietyCheck {
  bool proper_as_raw_adjustment = false;    ///< s < (m - p - 2)/2
  bool proper_as_general_mg_prior = false;  ///< s < (m - p)/2
};

ProprietyCheck check_propriety(double s, int m, int p);

/// Only PowerAdjustment is covered by the sufficient conditions; other kinds throw.
ProprietyCheck check_propriety(const AdjustmentSpec& spec, const AreaLevelDataset& data);

}  // namespace fhmg
