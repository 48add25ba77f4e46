#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fhmg/core.hpp"
#include "fhmg/likelihood.hpp"

namespace fhmg {

enum class BoundaryPolicy {
  allow_zero,        ///< search [0, A_max]; REML, ML, power adjustments
  strictly_positive  ///< search (0, A_max]; required when h(0) = 0
};

/// A smooth objective on the half line A >= 0 with its analytic derivative.
struct HalfLineObjective {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

struct SearchDiagnostics {
  int evaluations = 0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  double objective = 0.0;
  double gradient = 0.0;     ///< derivative at the returned point (0 at A = 0)
  double upper_bound = 0.0;  ///< final A_max after escalation
  int escalations = 0;
  bool at_zero = false;
  bool hit_upper_bound = false;  ///< warning: maximizer sits on A_max
};

struct Maximum {
  double argmax = 0.0;
  SearchDiagnostics diagnostics;
};

/// Global-then-local maximization of a univariate objective on [0, A_max].
///
/// A log-spaced scan over 35 e-folds below A_max picks the best probe (the
/// smallest one on ties), Brent's golden-section/parabolic search refines it
/// in t = log A, and a bracketed root solve on the analytic derivative polishes
/// the stationary point. A maximizer on A_max triggers up to
/// `max_escalations` retries with A_max multiplied by 10.
Maximum maximize_on_half_line(const HalfLineObjective& objective, double upper_bound,
                              BoundaryPolicy policy, int max_escalations = 2);

struct FitMethod {
  AdjustmentSpec adjustment = RemlAdjustment{};
  double search_bound_factor = 100.0;
  BoundaryPolicy boundary_policy = BoundaryPolicy::allow_zero;

  static FitMethod reml();
  static FitMethod ml();
  static FitMethod power(double s);
  static FitMethod multi_goal();

  std::string name() const;
};

/// A_max = factor * (var(y) + max D_i).
double search_upper_bound(const AreaLevelDataset& data, double factor);

/// argmax over A of log h(A) + l_RE(A) for the adjustment bound to `area`.
Maximum maximize_adjusted_likelihood(const AreaLevelDataset& data, const FitMethod& method,
                                     std::size_t area);

/// log h(A) + l_RE(A) for the adjustment bound to `area`.
double adjusted_log_likelihood(const AreaLevelDataset& data, const FitMethod& method,
                               std::size_t area, double A);

struct AreaFit {
  std::string area_id;
  double A_hat = 0.0;
  double B_hat = 1.0;
  double theta_hat = 0.0;  ///< EBLUP (1 - B_hat) y_i + B_hat x_i' beta-hat(A_hat)
  Vector beta_hat;         ///< beta-hat(A_hat) used by theta_hat
  SearchDiagnostics diagnostics;
};

struct FitResult {
  FitMethod method;
  std::vector<AreaFit> areas;
  bool shared_estimate = true;  ///< one A-hat for all areas (REML, ML, custom)
  /// Plug-in beta: beta-hat(A-hat) when shared, beta-hat(A_1, ..., A_m) otherwise.
  Vector beta_hat;

  std::vector<double> a_values() const;
};

/// Fits every area. Area-specific adjustments run one maximization per area,
/// distributed over `threads` workers; output is identical for any thread count.
FitResult fit(const AreaLevelDataset& data, const FitMethod& method, unsigned threads = 1);

struct Theorem1Gap {
  double observed = 0.0;   ///< A_{i;G} - A_RE
  double predicted = 0.0;  ///< 2 d log h(A_RE)/dA / tr[V^{-2}(A_RE)]
  double a_reml = 0.0;
  double a_adjusted = 0.0;
  bool reml_at_boundary = false;  ///< A_RE = 0; excluded from studies
};

Theorem1Gap theorem1_gap(const AreaLevelDataset& data, const FitMethod& method, std::size_t area);

}  // namespace fhmg
