#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fhmg/core.hpp"
#include "fhmg/likelihood.hpp"

namespace fhmg {

struct QuadratureOptions {
  double relative_tolerance = 1e-8;
  /// The integrand is truncated where its log falls this far below the mode.
  double truncation_nats = 40.0;
  /// Initial uniform panels; each panel carries 4 subintervals (128 -> 513 nodes).
  int initial_panels = 128;
  int max_depth = 40;
  /// Longest excursion in log A from the mode before a tail is declared divergent.
  double max_tail_span = 150.0;
  /// Integrate over this A-range instead of the automatic truncation window.
  std::optional<std::pair<double, double>> window;
};

struct QuadratureDiagnostics {
  std::size_t node_count = 0;
  double mode = 0.0;         ///< posterior mode of log A, reported as A
  double truncation_lo = 0.0;  ///< A at the left truncation point
  double truncation_hi = 0.0;  ///< A at the right truncation point
  double log_normalization = 0.0;  ///< log of the integral of L_RE(A) pi(A) dA
  bool divergence_flag = false;
  double achieved_tolerance = 0.0;  ///< total local error / normalization
};

/// Posterior moments of B_i and theta_i with beta integrated out under a
/// flat prior. Each summary carries a conservative quadrature error estimate.
struct PosteriorSummary {
  std::string area_id;
  double e_b = 0.0;      ///< E[B_i | y]
  double v_b = 0.0;      ///< V[B_i | y]
  double e_theta = 0.0;  ///< E[theta_i | y]
  double v_theta = 0.0;  ///< V[theta_i | y]
  double e_g1_g2 = 0.0;  ///< E[g1 + g2 | y], the within-A part of v_theta
  double err_e_b = 0.0;
  double err_v_b = 0.0;
  double err_e_theta = 0.0;
  double err_v_theta = 0.0;
  QuadratureDiagnostics diagnostics;
};

/// l_RE(A) + log pi(A) up to an additive constant. The flat prior on beta
/// integrates out to exactly the residual likelihood.
double marginal_log_posterior(const AreaLevelDataset& data, const PriorSpec& prior, double A);

/// Throws ImproperPosteriorError when a tail does not decay within
/// max_tail_span, and QuadratureError when refinement stalls.
PosteriorSummary posterior_summary(const AreaLevelDataset& data, const PriorSpec& prior, std::size_t area,
                                   const QuadratureOptions& options = {});

/// Copy of an area-indexed prior re-targeted at `area`.
PriorSpec prior_for_area(const PriorSpec& prior, std::size_t area);

/// One summary per area; area-indexed priors are re-targeted per area.
std::vector<PosteriorSummary> posterior_summaries(const AreaLevelDataset& data, const PriorSpec& prior,
                                                  const QuadratureOptions& options = {}, unsigned threads = 1);

/// Second-order expansions of E[B_i|y] and E[theta_i|y] around A_RE.
struct DattaExpansion {
  double expansion_e_b = 0.0;
  double expansion_theta = 0.0;
  double g1pi = 0.0;
  double rho1 = 0.0;
  double a_reml = 0.0;
  bool at_boundary = false;  ///< A_RE = 0: no expansion
};

DattaExpansion datta_expansion_check(const AreaLevelDataset& data, const PriorSpec& prior, std::size_t area);

/// Leading O(1/m) gap between E_flat[B_i|y] and B_i(A_{i;MG}):
/// 4 D_i / (tr[V^{-2}] (A + D_i)^2) * [1/(A + D_i) - tr[V^{-3}]/tr[V^{-2}]].
double flat_prior_bias_term(const AreaLevelDataset& data, double A, std::size_t area);

}  // namespace fhmg
