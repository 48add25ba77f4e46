#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fhmg/core.hpp"
#include "fhmg/estimators.hpp"

namespace fhmg {

/// Second-order MSE components of the EBLUP at a given A.
///   g1 = A D_i / (A + D_i)
///   g2 = B_i^2 x_i' (X'V^{-1}X)^{-1} x_i
///   g3 = 2 D_i^2 / [(A + D_i)^3 tr(V^{-2})]
struct MseComponents {
  double g1 = 0.0;
  double g2 = 0.0;
  double g3 = 0.0;
  double taylor_total = 0.0;
};

MseComponents g_components(const AreaLevelDataset& data, double A, std::size_t area);

/// Asymptotic variance of B_i(A-hat): b1^2 * 2 / tr[V^{-2}], b1 = -D_i/(A + D_i)^2.
double var_b_hat(const AreaLevelDataset& data, double A, std::size_t area);

/// g1 + g2 + g3 at the area's own A-hat, with no bias correction.
double taylor_mse(const AreaLevelDataset& data, const FitResult& fit, std::size_t area);

/// Which beta-hat recentres the bootstrap linking model.
enum class BetaPlugin {
  heterogeneous,  ///< beta-hat(A_1, ..., A_m) with V = diag(A_i + D_i)
  area_specific   ///< beta-hat(A_i) for the target area's bootstrap
};

struct BootstrapConfig {
  std::size_t replicates = 10000;
  std::uint64_t seed = 0;
  bool antithetic = false;  ///< pair replicate 2k+1 with the negated draws of 2k
  unsigned threads = 1;
  BetaPlugin beta_plugin = BetaPlugin::heterogeneous;
  /// Predict with the generating (beta, A_i) instead of refitting; the
  /// estimate then targets g1(A_i) exactly.
  bool oracle = false;
};

struct BootstrapAreaEstimate {
  std::string area_id;
  double estimate = 0.0;
  std::optional<double> mc_stderr;  ///< absent with a single replicate (or pair)
};

struct BootstrapResult {
  std::vector<BootstrapAreaEstimate> areas;
  std::size_t replicates = 0;
  std::size_t excluded_refits = 0;
};

/// Single parametric bootstrap:
///   theta*_j = x_j' beta-hat + u*_j,  u*_j ~ N(0, A-hat_j)
///   y*_j     = theta*_j + e*_j,       e*_j ~ N(0, D_j)
/// and estimate_i = mean over replicates of (theta-hat_i(A*_i, y*) - theta*_i)^2,
/// where A*_i refits the same method on y*. Replicate r draws from the stream
/// (seed, r) only, so results do not depend on cfg.threads.
BootstrapResult bootstrap_mse(const AreaLevelDataset& data, const FitResult& fit, const BootstrapConfig& cfg);

}  // namespace fhmg
