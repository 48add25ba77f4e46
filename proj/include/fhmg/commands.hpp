#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fhmg/bayes.hpp"
#include "fhmg/estimators.hpp"
#include "fhmg/io.hpp"
#include "fhmg/likelihood.hpp"

namespace fhmg::cli {

/// Resolved command-line settings. `threads` and `output` are deliberately
/// absent from the embedded report config: reports must not depend on them.
struct RunConfig {
  std::string command;  ///< fit, bayes, bootstrap, figures, simulate, synth, nerm-grad, propriety
  std::string input;
  std::string method = "mg";  ///< ml, reml, adj-power, mg
  double power_s = 1.0;
  std::vector<std::string> priors{"mg"};  ///< flat, mg, general-mg, ganesh-lahiri
  double prior_s = 1.0;                   ///< s of the general-mg power adjustment
  std::string gl_weights = "uniform";     ///< "uniform" or a file of m weights
  std::size_t bootstrap_replicates = 10000;
  std::optional<std::uint64_t> seed;
  bool antithetic = false;
  std::string beta_plugin = "heterogeneous";  ///< heterogeneous, area-specific
  io::Format format = io::Format::json;
  std::string output;
  std::optional<double> quadrature_tolerance;
  std::string simulation_config;
  int synth_m = 51;
  // nerm-grad
  std::vector<int> nerm_n;
  double sigma_v2 = 1.0;
  double sigma_e2 = 1.0;
  std::size_t nerm_area = 0;
  std::vector<double> nerm_k;
  // propriety
  double prop_s = 1.0;
  int prop_m = 0;
  int prop_p = 0;

  unsigned threads = 1;

  /// Throws InputError on an invalid combination.
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

FitMethod make_method(const RunConfig& cfg);
PriorSpec make_prior(const RunConfig& cfg, const std::string& name, const AreaLevelDataset& data);
QuadratureOptions make_quadrature(const RunConfig& cfg);

/// Report plus the per-area failure count that decides the exit code.
struct CommandOutput {
  io::Report report;
  std::size_t failures = 0;
};

CommandOutput cmd_fit(const RunConfig& cfg);
CommandOutput cmd_bayes(const RunConfig& cfg);
CommandOutput cmd_bootstrap(const RunConfig& cfg);
CommandOutput cmd_figures(const RunConfig& cfg);
CommandOutput cmd_simulate(const RunConfig& cfg);
/// Writes a dataset in the ingest_csv format rather than a report.
void cmd_synth(const RunConfig& cfg, std::ostream& out);
CommandOutput cmd_nerm_grad(const RunConfig& cfg);
CommandOutput cmd_propriety(const RunConfig& cfg);

/// Exit codes: 0 success, 1 some per-area computation failed, 2 invalid input
/// or configuration, 3 numerical failure.
int run(const RunConfig& cfg, std::ostream& err);

/// Single-line JSON error record for a caught exception.
std::string error_record(const std::exception& e);

}  // namespace fhmg::cli
