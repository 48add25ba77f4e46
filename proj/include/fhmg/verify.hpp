#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fhmg/core.hpp"
#include "fhmg/likelihood.hpp"

namespace fhmg::verify {

struct BalancedD {
  double d = 1.0;
};
/// D_i log-spaced from d_min (area 1) to d_max (area m).
struct GeometricD {
  double d_min = 0.5;
  double d_max = 8.0;
};
struct ExplicitD {
  std::vector<double> values;
};
using DPattern = std::variant<BalancedD, GeometricD, ExplicitD>;

struct InterceptOnly {};
/// Intercept plus p - 1 covariates drawn U(0, 1) from their own seed; fixed across replicates.
struct RandomUniformDesign {
  std::uint64_t seed = 0;
};
using XDesign = std::variant<InterceptOnly, RandomUniformDesign>;

struct SimulationConfig {
  int m = 50;
  int p = 1;
  std::vector<double> true_beta{0.0};
  double true_A = 1.0;
  DPattern d_pattern = GeometricD{};
  XDesign x_design = InterceptOnly{};
  std::size_t replications = 500;
  std::uint64_t seed = 1;

  // Study settings.
  std::vector<int> m_ladder{25, 50, 100, 200};
  double adjustment_power = 1.0;        ///< s of the power adjustment (0 = constant)
  std::size_t bootstrap_replicates = 0; ///< property (v) is skipped when 0
  unsigned threads = 1;
  bool keep_records = false;

  void validate() const;
};

Vector sampling_variances(const SimulationConfig& cfg);
Matrix design_matrix(const SimulationConfig& cfg);

struct SimulatedDataset {
  AreaLevelDataset data;
  Vector theta;
};

/// theta_i ~ N(x_i' beta, A), y_i = theta_i + e_i, e_i ~ N(0, D_i); the draws
/// come from the stream (seed, replicate) with substream m.
SimulatedDataset simulate_dataset(const SimulationConfig& cfg, std::size_t replicate);

/// Quantities of the second-order posterior expansions at A_RE.
struct ExpansionTerms {
  double b1 = 0.0;
  double b2 = 0.0;
  double h2 = 0.0;
  double h3 = 0.0;
  double rho1 = 0.0;
  double g1pi = 0.0;
};

ExpansionTerms expansion_terms(const AreaLevelDataset& data, double a_reml, std::size_t area,
                               const PriorSpec& prior);

/// Areas with the smallest, median and largest D_i (lowest index on ties).
struct AreaClass {
  std::string name;
  std::size_t area = 0;
};
std::vector<AreaClass> area_classes(const Vector& d);

struct StudyRecord {
  int m = 0;
  std::size_t replicate = 0;
  std::string area_class;
  std::string quantity;
  double value = 0.0;
};

struct SummaryRow {
  int m = 0;
  std::string area_class;
  std::string quantity;
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double std_error = 0.0;
};

struct StudyCheck {
  std::string name;
  std::string verdict;  ///< "pass", "fail" or "inconclusive"
  std::string detail;
};

struct StudyReport {
  std::string study;
  std::vector<SummaryRow> rows;
  std::vector<StudyCheck> checks;
  std::map<int, double> excluded_rate;  ///< REML-at-boundary rate per m
  std::vector<StudyRecord> records;     ///< filled when cfg.keep_records

  const SummaryRow& row(int m, const std::string& area_class, const std::string& quantity) const;
  bool passed() const;
};

/// m-scaled bias of B_{i;MG}, E_MG[B_i|y] and E_flat[B_i|y] against the true
/// B_i at m = cfg.m, plus the mean gap B_i(A_{i;MG}) - B_i(A_RE).
StudyReport bias_study(const SimulationConfig& cfg);

enum class Theorem { theorem1, theorem2, corollary1, properties };

/// m-scaled gap statistics across cfg.m_ladder. A claim X = Y + o_p(1/m) is
/// checked as: the median of m |X - Y| strictly decreases along the ladder.
StudyReport theorem_study(const SimulationConfig& cfg, Theorem which);

const char* theorem_name(Theorem which);

}  // namespace fhmg::verify
