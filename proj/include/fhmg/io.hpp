#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fhmg/core.hpp"
#include "fhmg/verify.hpp"

namespace fhmg::io {

inline constexpr int kSchemaVersion = 1;

/// Header must read exactly `area_id,y,D,x1,...,xp`; row order is preserved.
AreaLevelDataset ingest_csv(const std::string& path);
AreaLevelDataset parse_csv(std::istream& in);

void write_dataset_csv(std::ostream& out, const AreaLevelDataset& data);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// m areas, intercept plus three N(0, 1) covariates, D log-spaced on [0.5, 8].
struct SyntheticConfig {
  int m = 51;
  std::uint64_t seed = 0;
  std::vector<double> beta{15.0, 2.0, -1.5, 1.0};
  double A = 1.5;
  double d_min = 0.5;
  double d_max = 8.0;
};
AreaLevelDataset synthetic_saipe(const SyntheticConfig& cfg);

/// `key = value` lines; `#` starts a comment. `seed` is mandatory.
struct SimulationFile {
  std::vector<std::string> studies;
  verify::SimulationConfig config;
};
SimulationFile parse_simulation_config(std::istream& in);
SimulationFile read_simulation_config(const std::string& path);

using Cell = std::variant<std::string, double, std::int64_t>;

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

struct Report {
  std::string command;
  nlohmann::ordered_json config;
  std::vector<Table> tables;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

enum class Format { json, csv };

std::string render(const Report& report, Format format);
/// Writes to stdout when `path` is empty.
void write_report(const Report& report, Format format, const std::string& path);

}  // namespace fhmg::io
