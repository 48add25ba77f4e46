#include "fhmg/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "fhmg/errors.hpp"
#include "fhmg/random.hpp"
#include "overloaded.hpp"

namespace fhmg::io {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& text, const std::string& column, std::size_t line) {
  const std::string t = trim(text);
  if (t.empty()) throw InputError("line " + std::to_string(line) + ": empty value in column " + column, line);
  double v = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw InputError("line " + std::to_string(line) + ": invalid number '" + t + "' in column " + column, line);
  }
  return v;
}

long long parse_integer(const std::string& text, const std::string& key, std::size_t line) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw InputError("line " + std::to_string(line) + ": " + key + " needs an integer, got '" + t + "'", line);
  }
  return v;
}

}  // namespace

AreaLevelDataset parse_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw InputError("no data rows", 0);
  ++line_no;
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  if (header.size() < 4 || header[0] != "area_id" || header[1] != "y" || header[2] != "D") {
    throw InputError("line 1: header must be area_id,y,D,x1,...,xp", 1);
  }
  const std::size_t p = header.size() - 3;
  for (std::size_t j = 0; j < p; ++j) {
    if (header[3 + j] != "x" + std::to_string(j + 1)) {
      throw InputError("line 1: expected column x" + std::to_string(j + 1) + ", got '" + header[3 + j] + "'", 1);
    }
  }

  std::vector<std::string> ids;
  std::vector<double> y, d, x;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != header.size()) {
      throw InputError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                           " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    const std::string id = trim(fields[0]);
    if (id.empty()) throw InputError("line " + std::to_string(line_no) + ": empty area_id", line_no);
    if (!seen.insert(id).second) {
      throw InputError("line " + std::to_string(line_no) + ": duplicate area_id '" + id + "'", line_no);
    }
    ids.push_back(id);
    y.push_back(parse_real(fields[1], "y", line_no));
    const double di = parse_real(fields[2], "D", line_no);
    if (!(di > 0.0)) throw InputError("line " + std::to_string(line_no) + ": D must be positive", line_no);
    d.push_back(di);
    for (std::size_t j = 0; j < p; ++j) x.push_back(parse_real(fields[3 + j], header[3 + j], line_no));
  }
  if (ids.empty()) throw InputError("no data rows", line_no);

  const auto m = static_cast<Eigen::Index>(ids.size());
  Matrix xm(m, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < xm.cols(); ++j) xm(i, j) = x[static_cast<std::size_t>(i) * p + static_cast<std::size_t>(j)];
  }
  return AreaLevelDataset(Eigen::Map<Vector>(y.data(), m), Eigen::Map<Vector>(d.data(), m), std::move(xm), std::move(ids));
}

AreaLevelDataset ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path, 0);
  return parse_csv(in);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

void write_dataset_csv(std::ostream& out, const AreaLevelDataset& data) {
  out << "area_id,y,D";
  for (std::size_t j = 0; j < data.num_covariates(); ++j) out << ",x" << j + 1;
  out << '\n';
  for (std::size_t i = 0; i < data.num_areas(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << data.area_ids()[i] << ',' << format_double(data.y()[r]) << ',' << format_double(data.d()[r]);
    for (Eigen::Index j = 0; j < data.x().cols(); ++j) out << ',' << format_double(data.x()(r, j));
    out << '\n';
  }
}

AreaLevelDataset synthetic_saipe(const SyntheticConfig& cfg) {
  if (cfg.m < 7) throw DomainError("synthetic data needs m >= 7");
  if (cfg.beta.size() != 4) throw DomainError("synthetic beta must have 4 entries");
  if (!(cfg.A > 0.0) || !(cfg.d_min > 0.0) || !(cfg.d_max >= cfg.d_min)) {
    throw DomainError("synthetic data needs A > 0 and 0 < d_min <= d_max");
  }
  const Eigen::Index m = cfg.m;
  NormalStream covariates(cfg.seed, 0, 1);
  NormalStream effects(cfg.seed, 0, 2);
  Matrix x(m, 4);
  Vector d(m), y(m);
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < m; ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < 4; ++j) x(i, j) = covariates.normal();
    d[i] = cfg.d_min * std::pow(cfg.d_max / cfg.d_min, static_cast<double>(i) / static_cast<double>(m - 1));
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    double mean = 0.0;
    for (Eigen::Index j = 0; j < 4; ++j) mean += x(i, j) * cfg.beta[static_cast<std::size_t>(j)];
    const double theta = mean + std::sqrt(cfg.A) * effects.normal();
    y[i] = theta + std::sqrt(d[i]) * effects.normal();
    char id[16];
    std::snprintf(id, sizeof id, "S%02d", static_cast<int>(i + 1));
    ids.emplace_back(id);
  }
  return AreaLevelDataset(std::move(y), std::move(d), std::move(x), std::move(ids));
}

SimulationFile parse_simulation_config(std::istream& in) {
  SimulationFile file;
  auto& c = file.config;
  std::string line;
  std::size_t line_no = 0;
  bool have_seed = false;
  std::string d_pattern = "geometric";
  double d_min = verify::GeometricD{}.d_min, d_max = verify::GeometricD{}.d_max, d_balanced = 1.0;
  std::vector<double> d_values;
  std::optional<std::uint64_t> x_seed;
  std::set<std::string> keys_seen;

  auto reals = [&](const std::string& v, const std::string& key) {
    std::vector<double> out;
    for (const auto& f : split(v, ',')) out.push_back(parse_real(f, key, line_no));
    return out;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("line " + std::to_string(line_no) + ": expected key = value", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!keys_seen.insert(key).second) {
      throw InputError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'", line_no);
    }
    if (key == "study") {
      for (const auto& s : split(value, ',')) file.studies.push_back(trim(s));
    } else if (key == "m") {
      c.m = static_cast<int>(parse_integer(value, key, line_no));
    } else if (key == "p") {
      c.p = static_cast<int>(parse_integer(value, key, line_no));
    } else if (key == "true_beta") {
      c.true_beta = reals(value, key);
    } else if (key == "true_A") {
      c.true_A = parse_real(value, key, line_no);
    } else if (key == "d_pattern") {
      d_pattern = value;
    } else if (key == "d_min") {
      d_min = parse_real(value, key, line_no);
    } else if (key == "d_max") {
      d_max = parse_real(value, key, line_no);
    } else if (key == "d") {
      d_balanced = parse_real(value, key, line_no);
    } else if (key == "d_values") {
      d_values = reals(value, key);
    } else if (key == "x_design") {
      if (value == "intercept") {
        c.x_design = verify::InterceptOnly{};
      } else if (value == "uniform") {
        c.x_design = verify::RandomUniformDesign{};
      } else {
        throw InputError("line " + std::to_string(line_no) + ": x_design must be intercept or uniform", line_no);
      }
    } else if (key == "x_seed") {
      x_seed = static_cast<std::uint64_t>(parse_integer(value, key, line_no));
    } else if (key == "replications") {
      c.replications = static_cast<std::size_t>(parse_integer(value, key, line_no));
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_integer(value, key, line_no));
      have_seed = true;
    } else if (key == "m_ladder") {
      c.m_ladder.clear();
      for (const auto& f : split(value, ',')) c.m_ladder.push_back(static_cast<int>(parse_integer(f, key, line_no)));
    } else if (key == "adjustment_power") {
      c.adjustment_power = parse_real(value, key, line_no);
    } else if (key == "bootstrap_replicates") {
      c.bootstrap_replicates = static_cast<std::size_t>(parse_integer(value, key, line_no));
    } else if (key == "keep_records") {
      if (value != "true" && value != "false") {
        throw InputError("line " + std::to_string(line_no) + ": keep_records must be true or false", line_no);
      }
      c.keep_records = value == "true";
    } else {
      throw InputError("line " + std::to_string(line_no) + ": unknown key '" + key + "'", line_no);
    }
  }
  if (!have_seed) throw InputError("simulation config: seed is required", 0);
  if (file.studies.empty()) throw InputError("simulation config: study is required", 0);
  if (d_pattern == "geometric") {
    c.d_pattern = verify::GeometricD{d_min, d_max};
  } else if (d_pattern == "balanced") {
    c.d_pattern = verify::BalancedD{d_balanced};
  } else if (d_pattern == "explicit") {
    c.d_pattern = verify::ExplicitD{d_values};
  } else {
    throw InputError("simulation config: d_pattern must be geometric, balanced or explicit", 0);
  }
  if (auto* u = std::get_if<verify::RandomUniformDesign>(&c.x_design); u && x_seed) u->seed = *x_seed;
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw InputError(e.what(), 0);
  }
  return file;
}

SimulationFile read_simulation_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path, 0);
  return parse_simulation_config(in);
}

namespace {

nlohmann::ordered_json cell_json(const Cell& cell) {
  return std::visit(detail::overloaded{
                        [](const std::string& s) { return nlohmann::ordered_json(s); },
                        [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(); },
                        [](std::int64_t v) { return nlohmann::ordered_json(v); },
                    },
                    cell);
}

std::string cell_csv(const Cell& cell) {
  return std::visit(detail::overloaded{
                        [](const std::string& s) {
                          if (s.find_first_of(",\"\n") == std::string::npos) return s;
                          std::string q = "\"";
                          for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
                          return q + "\"";
                        },
                        [](double v) { return std::isfinite(v) ? format_double(v) : std::string(); },
                        [](std::int64_t v) { return std::to_string(v); },
                    },
                    cell);
}

}  // namespace

std::string render(const Report& report, Format format) {
  if (format == Format::json) {
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = report.command;
    j["config"] = report.config;
    for (const auto& [k, v] : report.extra.items()) j[k] = v;
    nlohmann::ordered_json tables = nlohmann::ordered_json::object();
    for (const auto& t : report.tables) {
      nlohmann::ordered_json rows = nlohmann::ordered_json::array();
      for (const auto& r : t.rows) {
        nlohmann::ordered_json row;
        for (std::size_t k = 0; k < t.columns.size(); ++k) row[t.columns[k]] = cell_json(r[k]);
        rows.push_back(std::move(row));
      }
      tables[t.name] = std::move(rows);
    }
    j["tables"] = std::move(tables);
    return j.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "# schema_version: " << kSchemaVersion << '\n';
  os << "# command: " << report.command << '\n';
  os << "# config: " << report.config.dump() << '\n';
  if (!report.extra.empty()) os << "# extra: " << report.extra.dump() << '\n';
  for (std::size_t t = 0; t < report.tables.size(); ++t) {
    const auto& table = report.tables[t];
    if (t > 0) os << '\n';
    os << "# table: " << table.name << '\n';
    for (std::size_t k = 0; k < table.columns.size(); ++k) os << (k ? "," : "") << table.columns[k];
    os << '\n';
    for (const auto& r : table.rows) {
      for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << cell_csv(r[k]);
      os << '\n';
    }
  }
  return os.str();
}

void write_report(const Report& report, Format format, const std::string& path) {
  const std::string text = render(report, format);
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path, 0);
  out << text;
  if (!out) throw InputError("failed writing " + path, 0);
}

}  // namespace fhmg::io
