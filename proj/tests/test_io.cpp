#include <doctest.h>

#include <charconv>
#include <sstream>

#include "fhmg/errors.hpp"
#include "fhmg/io.hpp"
#include "fhmg/random.hpp"

using namespace fhmg;
using namespace fhmg::io;

namespace {

std::size_t error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    (void)parse_csv(in);
  } catch (const InputError& e) {
    return e.line();
  }
  FAIL("expected an input error");
  return 0;
}

std::string error_message(const std::string& text) {
  std::istringstream in(text);
  try {
    (void)parse_csv(in);
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("a 51-row file round-trips through the CSV format") {
    SyntheticConfig cfg;
    cfg.seed = 3;
    const auto data = synthetic_saipe(cfg);
    std::ostringstream out;
    write_dataset_csv(out, data);
    std::istringstream in(out.str());
    const auto back = parse_csv(in);
    CHECK(back.num_areas() == 51);
    CHECK(back.num_covariates() == 4);
    CHECK(back.y() == data.y());
    CHECK(back.d() == data.d());
    CHECK(back.x() == data.x());
    CHECK(back.area_ids() == data.area_ids());
    CHECK(back.area_ids().front() == "S01");
  }

  TEST_CASE("synthetic data is log-spaced and reproducible") {
    SyntheticConfig cfg;
    cfg.seed = 9;
    const auto a = synthetic_saipe(cfg);
    const auto b = synthetic_saipe(cfg);
    CHECK(a.y() == b.y());
    CHECK(a.d()[0] == doctest::Approx(0.5));
    CHECK(a.d()[50] == doctest::Approx(8.0));
    CHECK(a.d()[25] == doctest::Approx(2.0));
  }

  TEST_CASE("malformed input is reported with line numbers") {
    CHECK(error_message("") == "no data rows");
    CHECK(error_message("area_id,y,D,x1\n") == "no data rows");
    CHECK(error_line("area_id,y,D,x1\na,1,1,1\nb,,1,1\n") == 3);
    CHECK(error_message("area_id,y,D,x1\na,1,1,1\nb,,1,1\n").find("column y") != std::string::npos);
    CHECK(error_line("area_id,y,D,x1\na,1,1,1\nb,2,0,1\n") == 3);
    CHECK(error_line("area_id,y,D,x1\na,1,1,1\nb,2,-1,1\n") == 3);
    CHECK(error_line("area_id,y,D,x1\na,1,1,1\nc,1,1,1\na,2,1,1\n") == 4);
    CHECK(error_line("area_id,y,D,x1\na,1,1\n") == 2);
    CHECK(error_line("area_id,y,D,x1\na,1,1,abc\n") == 2);
    CHECK(error_line("area_id,y,D,x1\na,1,1,1e999\n") == 2);
    CHECK(error_line("id,y,D,x1\na,1,1,1\n") == 1);
    CHECK(error_line("area_id,y,D,x2\na,1,1,1\n") == 1);
    CHECK(error_line("area_id,y,D\na,1,1\n") == 1);
  }

  TEST_CASE("CRLF line endings and blank lines are accepted") {
    std::istringstream in("area_id,y,D,x1\r\na,1.5,2,1\r\n\r\nb,-3,0.25,1\r\nc,4,1,1\r\nd,0,1,1\r\n");
    const auto data = parse_csv(in);
    CHECK(data.num_areas() == 4);
    CHECK(data.y()[1] == -3.0);
    CHECK(data.d()[1] == 0.25);
  }

  TEST_CASE("format_double is the shortest round-trip representation") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(-2.5e-300) == "-2.5e-300");
    NormalStream rng(1, 0);
    for (int k = 0; k < 10000; ++k) {
      const double v = rng.normal() * std::pow(10.0, 20.0 * rng.normal());
      const std::string s = format_double(v);
      double back = 0.0;
      std::from_chars(s.data(), s.data() + s.size(), back);
      CHECK(back == v);
    }
  }

  TEST_CASE("simulation config parsing") {
    std::istringstream good(
        "# study setup\n"
        "study = theorem1, bias\n"
        "m = 30\n"
        "p = 2\n"
        "true_beta = 1, 0.5\n"
        "x_design = uniform\n"
        "x_seed = 4\n"
        "d_pattern = geometric\n"
        "d_min = 0.25\n"
        "d_max = 4\n"
        "m_ladder = 25, 50\n"
        "replications = 600\n"
        "seed = 99  # trailing comment\n");
    const auto file = parse_simulation_config(good);
    CHECK(file.studies == std::vector<std::string>{"theorem1", "bias"});
    CHECK(file.config.m == 30);
    CHECK(file.config.p == 2);
    CHECK(file.config.seed == 99);
    CHECK(file.config.m_ladder == std::vector<int>{25, 50});
    CHECK(std::get<verify::RandomUniformDesign>(file.config.x_design).seed == 4);
    CHECK(std::get<verify::GeometricD>(file.config.d_pattern).d_min == 0.25);

    std::istringstream unknown("study = bias\nseed = 1\nfoo = 2\n");
    try {
      (void)parse_simulation_config(unknown);
      FAIL("expected an input error");
    } catch (const InputError& e) {
      CHECK(e.line() == 3);
    }
    std::istringstream no_seed("study = bias\n");
    CHECK_THROWS_AS(parse_simulation_config(no_seed), InputError);
    std::istringstream invalid("study = bias\nseed = 1\nm = 3\n");
    CHECK_THROWS_AS(parse_simulation_config(invalid), InputError);
    std::istringstream dup("study = bias\nseed = 1\nseed = 2\n");
    CHECK_THROWS_AS(parse_simulation_config(dup), InputError);
  }

  TEST_CASE("JSON and CSV reports carry identical values") {
    Report r;
    r.command = "fit";
    r.config = {{"seed", 5}};
    r.tables.push_back(Table{"t", {"id", "value", "count"}, {}});
    NormalStream rng(2, 0);
    std::vector<double> values;
    for (int k = 0; k < 50; ++k) {
      values.push_back(rng.normal() / 3.0);
      r.tables[0].rows.push_back({std::string("a,") + std::to_string(k), values.back(), std::int64_t{k}});
    }
    const auto json = nlohmann::json::parse(render(r, Format::json));
    CHECK(json["schema_version"] == kSchemaVersion);
    CHECK(json["config"]["seed"] == 5);
    const std::string csv = render(r, Format::csv);
    CHECK(csv.find("# schema_version: 1") == 0);
    std::istringstream in(csv);
    std::string line;
    int row = -1;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (row++ < 0) {
        CHECK(line == "id,value,count");
        continue;
      }
      const auto close = line.find("\",");
      const std::string value = line.substr(close + 2, line.find(',', close + 2) - close - 2);
      double parsed = 0.0;
      std::from_chars(value.data(), value.data() + value.size(), parsed);
      CHECK(parsed == values[static_cast<std::size_t>(row - 1)]);
      CHECK(json["tables"]["t"][row - 1]["value"].get<double>() == parsed);
    }
    CHECK(row == 50);
  }
}
