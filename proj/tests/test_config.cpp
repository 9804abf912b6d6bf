#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rsmc/config.hpp"
#include "rsmc/csv_io.hpp"
#include "rsmc/errors.hpp"

using namespace rsmc;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("minimal configuration falls back to experiment defaults") {
  const auto c = parse_config("schema_version: 1\nexperiment: tan\n");
  CHECK(c.experiment == ExperimentKind::TAN);
  CHECK(c.filters.size() == 4);
  CHECK(c.simulator.obs_variance == 400.0);
  CHECK(c.data_seed == 20200);
}

TEST_CASE("full configuration") {
  const std::string text = R"(schema_version: 1
experiment: wiener_velocity
runs: 3
base_seed: 99
output_dir: results
medae: single
simulator:
  steps: 50
  contamination: {type: student_t, probability: 0.2, scale: 5, dof: 2}
filters:
  - {name: k, type: kalman}
  - {type: apf, beta: 0.1, particles: 64, resampling: systematic, backend: reference, integral: full}
beta_selection:
  grid: [0.01, 0.1]
  runs: 2
  filter: {type: bpf, particles: 32}
)";
  const auto c = parse_config(text);
  CHECK(c.runs == 3);
  CHECK(c.base_seed == 99);
  CHECK(c.medae == MedaeMode::SingleDraw);
  CHECK(c.simulator.steps == 50);
  const auto* t = std::get_if<AdditiveStudentT>(&c.simulator.contamination);
  REQUIRE(t != nullptr);
  CHECK(t->dof == 2.0);
  REQUIRE(c.filters.size() == 2);
  CHECK(c.filters[1].type == FilterType::Auxiliary);
  CHECK(c.filters[1].spec.kind == FilterKind::Auxiliary);
  CHECK(c.filters[1].spec.particles == 64);
  CHECK(c.filters[1].spec.resampling == ResamplingScheme::Systematic);
  CHECK(c.filters[1].spec.backend == Backend::Reference);
  CHECK(c.filters[1].integral_mode == IntegralMode::Full);
  CHECK(!c.filters[1].name.empty());
  REQUIRE(c.beta_selection.has_value());
  CHECK(c.beta_selection->config.grid.size() == 2);
}

TEST_CASE("errors carry the offending line") {
  const auto unknown = error_of("schema_version: 1\nexperiment: tan\nsimulator:\n  stepz: 4\n");
  CHECK(unknown.find("cfg.yaml:4:") != std::string::npos);
  CHECK(unknown.find("stepz") != std::string::npos);

  CHECK(error_of("schema_version: 2\nexperiment: tan\n").find("schema_version") != std::string::npos);
  CHECK(error_of("experiment: tan\n").find("schema_version") != std::string::npos);
  CHECK(error_of("schema_version: 1\nexperiment: moon\n").find("cfg.yaml:2:") != std::string::npos);
  CHECK(error_of("schema_version: 1\nexperiment: tan\nruns: 0\n") != "");
  CHECK(error_of("schema_version: 1\nexperiment: tan\nruns: many\n").find("cfg.yaml:3:") != std::string::npos);
  CHECK(error_of("schema_version: 1\nexperiment: tan\nfilters:\n  - {name: a, type: bpf}\n  - {name: a, type: apf}\n")
            .find("duplicate") != std::string::npos);
  CHECK(error_of("schema_version: 1\nexperiment: tan\nfilters:\n  - {type: bpf, beta: 1.5}\n") != "");
  CHECK(error_of("schema_version: 1\nexperiment: tan\nsimulator: {contamination: {type: gaussian, probability: 2}}\n")
            .find("probability") != std::string::npos);
  CHECK(error_of("schema_version: 1\nexperiment: [tan\n").find("cfg.yaml:") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/x.yaml"), ConfigError);
}

TEST_CASE("version string") {
  CHECK(std::string(library_version()) == "0.1.0");
}

TEST_CASE("shipped configurations parse") {
  for (const char* name : {"wiener.yaml", "asymmetric_wiener.yaml", "tan.yaml", "gp.yaml"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(std::filesystem::path(RSMC_SOURCE_DIR) / "configs" / name));
  }
}

TEST_CASE("sensor CSV parsing") {
  ColumnMap cols;
  cols.value = "v";
  const auto s = parse_sensor_csv("t,v\n0,1\n1,2\n", cols);
  CHECK(s.size() == 2);
  CHECK(s.values[1] == 2.0);

  const auto m = parse_sensor_csv("t,v,truth\n0,1,0.5\n1,NA,0.7\n2,,1\n3,nan,2\n", {"t", "v", "truth"});
  CHECK(m.missing == std::vector<bool>{false, true, true, true});
  CHECK(std::isnan(m.values[1]));
  CHECK(m.truth[1] == 0.7);

  try {
    parse_sensor_csv("t,v\n0,1\n2,2\n1,3\n", cols, "s.csv");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("row 4") != std::string::npos);
  }
  try {
    parse_sensor_csv("t,v\n0,1\n1,abc\n", cols, "s.csv");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("row 3, column 'v'") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_sensor_csv("t,w\n0,1\n", cols), ConfigError);
  CHECK_THROWS_AS(parse_sensor_csv("t,v\n", cols), ConfigError);
  CHECK_THROWS_AS(parse_sensor_csv("t,v\n0,1,2\n", cols), ConfigError);
  CHECK_THROWS_AS(parse_sensor_csv("t,v\n,1\n", cols), ConfigError);
}

TEST_CASE("CSV writing round-trips doubles") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125}) CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(std::nan("")) == "nan");
  std::ostringstream os;
  CsvWriter w(os);
  w.field("a,b").field(1.5).field(std::size_t{3});
  w.end_row();
  CHECK(os.str() == "\"a,b\",1.5,3\n");
}

}
