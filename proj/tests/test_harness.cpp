#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "contregime/errors.hpp"
#include "contregime/harness.hpp"

using namespace contregime;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("contregime_unit_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::map<std::string, std::string>> read_table(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::map<std::string, std::string> row;
    for (const auto& h : header) {
      std::getline(ss, cell, ',');
      row[h] = cell;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

ExperimentConfig config(const char* text) { return parse_config(nlohmann::json::parse(text)); }

std::string config_error_path(const char* text) {
  try {
    (void)config(text);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<none>";
}

}  // namespace

TEST_CASE("config validation names the field") {
  CHECK(config_error_path(R"j({"regime":"null"})j") == "dgp");
  CHECK(config_error_path(R"j({"dgp":{"preset":"BIN3"},"regime":{"variant":"teleport"}})j") == "regime.variant");
  CHECK(config_error_path(R"j({"dgp":{"preset":"BIN3"},"regime":"teleport"})j") == "regime");
  CHECK(config_error_path(R"j({"dgp":{"preset":"BIN3"},"estimators":["gcomp","tmle"]})j") == "estimators[1]");
  CHECK(config_error_path(R"j({"dgp":{"preset":"BIN3"},"replications":0})j") == "replications");
  CHECK(config_error_path(R"j({"dgp":{"preset":"BIN3"},"nuisance":{"ipw":"guess"}})j") == "nuisance.ipw");
  CHECK(config_error_path(R"j({"dgp":{"preset":"BIN3"},"decisions":2})j") == "decisions");
  CHECK(config_error_path(R"j({"dgp":{"preset":"OU1"},"k_schedule":[8,4]})j") == "k_schedule");
  CHECK(config_error_path(R"j({"dgp":{"preset":"BIN3"},"colour":"blue"})j") == "colour");
  CHECK(config_error_path(R"j({"dgp":{"preset":"BIN3"},"oracle":{"method":"guess"}})j") == "oracle.method");
  CHECK(config_error_path(R"j({"dgp":{"preset":"BIN3"},"dr_grid":{"outcome_knob":"wiggle"}})j") ==
        "dr_grid.outcome_knob");
}

TEST_CASE("TOML and JSON configs agree") {
  const std::string toml = R"j(
seed = 5
n = 300
decisions = 3
estimators = ["ipw"]

[dgp]
preset = "CENS3"

[regime]
variant = "incremental"
multiplier = 2.0

[nuisance.ipw]
outcome = "exact"
weights = "fitted"
)j";
  const ExperimentConfig a = parse_config(toml_to_json(toml));
  const ExperimentConfig b = config(R"j({"seed":5,"n":300,"decisions":3,"estimators":["ipw"],
    "dgp":{"preset":"CENS3"},"regime":{"variant":"incremental","multiplier":2.0},
    "nuisance":{"ipw":{"outcome":"exact","weights":"fitted"}}})j");
  CHECK(a.echo == b.echo);
  CHECK(a.plan("ipw").weights.provenance == Provenance::fitted);
  CHECK(a.plan("gcomp").weights.provenance == Provenance::exact);
  CHECK_THROWS_AS(toml_to_json("seed = = 3"), ConfigError);
}

TEST_CASE("replicated IPW against the exact oracle") {
  const ExperimentConfig cfg = config(R"j({"dgp":{"preset":"BIN3"},"regime":"always_treat","decisions":3,
    "n":2000,"replications":200,"seed":9,"estimators":["ipw"]})j");
  const ReportBundle bundle = run_experiment(cfg);
  CHECK(bundle.oracle.method == "enumerate_exact");
  CHECK(bundle.oracle.value == doctest::Approx(0.7085).epsilon(1e-12));
  REQUIRE(bundle.aggregates.size() == 1);
  CHECK(std::abs(bundle.aggregates[0].bias) <= 3.0 * bundle.aggregates[0].se_of_mean);
  CHECK(bundle.rows.size() == 200);
}

TEST_CASE("null regime reports no bias for any estimator") {
  const ExperimentConfig cfg = config(R"j({"dgp":{"preset":"CENS3"},"regime":"null","decisions":3,
    "n":5000,"replications":20,"seed":4,"estimators":["gcomp","ipw","dr"],
    "nuisance":{"gcomp":"fitted","ipw":"exact","dr":"fitted"}})j");
  const ReportBundle bundle = run_experiment(cfg);
  CHECK(bundle.aggregates.size() == 3);
  CHECK(bundle.pass());
}

TEST_CASE("aggregates recompute from the replication table") {
  const fs::path dir = scratch("aggregates");
  ExperimentConfig cfg = config(R"j({"dgp":{"preset":"BIN3"},"regime":"always_treat","decisions":3,
    "n":1000,"replications":25,"seed":12,"estimators":["gcomp","ipw","dr"],
    "nuisance":{"gcomp":"fitted","ipw":"exact","dr":{"outcome":"fitted","weights":"exact"}}})j");
  write_report(run_experiment(cfg), dir);

  const auto reps = read_table(dir / "replications.csv");
  const auto aggs = read_table(dir / "aggregates.csv");
  REQUIRE(aggs.size() == 3);
  for (const auto& a : aggs) {
    const double oracle = std::stod(a.at("oracle"));
    std::vector<double> pts;
    for (const auto& r : reps) {
      if (r.at("estimator") == a.at("estimator")) pts.push_back(std::stod(r.at("point")));
    }
    REQUIRE(pts.size() == 25);
    double s = 0.0, sq = 0.0;
    for (double p : pts) {
      s += p;
      sq += (p - oracle) * (p - oracle);
    }
    const double mean = s / 25.0;
    double ss = 0.0;
    for (double p : pts) ss += (p - mean) * (p - mean);
    const double sd = std::sqrt(ss / 24.0);
    CHECK(std::abs(mean - std::stod(a.at("mean"))) <= 1e-12);
    CHECK(std::abs(mean - oracle - std::stod(a.at("bias"))) <= 1e-12);
    CHECK(std::abs(sd - std::stod(a.at("sd"))) <= 1e-12);
    CHECK(std::abs(sd / 5.0 - std::stod(a.at("se_of_mean"))) <= 1e-12);
    CHECK(std::abs(std::sqrt(sq / 25.0) - std::stod(a.at("rmse"))) <= 1e-12);
  }
  CHECK(fs::exists(dir / "report.json"));
  fs::remove_all(dir);
}

TEST_CASE("reruns reproduce every file byte for byte") {
  const char* text = R"j({"dgp":{"preset":"CENS3"},"regime":"always_treat","decisions":3,
    "n":800,"replications":6,"seed":21,"estimators":["gcomp","ipw","dr"],"nuisance":"fitted",
    "dr_grid":{"outcome_knob":"transition_shift(0.15)","propensity_knob":"propensity_drop_covariate"}})j";
  const auto produce = [&](unsigned threads, const fs::path& dir) {
    ExperimentConfig cfg = config(text);
    cfg.threads = threads;
    write_report(run_experiment(cfg), dir);
    write_dr_grid(dr_grid(cfg), dir);
    write_diagnostics(diagnose(cfg), dir);
    write_cohort(simulate(cfg), dir);
  };
  const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
  produce(1, a);
  produce(4, b);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    INFO(entry.path().filename().string());
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
    ++files;
  }
  CHECK(files == 6);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("double robustness grid") {
  SUBCASE("identity knobs leave every cell unbiased") {
    const ExperimentConfig cfg = config(R"j({"dgp":{"preset":"BIN3"},"regime":"always_treat","decisions":3,
      "n":2000,"replications":30,"seed":3,"dr_grid":{"outcome_knob":"identity","propensity_knob":"identity"}})j");
    const DrGrid g = dr_grid(cfg);
    REQUIRE(g.cells.size() == 4);
    for (const auto& c : g.cells) CHECK(c.unbiased);
  }
  SUBCASE("dependent regimes are out of scope") {
    const ExperimentConfig cfg = config(R"j({"dgp":{"preset":"OU1"},"regime":{"variant":"shift","delta":0.5},
      "decisions":4,"n":100,"replications":2,"seed":3})j");
    CHECK_THROWS_AS(dr_grid(cfg), ScopeError);
  }
}

TEST_CASE("diagnostics") {
  SUBCASE("empty estimator list") {
    const ExperimentConfig cfg = config(R"j({"dgp":{"preset":"BIN3"},"regime":"always_treat","estimators":[]})j");
    CHECK(diagnose(cfg).rows.empty());
    CHECK(diagnose(cfg).pass());
  }
  SUBCASE("exact nuisances pass") {
    const ExperimentConfig cfg = config(R"j({"dgp":{"preset":"BIN3"},"regime":"always_treat","decisions":3,
      "n":50000,"seed":17,"estimators":["gcomp","ipw"]})j");
    const DiagnosticReport r = diagnose(cfg);
    CHECK(r.pass());
    std::size_t detections = 0;
    for (const auto& row : r.rows) detections += row.expect_zero ? 0 : 1;
    CHECK(detections == 2);
  }
  SUBCASE("a wrong propensity breaks the IPW battery only") {
    const ExperimentConfig cfg = config(R"j({"dgp":{"preset":"BIN3"},"regime":"always_treat","decisions":3,
      "n":50000,"seed":17,"estimators":["gcomp","ipw"],
      "nuisance":{"gcomp":"exact","ipw":"misspec:propensity_drop_covariate"}})j");
    const DiagnosticReport r = diagnose(cfg);
    bool ipw_failed = false;
    for (const auto& row : r.rows) {
      if (row.battery == "ee_ipw" && !row.pass) ipw_failed = true;
      if (row.battery == "ee_gcomp") CHECK(row.pass);
    }
    CHECK(ipw_failed);
  }
}

TEST_CASE("simulated oracle widens the threshold") {
  const ExperimentConfig cfg = config(R"j({"dgp":{"preset":"OU1"},"regime":{"variant":"shift","delta":0.5},
    "decisions":4,"n":2000,"replications":3,"seed":8,"estimators":["gcomp"]})j");
  const OracleValue o = attach_oracle(cfg, cfg.decision_grid());
  CHECK(o.method.rfind("simulate_counterfactual", 0) == 0);
  CHECK(o.se > 0.0);
  const ReportBundle b = run_experiment(cfg);
  CHECK(b.aggregates[0].threshold >= 3.0 * o.se);
}
