#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "contregime/config.hpp"
#include "contregime/estimators.hpp"
#include "contregime/oracle.hpp"

namespace contregime {

struct OracleValue {
  double value = 0.0;
  double se = 0.0;
  std::string method;
};

/// Exact enumeration when the instance allows it, otherwise a counterfactual
/// simulation with 10 n subjects (or oracle.n) whose se enters the thresholds.
OracleValue attach_oracle(const ExperimentConfig& cfg, const Partition& decisions);

struct ReplicationRow {
  std::size_t replication = 0;
  std::string estimator;
  std::string nuisance;
  Estimate estimate;
};

struct AggregateRow {
  std::string estimator;
  std::string nuisance;
  std::size_t replications = 0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double se_of_mean = 0.0;
  double rmse = 0.0;
  double threshold = 0.0;
  bool pass = true;
};

struct ReportBundle {
  OracleValue oracle;
  std::vector<ReplicationRow> rows;
  std::vector<AggregateRow> aggregates;
  nlohmann::json config;

  bool pass() const;
};

/// Aggregates of one estimator's replications against the oracle. With a
/// single replication the estimate's own se stands in for the se of the mean.
AggregateRow aggregate(const std::vector<const Estimate*>& reps, const OracleValue& oracle, double threshold_se);

ReportBundle run_experiment(const ExperimentConfig& cfg);
/// replications.csv, aggregates.csv and report.json.
void write_report(const ReportBundle& bundle, const std::filesystem::path& dir);

struct DrCell {
  bool outcome_correct = true;
  bool weights_correct = true;
  AggregateRow stats;
  bool expect_unbiased = true;
  bool unbiased = true;
  bool pass = true;
};

struct DrGrid {
  OracleValue oracle;
  std::vector<DrCell> cells;  // (H, Q) in order cc, wc, cw, ww
  bool pass() const;
};

/// 2 x 2 table of DR estimates with H and Q each correct or perturbed by the
/// configured knob. Throws ScopeError for regimes that depend on the observed
/// treatment law.
DrGrid dr_grid(const ExperimentConfig& cfg);
void write_dr_grid(const DrGrid& grid, const std::filesystem::path& dir);

struct DiagnosticRow {
  std::string battery;
  std::string check;
  double mean = 0.0;
  double se = 0.0;
  bool expect_zero = true;
  bool pass = true;
};

struct DiagnosticReport {
  std::vector<DiagnosticRow> rows;
  bool pass() const;
};

/// Estimating-equation residual batteries and weight martingale means on one
/// cohort. The gcomp battery uses H from the gcomp nuisance plan, the IPW
/// battery and martingale checks use Q from the ipw plan. An empty estimator
/// list gives an empty report.
DiagnosticReport diagnose(const ExperimentConfig& cfg);
void write_diagnostics(const DiagnosticReport& report, const std::filesystem::path& dir);

ConvergenceTable converge(const ExperimentConfig& cfg);
void write_convergence(const ConvergenceTable& table, const std::filesystem::path& dir);

/// Simulates the observed cohort of replication 0 and writes cohort.csv.
Cohort simulate(const ExperimentConfig& cfg);
void write_cohort(const Cohort& cohort, const std::filesystem::path& dir);

/// Seed of replication r.
std::uint64_t replication_seed(const ExperimentConfig& cfg, std::size_t r);

}  // namespace contregime
