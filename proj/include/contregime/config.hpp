#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "contregime/dgp.hpp"
#include "contregime/nuisance.hpp"
#include "contregime/regimes.hpp"

namespace contregime {

/// Nuisance provenance for one estimator: the outcome model feeds H, the
/// weights choice feeds the propensity and censoring models behind Q.
struct NuisancePlan {
  NuisanceChoice outcome;
  NuisanceChoice weights;
  std::string to_string() const;
};

struct ExperimentConfig {
  DgpSpec dgp;
  RegimeSpec regime;
  /// Number of decision intervals K on [0, tau].
  std::size_t decisions = 0;
  std::vector<std::size_t> k_schedule;
  std::size_t n = 1000;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::vector<std::string> estimators;
  std::map<std::string, NuisancePlan> nuisance;
  /// "auto" (exact enumeration when possible), "exact" or "simulate".
  std::string oracle_method = "auto";
  /// Counterfactual sample size for a simulated oracle; 0 means 10 n.
  std::size_t oracle_n = 0;
  Knob outcome_knob;
  Knob propensity_knob;
  double threshold_se = 3.0;
  double weight_cap = 0.0;
  std::filesystem::path output_dir = "out";
  /// Normalized echo of the input.
  nlohmann::json echo;

  Partition decision_grid() const;
  const NuisancePlan& plan(const std::string& estimator) const;
};

/// Validates and resolves every field; errors are ConfigError with the
/// offending field path.
ExperimentConfig parse_config(const nlohmann::json& j);

/// Reads TOML (".toml") or JSON (anything else).
nlohmann::json read_config_file(const std::filesystem::path& path);
ExperimentConfig load_config(const std::filesystem::path& path);

/// TOML text to the equivalent JSON value.
nlohmann::json toml_to_json(const std::string& text, const std::string& source = "config");

}  // namespace contregime
