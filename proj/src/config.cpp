#include "contregime/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "contregime/errors.hpp"

namespace contregime {

std::string NuisancePlan::to_string() const {
  const std::string o = outcome.to_string();
  const std::string w = weights.to_string();
  return o == w ? o : "outcome=" + o + ";weights=" + w;
}

Partition ExperimentConfig::decision_grid() const {
  return make_partition(dgp.fine_grid->horizon(), decisions);
}

const NuisancePlan& ExperimentConfig::plan(const std::string& estimator) const {
  static const NuisancePlan exact{};
  auto it = nuisance.find(estimator);
  return it == nuisance.end() ? exact : it->second;
}

namespace {

const std::vector<std::string> kEstimators{"gcomp", "ipw", "dr"};

std::size_t positive_count(const nlohmann::json& v, const std::string& path, bool allow_zero = false) {
  if (!v.is_number_integer() || v.get<long long>() < (allow_zero ? 0 : 1)) {
    throw ConfigError(path, allow_zero ? "expected a non-negative integer" : "expected a positive integer");
  }
  return v.get<std::size_t>();
}

NuisanceChoice choice(const nlohmann::json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected \"exact\", \"fitted\" or \"misspec:<knob>\"");
  try {
    return NuisanceChoice::parse(v.get<std::string>());
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
}

NuisancePlan plan_from_json(const nlohmann::json& v, const std::string& path) {
  if (v.is_string()) {
    const NuisanceChoice c = choice(v, path);
    return {c, c};
  }
  if (!v.is_object()) throw ConfigError(path, "expected a string or a table with outcome/weights");
  NuisancePlan p;
  for (const auto& [key, value] : v.items()) {
    if (key == "outcome") p.outcome = choice(value, path + ".outcome");
    else if (key == "weights") p.weights = choice(value, path + ".weights");
    else throw ConfigError(path + "." + key, "unknown field (expected outcome or weights)");
  }
  return p;
}

Knob knob(const nlohmann::json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a knob name");
  try {
    return Knob::parse(v.get<std::string>());
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config", "expected a table at the top level");
  ExperimentConfig cfg;
  if (!j.contains("dgp")) throw ConfigError("dgp", "missing dgp block");
  cfg.dgp = dgp_from_json(j["dgp"], "dgp");
  cfg.regime = j.contains("regime") ? regime_from_json(j["regime"], "regime") : null_regime();
  cfg.decisions = cfg.dgp.fine_grid->steps();

  for (const auto& [key, value] : j.items()) {
    if (key == "dgp" || key == "regime") continue;
    if (key == "decisions") {
      cfg.decisions = positive_count(value, key);
    } else if (key == "k_schedule") {
      if (!value.is_array() || value.empty()) throw ConfigError(key, "expected a non-empty array");
      for (std::size_t i = 0; i < value.size(); ++i) {
        cfg.k_schedule.push_back(positive_count(value[i], key + "[" + std::to_string(i) + "]"));
      }
      for (std::size_t i = 1; i < cfg.k_schedule.size(); ++i) {
        if (cfg.k_schedule[i] < cfg.k_schedule[i - 1]) throw ConfigError(key, "must not decrease");
      }
    } else if (key == "n") {
      cfg.n = positive_count(value, key);
    } else if (key == "replications") {
      cfg.replications = positive_count(value, key);
    } else if (key == "seed") {
      if (!value.is_number_integer() || value.get<long long>() < 0) throw ConfigError(key, "expected a non-negative integer");
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "threads") {
      cfg.threads = static_cast<unsigned>(positive_count(value, key, true));
    } else if (key == "estimators") {
      if (!value.is_array()) throw ConfigError(key, "expected an array of estimator names");
      for (std::size_t i = 0; i < value.size(); ++i) {
        const std::string p = key + "[" + std::to_string(i) + "]";
        if (!value[i].is_string()) throw ConfigError(p, "expected a string");
        const auto name = value[i].get<std::string>();
        if (std::find(kEstimators.begin(), kEstimators.end(), name) == kEstimators.end()) {
          throw ConfigError(p, "unknown estimator '" + name + "' (expected gcomp, ipw or dr)");
        }
        cfg.estimators.push_back(name);
      }
    } else if (key == "nuisance") {
      if (value.is_string()) {
        for (const auto& e : kEstimators) cfg.nuisance[e] = plan_from_json(value, key);
      } else if (value.is_object()) {
        for (const auto& [est, v] : value.items()) {
          if (std::find(kEstimators.begin(), kEstimators.end(), est) == kEstimators.end()) {
            throw ConfigError(key + "." + est, "unknown estimator");
          }
          cfg.nuisance[est] = plan_from_json(v, key + "." + est);
        }
      } else {
        throw ConfigError(key, "expected a string or a table keyed by estimator");
      }
    } else if (key == "oracle") {
      if (!value.is_object()) throw ConfigError(key, "expected a table");
      for (const auto& [k, v] : value.items()) {
        if (k == "method") {
          if (!v.is_string() || (v != "auto" && v != "exact" && v != "simulate")) {
            throw ConfigError("oracle.method", "expected \"auto\", \"exact\" or \"simulate\"");
          }
          cfg.oracle_method = v.get<std::string>();
        } else if (k == "n") {
          cfg.oracle_n = positive_count(v, "oracle.n");
        } else {
          throw ConfigError("oracle." + k, "unknown field");
        }
      }
    } else if (key == "dr_grid") {
      if (!value.is_object()) throw ConfigError(key, "expected a table");
      for (const auto& [k, v] : value.items()) {
        if (k == "outcome_knob") cfg.outcome_knob = knob(v, "dr_grid.outcome_knob");
        else if (k == "propensity_knob") cfg.propensity_knob = knob(v, "dr_grid.propensity_knob");
        else throw ConfigError("dr_grid." + k, "unknown field");
      }
    } else if (key == "threshold_se") {
      if (!value.is_number() || !(value.get<double>() > 0.0)) throw ConfigError(key, "expected a positive number");
      cfg.threshold_se = value.get<double>();
    } else if (key == "weight_cap") {
      if (!value.is_number() || value.get<double>() < 0.0) throw ConfigError(key, "expected a non-negative number");
      cfg.weight_cap = value.get<double>();
    } else if (key == "output") {
      if (!value.is_object()) throw ConfigError(key, "expected a table");
      for (const auto& [k, v] : value.items()) {
        if (k != "dir") throw ConfigError("output." + k, "unknown field");
        if (!v.is_string()) throw ConfigError("output.dir", "expected a string");
        cfg.output_dir = v.get<std::string>();
      }
    } else {
      throw ConfigError(key, "unknown field");
    }
  }
  try {
    (void)subgrid_indices(cfg.decision_grid(), *cfg.dgp.fine_grid);
  } catch (const InvalidArgument& e) {
    throw ConfigError("decisions", e.what());
  }
  for (std::size_t k : cfg.k_schedule) {
    try {
      (void)subgrid_indices(make_partition(cfg.dgp.fine_grid->horizon(), k), *cfg.dgp.fine_grid);
    } catch (const InvalidArgument& e) {
      throw ConfigError("k_schedule", "K = " + std::to_string(k) + ": " + e.what());
    }
  }

  nlohmann::json echo;
  echo["dgp"] = to_json(cfg.dgp);
  echo["regime"] = to_json(cfg.regime);
  echo["decisions"] = cfg.decisions;
  echo["k_schedule"] = cfg.k_schedule;
  echo["n"] = cfg.n;
  echo["replications"] = cfg.replications;
  echo["seed"] = cfg.seed;
  echo["estimators"] = cfg.estimators;
  for (const auto& e : cfg.estimators) {
    const NuisancePlan& p = cfg.plan(e);
    echo["nuisance"][e] = {{"outcome", p.outcome.to_string()}, {"weights", p.weights.to_string()}};
  }
  echo["oracle"] = {{"method", cfg.oracle_method}, {"n", cfg.oracle_n}};
  echo["dr_grid"] = {{"outcome_knob", cfg.outcome_knob.to_string()},
                     {"propensity_knob", cfg.propensity_knob.to_string()}};
  echo["threshold_se"] = cfg.threshold_se;
  echo["weight_cap"] = cfg.weight_cap;
  cfg.echo = std::move(echo);
  return cfg;
}

namespace {

nlohmann::json convert(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = convert(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : *a) out.push_back(convert(v));
    return out;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  throw ConfigError("config", "unsupported TOML value (dates and times are not accepted)");
}

}  // namespace

nlohmann::json toml_to_json(const std::string& text, const std::string& source) {
  try {
    return convert(toml::parse(text, source));
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(source, os.str());
  }
}

nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".toml") return toml_to_json(buf.str(), path.string());
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string(), e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_config_file(path)); }

}  // namespace contregime
