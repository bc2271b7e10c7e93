#include "contregime/harness.hpp"

#include <cmath>
#include <fstream>
#include <optional>

#include "contregime/errors.hpp"
#include "contregime/format.hpp"

namespace contregime {

namespace {

// Slack for comparisons against a zero-se reference (exact oracle, exact
// g-computation), where only rounding separates the two numbers.
constexpr double kRoundingFloor = 1e-10;

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw ResourceError("cannot write " + (dir / name).string());
  return out;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& dir, const std::string& name) {
  auto out = open_output(dir, name);
  out << j.dump(2) << '\n';
}

const char* flag(bool b) { return b ? "true" : "false"; }

std::string diag_cell(const Estimate& e, const char* key) {
  auto it = e.diagnostics.find(key);
  return it == e.diagnostics.end() ? "" : format_double(it->second);
}

bool uses_cohort(const NuisancePlan& p) {
  return p.outcome.provenance == Provenance::fitted || p.weights.provenance == Provenance::fitted;
}

}  // namespace

std::uint64_t replication_seed(const ExperimentConfig& cfg, std::size_t r) { return derive_seed(cfg.seed, r); }

OracleValue attach_oracle(const ExperimentConfig& cfg, const Partition& decisions) {
  if (cfg.oracle_method != "simulate") {
    try {
      return {enumerate_exact(cfg.dgp, cfg.regime, decisions), 0.0, "enumerate_exact"};
    } catch (const UnsupportedError&) {
      if (cfg.oracle_method == "exact") throw;
    }
  }
  const std::size_t n = cfg.oracle_n ? cfg.oracle_n : 10 * cfg.n;
  const MonteCarlo mc =
      simulate_counterfactual(cfg.dgp, cfg.regime, decisions, n, derive_seed(cfg.seed ^ 0x6f7261636c65ull, 0), cfg.threads);
  return {mc.mean, mc.se, "simulate_counterfactual(n=" + std::to_string(n) + ")"};
}

AggregateRow aggregate(const std::vector<const Estimate*>& reps, const OracleValue& oracle, double threshold_se) {
  AggregateRow row;
  row.replications = reps.size();
  if (reps.empty()) return row;
  const auto r = static_cast<double>(reps.size());
  double sum = 0.0, sq = 0.0;
  for (const Estimate* e : reps) {
    sum += e->point;
    sq += (e->point - oracle.value) * (e->point - oracle.value);
  }
  row.mean = sum / r;
  row.bias = row.mean - oracle.value;
  row.rmse = std::sqrt(sq / r);
  if (reps.size() > 1) {
    double ss = 0.0;
    for (const Estimate* e : reps) ss += (e->point - row.mean) * (e->point - row.mean);
    row.sd = std::sqrt(ss / (r - 1.0));
    row.se_of_mean = row.sd / std::sqrt(r);
  } else {
    row.sd = reps.front()->se;
    row.se_of_mean = reps.front()->se;
  }
  row.threshold = threshold_se * std::hypot(row.se_of_mean, oracle.se) + kRoundingFloor;
  row.pass = std::abs(row.bias) <= row.threshold;
  return row;
}

bool ReportBundle::pass() const {
  for (const auto& a : aggregates) {
    if (!a.pass) return false;
  }
  return true;
}

ReportBundle run_experiment(const ExperimentConfig& cfg) {
  const Partition decisions = cfg.decision_grid();
  ReportBundle bundle;
  bundle.config = cfg.echo;
  bundle.oracle = attach_oracle(cfg, decisions);
  const WeightOptions wopt{cfg.threads, cfg.weight_cap};

  // value processes that do not read the cohort are built once
  std::map<std::string, ValueProcess> fixed_h;
  for (const auto& est : cfg.estimators) {
    const NuisancePlan& plan = cfg.plan(est);
    if (est != "ipw" && !uses_cohort(plan)) {
      const NuisanceSet nuis = make_nuisances(cfg.dgp, plan.outcome, plan.weights, decisions);
      fixed_h.emplace(est, build_H(nuis, cfg.regime, decisions, nullptr, cfg.threads));
    }
  }

  for (std::size_t r = 0; r < cfg.replications; ++r) {
    const Cohort cohort = simulate_observed(cfg.dgp, decisions, cfg.n, replication_seed(cfg, r), cfg.threads);
    for (const auto& est : cfg.estimators) {
      const NuisancePlan& plan = cfg.plan(est);
      const NuisanceSet nuis = make_nuisances(cfg.dgp, plan.outcome, plan.weights, decisions, &cohort);
      auto value_process = [&]() {
        auto it = fixed_h.find(est);
        return it != fixed_h.end() ? it->second : build_H(nuis, cfg.regime, decisions, &cohort, cfg.threads);
      };
      Estimate e;
      if (est == "ipw") {
        e = ipw_estimate(build_Q(nuis, cfg.regime, decisions, cohort, wopt), cohort);
      } else if (est == "dr") {
        const ValueProcess H = value_process();
        e = dr_estimate(H, build_Q(nuis, cfg.regime, decisions, cohort, wopt), cfg.regime, nuis, decisions, cohort,
                        cfg.threads);
      } else {
        const ValueProcess H = value_process();
        std::optional<WeightProcess> Q;
        if (!H.initial && !cfg.regime.depends_on_actual()) {
          try {
            Q = build_Q(nuis, cfg.regime, decisions, cohort, wopt);
          } catch (const PositivityError&) {
            // no weights: baseline-averaging se
          }
        }
        e = gcomp_estimate(H, nuis, cfg.regime, decisions, cohort, Q ? &*Q : nullptr, cfg.threads);
      }
      bundle.rows.push_back({r, est, plan.to_string(), std::move(e)});
    }
  }

  for (const auto& est : cfg.estimators) {
    std::vector<const Estimate*> reps;
    for (const auto& row : bundle.rows) {
      if (row.estimator == est) reps.push_back(&row.estimate);
    }
    AggregateRow agg = aggregate(reps, bundle.oracle, cfg.threshold_se);
    agg.estimator = est;
    agg.nuisance = cfg.plan(est).to_string();
    bundle.aggregates.push_back(std::move(agg));
  }
  return bundle;
}

void write_report(const ReportBundle& bundle, const std::filesystem::path& dir) {
  {
    auto out = open_output(dir, "replications.csv");
    out << "replication,estimator,nuisance,point,se,n,K,ess,max_weight,zero_weight_share,capped\n";
    for (const auto& row : bundle.rows) {
      const Estimate& e = row.estimate;
      out << row.replication << ',' << row.estimator << ',' << row.nuisance << ',' << format_double(e.point) << ','
          << format_double(e.se) << ',' << e.n << ',' << e.K << ',' << diag_cell(e, "ess") << ','
          << diag_cell(e, "max_weight") << ',' << diag_cell(e, "zero_weight_share") << ',' << diag_cell(e, "capped")
          << '\n';
    }
  }
  {
    auto out = open_output(dir, "aggregates.csv");
    out << "estimator,nuisance,replications,oracle,oracle_se,mean,bias,sd,se_of_mean,rmse,threshold,pass\n";
    for (const auto& a : bundle.aggregates) {
      out << a.estimator << ',' << a.nuisance << ',' << a.replications << ',' << format_double(bundle.oracle.value)
          << ',' << format_double(bundle.oracle.se) << ',' << format_double(a.mean) << ',' << format_double(a.bias)
          << ',' << format_double(a.sd) << ',' << format_double(a.se_of_mean) << ',' << format_double(a.rmse) << ','
          << format_double(a.threshold) << ',' << flag(a.pass) << '\n';
    }
  }
  nlohmann::json j;
  j["config"] = bundle.config;
  j["oracle"] = {{"value", bundle.oracle.value}, {"se", bundle.oracle.se}, {"method", bundle.oracle.method}};
  bool capped = false;
  for (const auto& row : bundle.rows) {
    auto it = row.estimate.diagnostics.find("capped");
    if (it != row.estimate.diagnostics.end() && it->second > 0.0) capped = true;
  }
  j["protocol_deviation_weight_cap"] = capped;
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : bundle.aggregates) {
    j["aggregates"].push_back({{"estimator", a.estimator},
                               {"nuisance", a.nuisance},
                               {"replications", a.replications},
                               {"mean", a.mean},
                               {"bias", a.bias},
                               {"sd", a.sd},
                               {"se_of_mean", a.se_of_mean},
                               {"rmse", a.rmse},
                               {"threshold", a.threshold},
                               {"pass", a.pass}});
  }
  j["pass"] = bundle.pass();
  write_json(j, dir, "report.json");
}

bool DrGrid::pass() const {
  for (const auto& c : cells) {
    if (!c.pass) return false;
  }
  return true;
}

DrGrid dr_grid(const ExperimentConfig& cfg) {
  if (cfg.regime.depends_on_actual()) {
    throw ScopeError("dr-grid needs a prespecified regime; " + cfg.regime.describe() +
                     " depends on the observed treatment law");
  }
  const Partition decisions = cfg.decision_grid();
  DrGrid grid;
  grid.oracle = attach_oracle(cfg, decisions);
  const NuisanceChoice correct{};
  const NuisanceChoice wrong_h{Provenance::misspecified, cfg.outcome_knob};
  const NuisanceChoice wrong_q{Provenance::misspecified, cfg.propensity_knob};
  // H is tied to its own outcome model; the weights side stays exact there
  const NuisanceSet nuis_h[2] = {make_nuisances(cfg.dgp, correct, correct, decisions),
                                 make_nuisances(cfg.dgp, wrong_h, correct, decisions)};
  const NuisanceSet nuis_q[2] = {make_nuisances(cfg.dgp, correct, correct, decisions),
                                 make_nuisances(cfg.dgp, correct, wrong_q, decisions)};
  const ValueProcess H[2] = {build_H(nuis_h[0], cfg.regime, decisions, nullptr, cfg.threads),
                             build_H(nuis_h[1], cfg.regime, decisions, nullptr, cfg.threads)};
  const WeightOptions wopt{cfg.threads, cfg.weight_cap};

  std::vector<Estimate> est[4];
  for (std::size_t r = 0; r < cfg.replications; ++r) {
    const Cohort cohort = simulate_observed(cfg.dgp, decisions, cfg.n, replication_seed(cfg, r), cfg.threads);
    const WeightProcess Q[2] = {build_Q(nuis_q[0], cfg.regime, decisions, cohort, wopt),
                                build_Q(nuis_q[1], cfg.regime, decisions, cohort, wopt)};
    for (int cell = 0; cell < 4; ++cell) {
      const int h = cell % 2, q = cell / 2;
      est[cell].push_back(dr_estimate(H[h], Q[q], cfg.regime, nuis_h[h], decisions, cohort, cfg.threads));
    }
  }
  const bool identity = cfg.outcome_knob.kind == Knob::Kind::identity || cfg.propensity_knob.kind == Knob::Kind::identity;
  for (int cell = 0; cell < 4; ++cell) {
    DrCell c;
    c.outcome_correct = cell % 2 == 0;
    c.weights_correct = cell / 2 == 0;
    std::vector<const Estimate*> reps;
    for (const auto& e : est[cell]) reps.push_back(&e);
    c.stats = aggregate(reps, grid.oracle, cfg.threshold_se);
    c.stats.estimator = "dr";
    c.stats.nuisance = std::string("H=") + (c.outcome_correct ? "exact" : wrong_h.to_string()) +
                       ";Q=" + (c.weights_correct ? "exact" : wrong_q.to_string());
    c.unbiased = c.stats.pass;
    c.expect_unbiased = c.outcome_correct || c.weights_correct || identity;
    c.pass = c.unbiased == c.expect_unbiased;
    grid.cells.push_back(std::move(c));
  }
  return grid;
}

void write_dr_grid(const DrGrid& grid, const std::filesystem::path& dir) {
  auto out = open_output(dir, "dr_grid.csv");
  out << "outcome_model,weight_model,replications,oracle,mean,bias,se_of_mean,threshold,unbiased,expected_unbiased,pass\n";
  for (const auto& c : grid.cells) {
    out << (c.outcome_correct ? "correct" : "wrong") << ',' << (c.weights_correct ? "correct" : "wrong") << ','
        << c.stats.replications << ',' << format_double(grid.oracle.value) << ',' << format_double(c.stats.mean) << ','
        << format_double(c.stats.bias) << ',' << format_double(c.stats.se_of_mean) << ','
        << format_double(c.stats.threshold) << ',' << flag(c.unbiased) << ',' << flag(c.expect_unbiased) << ','
        << flag(c.pass) << '\n';
  }
}

bool DiagnosticReport::pass() const {
  for (const auto& r : rows) {
    if (!r.pass) return false;
  }
  return true;
}

DiagnosticReport diagnose(const ExperimentConfig& cfg) {
  DiagnosticReport report;
  if (cfg.estimators.empty()) return report;
  auto listed = [&](const char* name) {
    return std::find(cfg.estimators.begin(), cfg.estimators.end(), name) != cfg.estimators.end();
  };
  const bool gcomp_side = listed("gcomp") || listed("dr");
  const bool ipw_side = listed("ipw") || listed("dr");
  const Partition decisions = cfg.decision_grid();
  const std::size_t K = decisions.steps();
  const auto idx = subgrid_indices(decisions, *cfg.dgp.fine_grid);
  const Cohort cohort = simulate_observed(cfg.dgp, decisions, cfg.n, replication_seed(cfg, 0), cfg.threads);
  const std::size_t n = cohort.size();
  const NuisancePlan& gplan = cfg.plan("gcomp");
  const NuisancePlan& iplan = cfg.plan("ipw");
  const NuisanceSet nuis_g = make_nuisances(cfg.dgp, gplan.outcome, gplan.weights, decisions, &cohort);
  const NuisanceSet nuis_i = make_nuisances(cfg.dgp, iplan.outcome, iplan.weights, decisions, &cohort);
  const ValueProcess H = build_H(nuis_g, cfg.regime, decisions, &cohort, cfg.threads);
  const WeightProcess Q = build_Q(nuis_i, cfg.regime, decisions, cohort, {cfg.threads, cfg.weight_cap});
  const double thr = cfg.threshold_se;

  auto add = [&](std::string battery, std::string check, const Residual& res, bool expect_zero) {
    const bool zero = std::abs(res.mean) <= thr * res.se + kRoundingFloor;
    report.rows.push_back({std::move(battery), std::move(check), res.mean, res.se, expect_zero, zero == expect_zero});
  };

  // Q = 1{L(t_1) = 1} from t_1 on, 1 before
  std::optional<WeightProcess> indicator;
  if (K >= 2) {
    indicator = WeightProcess::constant(n, K, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double ind = cohort[i].covariate_at(idx[1])[0] == 1.0 ? 1.0 : 0.0;
      for (std::size_t j = 1; j <= K; ++j) indicator->at(i, j) = ind;
    }
  }
  ValueProcess ones{K, "constant(1)", [](std::size_t, double, double) { return 1.0; }, {}, false, std::nullopt};
  ValueProcess covariate{K, "L(t_j)", [](std::size_t, double l, double) { return l; }, {}, false, std::nullopt};

  if (gcomp_side) {
    const WeightProcess unit = WeightProcess::constant(n, K, 1.0);
    add("ee_gcomp", "H=" + H.source + ";Q=1", ee_residual_gcomp(H, unit, cfg.regime, nuis_g, decisions, cohort, cfg.threads), true);
    add("ee_gcomp", "H=" + H.source + ";Q=weights(" + iplan.weights.to_string() + ")",
        ee_residual_gcomp(H, Q, cfg.regime, nuis_g, decisions, cohort, cfg.threads), true);
    if (indicator) {
      add("ee_gcomp", "H=" + H.source + ";Q=1{L(t_1)=1}",
          ee_residual_gcomp(H, *indicator, cfg.regime, nuis_g, decisions, cohort, cfg.threads), true);
      ValueProcess bumped = H;
      bumped.source = H.source + "+0.05@t_1";
      bumped.h = [h = H.h](std::size_t j, double l, double a) { return h(j, l, a) + (j == 1 ? 0.05 : 0.0); };
      bumped.v = {};
      bumped.initial.reset();
      add("detect_gcomp", "H=" + bumped.source + ";Q=1{L(t_1)=1}",
          ee_residual_gcomp(bumped, *indicator, cfg.regime, nuis_g, decisions, cohort, cfg.threads), false);
    }
  }
  if (ipw_side) {
    const std::string qname = "Q=weights(" + iplan.weights.to_string() + ")";
    add("ee_ipw", "H=1;" + qname, ee_residual_ipw(ones, Q, cfg.regime, nuis_i, decisions, cohort, cfg.threads), true);
    add("ee_ipw", "H=L(t_j);" + qname, ee_residual_ipw(covariate, Q, cfg.regime, nuis_i, decisions, cohort, cfg.threads), true);
    add("ee_ipw", "H=" + H.source + ";" + qname, ee_residual_ipw(H, Q, cfg.regime, nuis_g, decisions, cohort, cfg.threads), true);
    for (std::size_t j = 0; j < K; ++j) {
      std::vector<double> centred(n);
      for (std::size_t i = 0; i < n; ++i) centred[i] = Q.at(i, j) - 1.0;
      const MonteCarlo mc = summarize_sample(std::move(centred));
      add("martingale", "mean Q(t_" + std::to_string(j) + ") - 1", {mc.mean, mc.se, n}, true);
    }
    const std::size_t jh = std::min<std::size_t>(2, K - 1);
    WeightProcess halved = Q;
    for (std::size_t i = 0; i < n; ++i) {
      halved.at(i, jh) *= 0.5;
      if (jh + 1 == K) halved.at(i, K) *= 0.5;
    }
    add("detect_ipw", "H=1;" + qname + " halved at t_" + std::to_string(jh),
        ee_residual_ipw(ones, halved, cfg.regime, nuis_i, decisions, cohort, cfg.threads), false);
  }
  return report;
}

void write_diagnostics(const DiagnosticReport& report, const std::filesystem::path& dir) {
  auto out = open_output(dir, "diagnose.csv");
  out << "battery,check,mean,se,expect_zero,pass\n";
  for (const auto& r : report.rows) {
    out << r.battery << ",\"" << r.check << "\"," << format_double(r.mean) << ',' << format_double(r.se) << ','
        << flag(r.expect_zero) << ',' << flag(r.pass) << '\n';
  }
}

ConvergenceTable converge(const ExperimentConfig& cfg) {
  if (cfg.k_schedule.empty()) throw ConfigError("k_schedule", "converge needs a mesh schedule");
  const std::size_t n = cfg.oracle_n ? cfg.oracle_n : cfg.n;
  return mesh_convergence(cfg.dgp, cfg.regime, cfg.k_schedule, n, replication_seed(cfg, 0), cfg.threads,
                          cfg.threshold_se);
}

void write_convergence(const ConvergenceTable& table, const std::filesystem::path& dir) {
  auto out = open_output(dir, "converge.csv");
  out << "K,estimate,se,delta_prev,delta_se,ok\n";
  for (const auto& r : table.rows) {
    out << r.K << ',' << format_double(r.estimate) << ',' << format_double(r.se) << ',' << format_double(r.delta_prev)
        << ',' << format_double(r.delta_se) << ',' << flag(r.ok) << '\n';
  }
}

Cohort simulate(const ExperimentConfig& cfg) {
  return simulate_observed(cfg.dgp, cfg.decision_grid(), cfg.n, replication_seed(cfg, 0), cfg.threads);
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
  auto out = open_output(dir, "cohort.csv");
  write_cohort_csv(out, cohort);
}

}  // namespace contregime
