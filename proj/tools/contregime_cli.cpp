// contregime: simulate cohorts, compute oracle targets and run estimators
// from a TOML or JSON experiment config.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>

#include "contregime/errors.hpp"
#include "contregime/format.hpp"
#include "contregime/harness.hpp"

using namespace contregime;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "experiment config (.toml or .json)");
  if (config_required) opt->required();
  sub->add_option("--seed", c.seed, "override the config seed");
  sub->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  sub->add_option("--out", c.out, "output directory (overrides output.dir)");
}

ExperimentConfig resolve(const Common& c, nlohmann::json j) {
  if (c.seed) j["seed"] = *c.seed;
  if (c.threads) j["threads"] = *c.threads;
  ExperimentConfig cfg = parse_config(j);
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

ExperimentConfig resolve(const Common& c) { return resolve(c, read_config_file(c.config)); }

int exit_code(bool pass) { return pass ? 0 : 2; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contregime: causal estimands under dynamic treatment regimes on functional longitudinal data"};
  app.require_subcommand(1);

  Common sim_opts, est_opts, conv_opts, grid_opts, diag_opts;
  auto* sim = app.add_subcommand("simulate", "simulate an observed cohort and write cohort.csv");
  add_common(sim, sim_opts, true);

  auto* est = app.add_subcommand("estimate", "run one estimator and print a JSON estimate");
  add_common(est, est_opts, false);
  std::string estimator = "dr", nuisance, regime, input, dgp_name;
  std::optional<std::size_t> decisions, n;
  bool do_simulate = false;
  est->add_option("--estimator", estimator, "gcomp, ipw or dr")->check(CLI::IsMember({"gcomp", "ipw", "dr"}));
  est->add_option("--nuisance", nuisance, "exact, fitted or misspec:<knob>");
  est->add_option("--regime", regime, "regime, e.g. always_treat or shift:delta=0.5");
  est->add_option("--decisions", decisions, "number of decision intervals K");
  est->add_option("--dgp", dgp_name, "preset used without --config (BIN3, OU1, CENS3)");
  est->add_option("--n", n, "cohort size for --simulate");
  auto* in_opt = est->add_option("--input", input, "observed cohort CSV");
  auto* sim_flag = est->add_flag("--simulate", do_simulate, "simulate the cohort from the config");
  in_opt->excludes(sim_flag);

  auto* conv = app.add_subcommand("converge", "counterfactual means over the mesh schedule");
  add_common(conv, conv_opts, true);
  auto* grid = app.add_subcommand("dr-grid", "double robustness grid over misspecified nuisances");
  add_common(grid, grid_opts, true);
  auto* diag = app.add_subcommand("diagnose", "estimating-equation residual batteries");
  add_common(diag, diag_opts, true);
  Common run_opts;
  auto* run = app.add_subcommand("run", "replicated experiment against the oracle");
  add_common(run, run_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      const ExperimentConfig cfg = resolve(sim_opts);
      const Cohort cohort = simulate(cfg);
      write_cohort(cohort, cfg.output_dir);
      std::cout << "wrote " << cohort.size() << " trajectories to " << (cfg.output_dir / "cohort.csv").string() << '\n';
      return 0;
    }
    if (est->parsed()) {
      nlohmann::json j = est_opts.config.empty() ? nlohmann::json::object() : read_config_file(est_opts.config);
      if (!dgp_name.empty() || !j.contains("dgp")) j["dgp"] = {{"preset", dgp_name.empty() ? "BIN3" : dgp_name}};
      if (!regime.empty()) j["regime"] = regime;
      if (decisions) j["decisions"] = *decisions;
      if (n) j["n"] = *n;
      if (!nuisance.empty()) j["nuisance"] = nuisance;
      j["estimators"] = {estimator};
      const ExperimentConfig cfg = resolve(est_opts, j);
      if (input.empty() && !do_simulate) throw InvalidArgument("estimate needs --input <cohort.csv> or --simulate");
      Cohort cohort;
      if (!input.empty()) {
        std::ifstream f(input);
        if (!f) throw InvalidArgument("cannot open " + input);
        cohort = read_cohort_csv(f);
        for (const auto& tr : cohort) {
          if (*tr.grid != *cfg.dgp.fine_grid) {
            throw InvalidArgument("cohort grid does not match the dgp simulation grid");
          }
        }
      } else {
        cohort = simulate(cfg);
      }
      const Partition grid_k = cfg.decision_grid();
      const NuisancePlan& plan = cfg.plan(estimator);
      const NuisanceSet nuis = make_nuisances(cfg.dgp, plan.outcome, plan.weights, grid_k, &cohort);
      const WeightOptions wopt{cfg.threads, cfg.weight_cap};
      Estimate e;
      if (estimator == "ipw") {
        e = ipw_estimate(build_Q(nuis, cfg.regime, grid_k, cohort, wopt), cohort);
      } else {
        const ValueProcess H = build_H(nuis, cfg.regime, grid_k, &cohort, cfg.threads);
        if (estimator == "dr") {
          e = dr_estimate(H, build_Q(nuis, cfg.regime, grid_k, cohort, wopt), cfg.regime, nuis, grid_k, cohort,
                          cfg.threads);
        } else {
          e = gcomp_estimate(H, nuis, cfg.regime, grid_k, cohort, nullptr, cfg.threads);
        }
      }
      const nlohmann::json out = to_json(e);
      std::cout << out.dump(2) << '\n';
      if (!est_opts.out.empty()) {
        std::filesystem::create_directories(est_opts.out);
        std::ofstream f(std::filesystem::path(est_opts.out) / "estimate.json", std::ios::binary);
        f << out.dump(2) << '\n';
      }
      return 0;
    }
    if (conv->parsed()) {
      const ExperimentConfig cfg = resolve(conv_opts);
      const ConvergenceTable table = converge(cfg);
      write_convergence(table, cfg.output_dir);
      for (const auto& r : table.rows) {
        std::cout << "K=" << r.K << " estimate=" << format_double(r.estimate) << " se=" << format_double(r.se)
                  << " delta_prev=" << format_double(r.delta_prev) << (r.ok ? "" : "  NON-MONOTONE") << '\n';
      }
      return exit_code(table.ok());
    }
    if (grid->parsed()) {
      const ExperimentConfig cfg = resolve(grid_opts);
      const DrGrid g = dr_grid(cfg);
      write_dr_grid(g, cfg.output_dir);
      std::cout << "oracle " << format_double(g.oracle.value) << " (" << g.oracle.method << ")\n";
      for (const auto& c : g.cells) {
        std::cout << "H " << (c.outcome_correct ? "correct" : "wrong  ") << "  Q " << (c.weights_correct ? "correct" : "wrong  ")
                  << "  bias " << format_double(c.stats.bias) << "  se " << format_double(c.stats.se_of_mean) << "  "
                  << (c.unbiased ? "ok" : "biased") << (c.pass ? "" : "  (unexpected)") << '\n';
      }
      return exit_code(g.pass());
    }
    if (diag->parsed()) {
      const ExperimentConfig cfg = resolve(diag_opts);
      const DiagnosticReport report = diagnose(cfg);
      write_diagnostics(report, cfg.output_dir);
      for (const auto& r : report.rows) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.battery << "  " << r.check << "  mean=" << format_double(r.mean)
                  << " se=" << format_double(r.se) << '\n';
      }
      if (report.rows.empty()) std::cout << "no estimators listed; nothing to check\n";
      return exit_code(report.pass());
    }
    if (run->parsed()) {
      const ExperimentConfig cfg = resolve(run_opts);
      const ReportBundle bundle = run_experiment(cfg);
      write_report(bundle, cfg.output_dir);
      std::cout << "oracle " << format_double(bundle.oracle.value) << " (" << bundle.oracle.method << ")\n";
      for (const auto& a : bundle.aggregates) {
        std::cout << a.estimator << " [" << a.nuisance << "] mean=" << format_double(a.mean)
                  << " bias=" << format_double(a.bias) << " se_of_mean=" << format_double(a.se_of_mean)
                  << (a.pass ? "  ok" : "  FAIL") << '\n';
      }
      return exit_code(bundle.pass());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
