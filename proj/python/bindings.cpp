#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "contregime/errors.hpp"
#include "contregime/harness.hpp"

namespace py = pybind11;
using namespace contregime;

namespace {

// dgp and regime arrive as JSON text from the Python layer
DgpSpec dgp_of(const std::string& text) { return dgp_from_json(nlohmann::json::parse(text)); }
RegimeSpec regime_of(const std::string& text) { return regime_from_json(nlohmann::json::parse(text)); }

Partition grid_for(const DgpSpec& spec, std::size_t K) { return make_partition(spec.fine_grid->horizon(), K); }

py::dict cohort_arrays(const Cohort& cohort) {
  const std::size_t n = cohort.size();
  const std::size_t m = n ? cohort.front().grid->size() : 0;
  const auto rows = static_cast<py::ssize_t>(n);
  const auto cols = static_cast<py::ssize_t>(m);
  py::array_t<double> t(std::vector<py::ssize_t>{cols});
  py::array_t<double> a(std::vector<py::ssize_t>{rows, cols}), l(std::vector<py::ssize_t>{rows, cols});
  py::array_t<double> event(std::vector<py::ssize_t>{rows}), censor(std::vector<py::ssize_t>{rows}),
      outcome(std::vector<py::ssize_t>{rows});
  auto ta = t.mutable_unchecked<1>();
  for (std::size_t j = 0; j < m; ++j) ta(j) = (*cohort.front().grid)[j];
  auto aa = a.mutable_unchecked<2>();
  auto la = l.mutable_unchecked<2>();
  auto ea = event.mutable_unchecked<1>();
  auto ca = censor.mutable_unchecked<1>();
  auto oa = outcome.mutable_unchecked<1>();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      aa(i, j) = cohort[i].treatment_at(j)[0];
      la(i, j) = cohort[i].covariate_at(j)[0];
    }
    ea(i) = cohort[i].event_time;
    ca(i) = cohort[i].censor_time;
    oa(i) = cohort[i].outcome;
  }
  py::dict d;
  d["t"] = t;
  d["treatment"] = a;
  d["covariate"] = l;
  d["event_time"] = event;
  d["censor_time"] = censor;
  d["outcome"] = outcome;
  return d;
}

py::dict estimate_dict(const Estimate& e) {
  py::dict d;
  d["point"] = e.point;
  d["se"] = e.se;
  d["n"] = e.n;
  d["K"] = e.K;
  d["diagnostics"] = e.diagnostics;
  return d;
}

py::dict estimate(const std::string& dgp, const std::string& regime, std::size_t K, const std::string& estimator,
                  const std::string& nuisance, std::size_t n, std::uint64_t seed, unsigned threads) {
  const DgpSpec spec = dgp_of(dgp);
  const RegimeSpec g = regime_of(regime);
  const Partition decisions = grid_for(spec, K);
  Cohort cohort;
  {
    py::gil_scoped_release release;
    cohort = simulate_observed(spec, decisions, n, seed, threads);
  }
  const NuisanceSet nuis = make_nuisances(spec, NuisanceChoice::parse(nuisance), decisions, &cohort);
  Estimate e;
  py::gil_scoped_release release;
  if (estimator == "ipw") {
    e = ipw_estimate(build_Q(nuis, g, decisions, cohort, {threads, 0.0}), cohort);
  } else if (estimator == "dr") {
    const ValueProcess H = build_H(nuis, g, decisions, &cohort, threads);
    e = dr_estimate(H, build_Q(nuis, g, decisions, cohort, {threads, 0.0}), g, nuis, decisions, cohort, threads);
  } else if (estimator == "gcomp") {
    const ValueProcess H = build_H(nuis, g, decisions, &cohort, threads);
    e = gcomp_estimate(H, nuis, g, decisions, cohort, nullptr, threads);
  } else {
    throw InvalidArgument("unknown estimator '" + estimator + "'");
  }
  py::gil_scoped_acquire acquire;
  return estimate_dict(e);
}

py::dict run_config(const std::string& config_json, const std::string& out_dir) {
  const ExperimentConfig cfg = parse_config(nlohmann::json::parse(config_json));
  ReportBundle bundle;
  {
    py::gil_scoped_release release;
    bundle = run_experiment(cfg);
    if (!out_dir.empty()) write_report(bundle, out_dir);
  }
  py::list aggregates;
  for (const auto& a : bundle.aggregates) {
    py::dict d;
    d["estimator"] = a.estimator;
    d["nuisance"] = a.nuisance;
    d["mean"] = a.mean;
    d["bias"] = a.bias;
    d["se_of_mean"] = a.se_of_mean;
    d["rmse"] = a.rmse;
    d["pass"] = a.pass;
    aggregates.append(d);
  }
  py::dict out;
  out["oracle"] = bundle.oracle.value;
  out["oracle_se"] = bundle.oracle.se;
  out["oracle_method"] = bundle.oracle.method;
  out["aggregates"] = aggregates;
  out["pass"] = bundle.pass();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Continuous-time g-computation, IPW and doubly robust estimation under dynamic regimes";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<InvalidArgument> invalid(m, "InvalidArgument", base.ptr());
  static py::exception<DomainError> domain(m, "DomainError", base.ptr());
  static py::exception<PositivityError> positivity(m, "PositivityError", base.ptr());
  static py::exception<UnsupportedError> unsupported(m, "UnsupportedError", base.ptr());
  static py::exception<ResourceError> resource(m, "ResourceError", base.ptr());
  static py::exception<NumericalError> numerical(m, "NumericalError", base.ptr());
  static py::exception<ScopeError> scope(m, "ScopeError", base.ptr());
  static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      invalid(e.what());
    } catch (const DomainError& e) {
      domain(e.what());
    } catch (const PositivityError& e) {
      positivity(e.what());
    } catch (const UnsupportedError& e) {
      unsupported(e.what());
    } catch (const ResourceError& e) {
      resource(e.what());
    } catch (const NumericalError& e) {
      numerical(e.what());
    } catch (const ScopeError& e) {
      scope(e.what());
    } catch (const ConfigError& e) {
      config(e.what());
    } catch (const Error& e) {
      base(e.what());
    } catch (const nlohmann::json::exception& e) {
      invalid(e.what());
    }
  });

  m.def("make_partition", [](double horizon, std::size_t K) {
    const Partition p = make_partition(horizon, K);
    return std::vector<double>(p.times().begin(), p.times().end());
  }, py::arg("horizon"), py::arg("K"));
  m.def("refine", [](std::vector<double> times) {
    const Partition p = refine(Partition(std::move(times)));
    return std::vector<double>(p.times().begin(), p.times().end());
  }, py::arg("times"));

  m.def("simulate_observed", [](const std::string& dgp, std::size_t K, std::size_t n, std::uint64_t seed, unsigned threads) {
    const DgpSpec spec = dgp_of(dgp);
    Cohort cohort;
    {
      py::gil_scoped_release release;
      cohort = simulate_observed(spec, grid_for(spec, K), n, seed, threads);
    }
    return cohort_arrays(cohort);
  }, py::arg("dgp"), py::arg("K"), py::arg("n"), py::arg("seed"), py::arg("threads") = 0);

  m.def("enumerate_exact", [](const std::string& dgp, const std::string& regime, std::size_t K) {
    const DgpSpec spec = dgp_of(dgp);
    return enumerate_exact(spec, regime_of(regime), grid_for(spec, K));
  }, py::arg("dgp"), py::arg("regime"), py::arg("K"));

  m.def("simulate_counterfactual", [](const std::string& dgp, const std::string& regime, std::size_t K, std::size_t n,
                                      std::uint64_t seed, unsigned threads) {
    const DgpSpec spec = dgp_of(dgp);
    const RegimeSpec g = regime_of(regime);
    py::gil_scoped_release release;
    const MonteCarlo mc = simulate_counterfactual(spec, g, grid_for(spec, K), n, seed, threads);
    return std::make_pair(mc.mean, mc.se);
  }, py::arg("dgp"), py::arg("regime"), py::arg("K"), py::arg("n"), py::arg("seed"), py::arg("threads") = 0);

  m.def("mesh_convergence", [](const std::string& dgp, const std::string& regime, std::vector<std::size_t> schedule,
                               std::size_t n, std::uint64_t seed, unsigned threads) {
    const DgpSpec spec = dgp_of(dgp);
    const RegimeSpec g = regime_of(regime);
    ConvergenceTable table;
    {
      py::gil_scoped_release release;
      table = mesh_convergence(spec, g, schedule, n, seed, threads);
    }
    py::list rows;
    for (const auto& r : table.rows) {
      py::dict d;
      d["K"] = r.K;
      d["estimate"] = r.estimate;
      d["se"] = r.se;
      d["delta_prev"] = r.delta_prev;
      d["delta_se"] = r.delta_se;
      d["ok"] = r.ok;
      rows.append(d);
    }
    return rows;
  }, py::arg("dgp"), py::arg("regime"), py::arg("schedule"), py::arg("n"), py::arg("seed"), py::arg("threads") = 0);

  m.def("estimate", &estimate, py::arg("dgp"), py::arg("regime"), py::arg("K"), py::arg("estimator"),
        py::arg("nuisance"), py::arg("n"), py::arg("seed"), py::arg("threads") = 0);

  m.def("density_ratio", [](const std::string& dgp, const std::string& regime, double l, double a) {
    const DgpSpec spec = dgp_of(dgp);
    const double s[1] = {l};
    return density_ratio(regime_of(regime), s, propensity_law(spec, s), a);
  }, py::arg("dgp"), py::arg("regime"), py::arg("l"), py::arg("a"));

  m.def("run_config", &run_config, py::arg("config"), py::arg("out_dir") = "");
  m.def("toml_to_json", [](const std::string& text) { return toml_to_json(text).dump(); }, py::arg("text"));
}
