#include "contregime/nuisance.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "contregime/errors.hpp"
#include "contregime/regression.hpp"

namespace contregime {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::exact: return "exact";
    case Provenance::fitted: return "fitted";
    case Provenance::misspecified: return "misspecified";
  }
  return "exact";
}

NuisanceChoice NuisanceChoice::parse(std::string_view text) {
  if (text == "exact") return {};
  if (text == "fitted") return {Provenance::fitted, {}};
  constexpr std::string_view prefix = "misspec:";
  if (text.starts_with(prefix)) return {Provenance::misspecified, Knob::parse(text.substr(prefix.size()))};
  throw InvalidArgument("unknown nuisance choice '" + std::string(text) +
                        "' (expected exact, fitted or misspec:<knob>)");
}

std::string NuisanceChoice::to_string() const {
  if (provenance == Provenance::misspecified) return "misspec:" + knob.to_string();
  return std::string(contregime::to_string(provenance));
}

TreatmentLaw PropensityModel::law(std::size_t decision, std::span<const double> f_summary) const {
  if (spec) return propensity_law(*spec, f_summary);
  if (decision >= coef.size()) throw InvalidArgument("no fitted propensity for this decision");
  const Eigen::VectorXd& b = coef[decision];
  const double eta = b[0] + b[1] * f_summary[0];
  if (binary) {
    const double p = logistic(eta);
    return DiscreteLaw{{0.0, 1.0}, {1.0 - p, p}};
  }
  return GaussianLaw{eta, sd[decision]};
}

double CensoringModel::hazard(double l, double a) const {
  if (spec) return spec->at(l, a);
  if (coef) return logistic((*coef)[0] + (*coef)[1] * l + (*coef)[2] * a);
  return 0.0;
}

DecisionPath decision_path(const Trajectory& tr, std::span<const std::size_t> fine_index) {
  DecisionPath p;
  p.l.reserve(fine_index.size());
  p.a.reserve(fine_index.size());
  for (std::size_t m : fine_index) {
    p.l.push_back(tr.covariate_at(m)[0]);
    p.a.push_back(tr.treatment_at(m)[0]);
  }
  if (tr.died()) p.death = tr.exit_index();
  if (tr.censored()) p.censor = tr.exit_index();
  p.nu = tr.outcome;
  return p;
}

namespace {

PropensityModel fit_propensity(const DgpSpec& truth, std::span<const std::size_t> idx, const Cohort& cohort) {
  PropensityModel model;
  model.provenance = Provenance::fitted;
  model.binary = truth.kind() == DgpKind::discrete_chain;
  model.label = model.binary ? "logistic[1,L] per decision" : "linear[1,L] per decision";
  const std::size_t K = idx.size() - 1;
  for (std::size_t j = 0; j < K; ++j) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      const Trajectory& tr = cohort[i];
      const std::size_t exit = tr.exit_index();
      if (exit > idx[j]) rows.push_back(i);
    }
    if (rows.empty()) throw NumericalError("no subjects at risk for the propensity fit at decision " + std::to_string(j));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      x(row, 0) = 1.0;
      x(row, 1) = cohort[rows[r]].covariate_at(idx[j])[0];
      y[row] = cohort[rows[r]].treatment_at(idx[j])[0];
    }
    if (model.binary) {
      model.coef.push_back(logistic_regression(x, y).coef);
      model.sd.push_back(0.0);
    } else {
      const LinearFit fit = least_squares(x, y);
      model.coef.push_back(fit.coef);
      model.sd.push_back(fit.sigma);
    }
  }
  return model;
}

CensoringModel fit_censoring(const Cohort& cohort) {
  CensoringModel model;
  model.provenance = Provenance::fitted;
  model.label = "pooled logistic[1,L,A]";
  std::vector<std::array<double, 4>> rows;
  std::size_t events = 0;
  for (const Trajectory& tr : cohort) {
    const std::size_t steps = tr.grid->steps();
    const std::size_t exit = tr.exit_index();
    for (std::size_t m = 0; m < steps && m < exit; ++m) {
      if (tr.died() && m + 1 == exit) break;
      const bool event = tr.censored() && m + 1 == exit;
      events += event ? 1 : 0;
      rows.push_back({1.0, tr.covariate_at(m)[0], tr.treatment_at(m)[0], event ? 1.0 : 0.0});
    }
  }
  if (events == 0) return model;  // no censoring observed: hazard 0
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 3);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    x.row(row) << rows[r][0], rows[r][1], rows[r][2];
    y[row] = rows[r][3];
  }
  // Drop columns with no variation (a constant treatment makes the design
  // singular); their coefficients stay 0.
  std::vector<Eigen::Index> keep{0};
  for (Eigen::Index c = 1; c < 3; ++c) {
    if (x.col(c).maxCoeff() > x.col(c).minCoeff()) keep.push_back(c);
  }
  Eigen::MatrixXd xs(x.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) xs.col(static_cast<Eigen::Index>(k)) = x.col(keep[k]);
  const LogisticFit fit = logistic_regression(xs, y);
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(3);
  for (std::size_t k = 0; k < keep.size(); ++k) coef[keep[k]] = fit.coef[static_cast<Eigen::Index>(k)];
  model.coef = coef;
  return model;
}

}  // namespace

NuisanceSet make_nuisances(const DgpSpec& truth, const NuisanceChoice& outcome,
                           const NuisanceChoice& weights, const Partition& decisions, const Cohort* cohort) {
  validate(truth);
  const auto idx = subgrid_indices(decisions, *truth.fine_grid);
  auto need_cohort = [&](const char* what) {
    if (!cohort || cohort->empty()) {
      throw InvalidArgument(std::string("fitted ") + what + " model needs an observed cohort");
    }
  };
  NuisanceSet set{truth, {}, {}, {}};

  set.outcome.provenance = outcome.provenance;
  set.outcome.label = outcome.to_string();
  if (outcome.provenance == Provenance::exact) set.outcome.spec = truth;
  else if (outcome.provenance == Provenance::misspecified) set.outcome.spec = misspecify(truth, outcome.knob);
  else need_cohort("outcome");

  if (weights.provenance == Provenance::fitted) {
    need_cohort("propensity");
    set.propensity = fit_propensity(truth, idx, *cohort);
    set.censoring = fit_censoring(*cohort);
  } else {
    const DgpSpec spec = weights.provenance == Provenance::exact ? truth : misspecify(truth, weights.knob);
    set.propensity.provenance = set.censoring.provenance = weights.provenance;
    set.propensity.label = set.censoring.label = weights.to_string();
    set.propensity.binary = spec.kind() == DgpKind::discrete_chain;
    set.propensity.spec = spec;
    set.censoring.spec = spec.censoring;
  }
  return set;
}

}  // namespace contregime
