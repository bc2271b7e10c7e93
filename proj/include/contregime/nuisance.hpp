#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "contregime/dgp.hpp"
#include "contregime/timegrid.hpp"
#include "contregime/treatment_law.hpp"

namespace contregime {

enum class Provenance { exact, fitted, misspecified };

std::string_view to_string(Provenance p);

/// "exact", "fitted" or "misspec:<knob>".
struct NuisanceChoice {
  Provenance provenance = Provenance::exact;
  Knob knob;

  static NuisanceChoice parse(std::string_view text);
  std::string to_string() const;
};

/// Observed treatment law per decision time.
struct PropensityModel {
  Provenance provenance = Provenance::exact;
  std::string label;
  std::optional<DgpSpec> spec;
  // fitted: per decision, logistic on [1, L] for binary treatment, linear
  // mean on [1, L] with residual sd otherwise
  bool binary = true;
  std::vector<Eigen::VectorXd> coef;
  std::vector<double> sd;

  TreatmentLaw law(std::size_t decision, std::span<const double> f_summary) const;
};

/// Per-fine-step censoring hazard.
struct CensoringModel {
  Provenance provenance = Provenance::exact;
  std::string label;
  std::optional<HazardSpec> spec;
  // fitted pooled logistic on [1, L, A]
  std::optional<Eigen::VectorXd> coef;

  bool active() const noexcept { return spec.has_value() || coef.has_value(); }
  double hazard(double l, double a) const;
};

/// Covariate transition law used by the value recursion. Fitted outcome
/// models carry no spec; their regressions run inside build_H.
struct OutcomeModel {
  Provenance provenance = Provenance::exact;
  std::string label;
  std::optional<DgpSpec> spec;
};

struct NuisanceSet {
  DgpSpec truth;
  OutcomeModel outcome;
  PropensityModel propensity;
  CensoringModel censoring;
};

/// Outcome model from `outcome`, propensity and censoring models from
/// `weights`. Fitted components need a cohort.
NuisanceSet make_nuisances(const DgpSpec& truth, const NuisanceChoice& outcome,
                           const NuisanceChoice& weights, const Partition& decisions,
                           const Cohort* cohort = nullptr);

inline NuisanceSet make_nuisances(const DgpSpec& truth, const NuisanceChoice& choice,
                                  const Partition& decisions, const Cohort* cohort = nullptr) {
  return make_nuisances(truth, choice, choice, decisions, cohort);
}

/// One subject read at the decision times t_0..t_K.
struct DecisionPath {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  std::vector<double> l;  // L(t_j), j = 0..K
  std::vector<double> a;  // A(t_j), j = 0..K (A(t_K) is the held value)
  /// Fine index of the death / censoring time, npos when none.
  std::size_t death = npos;
  std::size_t censor = npos;
  double nu = 0.0;

  /// Alive at t_j: no terminal event at or before t_j.
  bool alive_at(std::size_t fine_index) const noexcept { return death > fine_index; }
  /// Not censored at or before the given fine index.
  bool uncensored_at(std::size_t fine_index) const noexcept { return censor > fine_index; }
};

DecisionPath decision_path(const Trajectory& tr, std::span<const std::size_t> fine_index);

}  // namespace contregime
