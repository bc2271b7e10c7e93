#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "contregime/dgp.hpp"
#include "contregime/timegrid.hpp"
#include "contregime/treatment_law.hpp"

namespace contregime {

enum class RegimeVariant {
  null,
  point_mass,
  deterministic_dynamic,
  stochastic_prespecified,
  shift,
  threshold,
  incremental,
};

std::string_view to_string(RegimeVariant v);

/// Treatment rule reading the covariate summary at a decision time.
using SummaryRule = std::function<double(std::span<const double> f_summary)>;

/// An intervention law G. Conditionals are built per decision time from the
/// covariate summary and, for the dependent variants, the observed treatment
/// law at that time.
struct RegimeSpec {
  RegimeVariant variant = RegimeVariant::null;
  // point_mass: constant value, or `rule` when set
  double value = 0.0;
  SummaryRule rule;
  std::string rule_label;
  // deterministic_dynamic: above if L >= cutoff else below
  double cutoff = 0.0;
  double above = 1.0;
  double below = 0.0;
  // stochastic_prespecified: mean = intercept + slope * L; sd == 0 gives
  // Bernoulli(clamp(mean, 0, 1)) on {0, 1}, sd > 0 a Gaussian
  double intercept = 0.0;
  double slope = 0.0;
  double sd = 0.0;
  // shift / threshold / incremental
  double delta = 0.0;
  double theta = 0.0;
  double multiplier = 1.0;

  bool depends_on_actual() const noexcept {
    return variant == RegimeVariant::shift || variant == RegimeVariant::threshold ||
           variant == RegimeVariant::incremental;
  }
  std::string describe() const;
};

RegimeSpec null_regime();
RegimeSpec point_mass(double value);
RegimeSpec point_mass(SummaryRule rule, std::string label);
RegimeSpec always_treat();
RegimeSpec never_treat();
RegimeSpec deterministic_dynamic(double cutoff, double above, double below);
RegimeSpec stochastic_bernoulli(double intercept, double slope);
RegimeSpec stochastic_gaussian(double intercept, double slope, double sd);
RegimeSpec shift(double delta);
RegimeSpec threshold(double theta);
/// Throws InvalidArgument unless multiplier > 0.
RegimeSpec incremental(double multiplier);

/// "null", "always_treat", "never_treat", or "<variant>:key=value,...", for
/// example "shift:delta=0.5" or "incremental:multiplier=2".
RegimeSpec parse_regime(std::string_view text);
RegimeSpec regime_from_json(const nlohmann::json& j, const std::string& path = "regime");
nlohmann::json to_json(const RegimeSpec& g);

/// G's conditional at one decision time. `propensity` is the observed
/// treatment law there; only the dependent variants and the null regime read
/// it. Throws InvalidArgument when the variant does not apply to the
/// propensity's treatment type.
TreatmentLaw regime_law(const RegimeSpec& g, std::span<const double> f_summary,
                        const TreatmentLaw& propensity);

/// Draw from G's conditional by transforming the observed-world draw, so the
/// same draw feeds both worlds.
double sample_regime(const RegimeSpec& g, std::span<const double> f_summary,
                     const TreatmentLaw& propensity, const TreatmentDraw& draw);

/// dG/dP at the observed treatment. The null regime returns exactly 1.
double density_ratio(const RegimeSpec& g, std::span<const double> f_summary,
                     const TreatmentLaw& propensity, double observed_a);

// Forms taking a treatment-free history view and the true propensity of spec.
double sample_regime(const RegimeSpec& g, const HistoryView& h, const DgpSpec& spec,
                     const TreatmentDraw& draw);
double density_ratio(const RegimeSpec& g, const HistoryView& h, double observed_a, const DgpSpec& spec);

/// Policy for simulate_path that follows g against spec's propensity.
TreatmentPolicy regime_policy(const RegimeSpec& g, const DgpSpec& spec);

}  // namespace contregime
