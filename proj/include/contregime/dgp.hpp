#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "contregime/rng.hpp"
#include "contregime/timegrid.hpp"
#include "contregime/treatment_law.hpp"

namespace contregime {

enum class DgpKind { discrete_chain, euler_diffusion };

std::string_view to_string(DgpKind kind);

/// Binary covariate chain with binary treatment. Probabilities are linear in
/// (L, A); transitions are clipped to [clip_lo, clip_hi].
struct ChainParams {
  double baseline_prob = 0.5;    // P(L(0) = 1)
  double treat_intercept = 0.2;  // P(A = 1 | L) = treat_intercept + treat_covariate * L
  double treat_covariate = 0.6;
  double trans_intercept = 0.2;  // P(L' = 1 | L, A) = intercept + treatment * A + covariate * L
  double trans_treatment = 0.3;
  double trans_covariate = 0.3;
  double clip_lo = 0.01;
  double clip_hi = 0.99;
  /// Propensities must stay in [margin, 1 - margin].
  double margin = 0.01;
  /// Value substituted for L when the propensity drops its covariate.
  double covariate_reference = 0.5;

  friend bool operator==(const ChainParams&, const ChainParams&) = default;
};

/// Euler scheme L(t + d) = L(t) + (drift_intercept + drift_covariate L +
/// drift_treatment A) d + noise sqrt(d) eps, with A ~ N(treat_intercept +
/// treat_covariate L, treat_sd^2) drawn at decision times.
struct DiffusionParams {
  double baseline_mean = 0.0;
  double baseline_sd = 0.1;
  double drift_intercept = 0.0;
  double drift_covariate = -0.5;
  double drift_treatment = 0.8;
  double noise = 0.2;
  double treat_intercept = 0.0;
  double treat_covariate = 0.5;
  double treat_sd = 0.3;
  double covariate_reference = 0.0;

  friend bool operator==(const DiffusionParams&, const DiffusionParams&) = default;
};

/// Per-fine-step hazard base + covariate * L + treatment * A, clipped to
/// [0, 0.99]. Reads only the observed history at the start of the step.
struct HazardSpec {
  double base = 0.0;
  double covariate = 0.0;
  double treatment = 0.0;

  double at(double l, double a) const noexcept;
  friend bool operator==(const HazardSpec&, const HazardSpec&) = default;
};

struct DgpSpec {
  std::string name;
  std::variant<ChainParams, DiffusionParams> params;
  SummaryMap summary_map = SummaryMap::last_value;
  std::optional<HazardSpec> censoring;
  std::optional<HazardSpec> terminal;
  std::shared_ptr<const Partition> fine_grid;
  /// Non-empty when produced by misspecify().
  std::string perturbation;

  DgpKind kind() const noexcept {
    return std::holds_alternative<ChainParams>(params) ? DgpKind::discrete_chain
                                                       : DgpKind::euler_diffusion;
  }
  const ChainParams& chain() const { return std::get<ChainParams>(params); }
  const DiffusionParams& diffusion() const { return std::get<DiffusionParams>(params); }
};

/// Throws InvalidArgument when a declared bound is violated.
void validate(const DgpSpec& spec);

/// BIN3: tau = 3, unit steps, no censoring.
DgpSpec bin3();
/// OU1: tau = 1 on a 256-step grid.
DgpSpec ou1(std::size_t fine_steps = 256);
/// CENS3: BIN3 with constant per-step censoring hazard 0.1.
DgpSpec cens3();
/// Looks up "BIN3", "OU1" or "CENS3" (case-insensitive).
DgpSpec preset(std::string_view name);

std::map<std::string, double> named_params(const DgpSpec& spec);

DgpSpec dgp_from_json(const nlohmann::json& j, const std::string& path = "dgp");
nlohmann::json to_json(const DgpSpec& spec);

// ---- closed-form conditionals ------------------------------------------------

/// P(A = . | history) as a treatment law, from a summary without treatment.
TreatmentLaw propensity_law(const DgpSpec& spec, std::span<const double> f_summary);

/// Law of the baseline covariate.
TreatmentLaw baseline_law(const DgpSpec& spec);

/// One fine step from `fine_index`: probability mass of l_new (chain) or its
/// density (diffusion). Requires a treatment-aware view.
double transition_density(const DgpSpec& spec, const HistoryView& h, std::span<const double> l_new);

/// Density or mass of a_new under the propensity. Requires a view without
/// current treatment.
double propensity_density(const DgpSpec& spec, const HistoryView& h, std::span<const double> a_new);

/// P(L' = 1 | L = l, A = a) for one chain step, clipped.
double chain_step_prob(const ChainParams& p, double l, double a) noexcept;

/// Gaussian law of L after `steps` Euler steps of width `dt` with A held at
/// a: mean = scale * l + shift0 + shift_treatment * a.
struct GaussianInterval {
  double scale = 1.0;
  double shift0 = 0.0;
  double shift_treatment = 0.0;
  double variance = 0.0;

  double mean(double l, double a) const noexcept { return scale * l + shift0 + shift_treatment * a; }
};
GaussianInterval diffusion_interval(const DiffusionParams& p, std::span<const double> step_widths);

/// Survival of the censoring process through fine step j inclusive:
/// prod_{m <= j} (1 - lambda_C(t_m | history)), skipping steps the subject did
/// not reach or ended by the terminal event. 1 when the spec has no censoring.
double censoring_survival(const DgpSpec& spec, const Trajectory& tr, std::size_t j);

// ---- simulation -------------------------------------------------------------

/// Chooses the treatment at decision `decision` given the summary (covariate
/// only) and the keyed draw for that time.
using TreatmentPolicy =
    std::function<double(std::size_t decision, std::span<const double> f_summary, const TreatmentDraw& draw)>;

struct PathOptions {
  bool censoring = true;
  bool terminal = true;
};

/// Forward simulation of one subject: decision draw, terminal hazard,
/// censoring hazard, covariate step, in that order on every fine step.
Trajectory simulate_path(const DgpSpec& spec, std::span<const std::size_t> decision_fine_index,
                         const TreatmentPolicy& policy, const CounterRng& rng,
                         std::uint64_t subject, const PathOptions& options = {});

/// Only the outcome of simulate_path, without materializing the path.
double simulate_outcome(const DgpSpec& spec, std::span<const std::size_t> decision_fine_index,
                        const TreatmentPolicy& policy, const CounterRng& rng, std::uint64_t subject,
                        const PathOptions& options = {});

/// n observed-world trajectories, reproducible for (spec, decisions, n, seed)
/// and independent of the thread count.
Cohort simulate_observed(const DgpSpec& spec, const Partition& decisions, std::size_t n,
                         std::uint64_t seed, unsigned threads = 0);

// ---- misspecification -------------------------------------------------------

struct Knob {
  enum class Kind { identity, transition_shift, propensity_drop_covariate, censoring_ignore };
  Kind kind = Kind::identity;
  double value = 0.0;

  /// "identity", "transition_shift(0.15)", "propensity_drop_covariate",
  /// "censoring_ignore".
  static Knob parse(std::string_view text);
  std::string to_string() const;
  friend bool operator==(const Knob&, const Knob&) = default;
};

/// Perturbed copy of spec usable as a wrong nuisance model.
DgpSpec misspecify(const DgpSpec& spec, const Knob& knob);

}  // namespace contregime
