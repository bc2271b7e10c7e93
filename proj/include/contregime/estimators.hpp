#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "contregime/nuisance.hpp"
#include "contregime/regimes.hpp"
#include "contregime/timegrid.hpp"

namespace contregime {

/// H at decision times t_0..t_{K-1}, evaluated on the treatment-aware
/// summary (L(t_j), A(t_j)). At t_K the process is nu itself.
struct ValueProcess {
  std::size_t K = 0;
  std::string source;
  std::function<double(std::size_t j, double l, double a)> h;
  /// Integral of h(j, l, .) against G's conditional at t_j. When empty it is
  /// computed from h with the propensity of the nuisance set in use.
  std::function<double(std::size_t j, double l)> v;
  /// Built processes are conditional expectations of nu, so a subject whose
  /// terminal event happened by t_j has H = V = nu there.
  bool absorb_at_death = true;
  /// H(0-) integrated over the baseline law, when known in closed form.
  std::optional<double> initial;
};

/// Backward recursion for H. Exact and misspecified outcome models integrate
/// the spec's conditionals (sums on a chain, Gauss-Hermite for Gaussian
/// steps); fitted models run sequential regressions on the cohort.
ValueProcess build_H(const NuisanceSet& nuis, const RegimeSpec& g, const Partition& decisions,
                     const Cohort* cohort = nullptr, unsigned threads = 0);

/// Q(t_0)..Q(t_K) per subject; row major n x (K + 1).
struct WeightProcess {
  std::size_t n = 0;
  std::size_t K = 0;
  std::vector<double> q;
  std::size_t capped = 0;
  double cap = 0.0;

  double at(std::size_t i, std::size_t j) const { return q[i * (K + 1) + j]; }
  double& at(std::size_t i, std::size_t j) { return q[i * (K + 1) + j]; }
  /// Q(t_{j-1}) with Q(t_{-1}) = 1.
  double before(std::size_t i, std::size_t j) const { return j == 0 ? 1.0 : at(i, j - 1); }

  static WeightProcess constant(std::size_t n, std::size_t K, double value);
};

struct WeightOptions {
  unsigned threads = 0;
  /// Cap on Q; 0 disables. Capped entries are counted, not hidden.
  double cap = 0.0;
};

/// Q(t_j) = prod_{k <= j} dG/dP(A(t_k)) * 1(uncensored through t_{j+1}) /
/// P(uncensored through t_{j+1} | history). Q(t_K) = Q(t_{K-1}).
/// Throws PositivityError when a ratio does not exist.
WeightProcess build_Q(const NuisanceSet& nuis, const RegimeSpec& g, const Partition& decisions,
                      const Cohort& cohort, const WeightOptions& options = {});

struct Estimate {
  double point = 0.0;
  double se = 0.0;
  std::size_t n = 0;
  std::size_t K = 0;
  std::map<std::string, double> diagnostics;
};

nlohmann::json to_json(const Estimate& e);

/// Reporting head of the recursion: H(0-) from the exact baseline integral
/// when available (se 0), otherwise the cohort average of V(t_0). With
/// weights the se is the influence-curve one, sd(Xi_DR) / sqrt(n); without,
/// the baseline-averaging se.
Estimate gcomp_estimate(const ValueProcess& H, const NuisanceSet& nuis, const RegimeSpec& g,
                        const Partition& decisions, const Cohort& cohort,
                        const WeightProcess* Q = nullptr, unsigned threads = 0);

/// Mean of Q(t_K) nu.
Estimate ipw_estimate(const WeightProcess& Q, const Cohort& cohort);

/// Mean of Xi_DR = Q(t_K) nu - sum_j [Q(t_j) H(t_j) - Q(t_{j-1}) V(t_j)].
/// Throws ScopeError for regimes that depend on the observed treatment law.
Estimate dr_estimate(const ValueProcess& H, const WeightProcess& Q, const RegimeSpec& g,
                     const NuisanceSet& nuis, const Partition& decisions, const Cohort& cohort,
                     unsigned threads = 0);

struct Residual {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

/// sum_j Q(t_j) [V(t_{j+1}) - H(t_j)] with V(t_K) = nu.
Residual ee_residual_gcomp(const ValueProcess& H, const WeightProcess& Q, const RegimeSpec& g,
                           const NuisanceSet& nuis, const Partition& decisions, const Cohort& cohort,
                           unsigned threads = 0);

/// sum_j [Q(t_j) H(t_j) - Q(t_{j-1}) V(t_j)] + [Q(t_K) - Q(t_{K-1})] nu.
Residual ee_residual_ipw(const ValueProcess& H, const WeightProcess& Q, const RegimeSpec& g,
                         const NuisanceSet& nuis, const Partition& decisions, const Cohort& cohort,
                         unsigned threads = 0);

/// Per-subject Xi_DR values, in cohort order.
std::vector<double> dr_terms(const ValueProcess& H, const WeightProcess& Q, const RegimeSpec& g,
                             const NuisanceSet& nuis, const Partition& decisions, const Cohort& cohort,
                             unsigned threads = 0);

}  // namespace contregime
