#pragma once

#include <cstdint>
#include <vector>

#include "contregime/dgp.hpp"
#include "contregime/regimes.hpp"
#include "contregime/timegrid.hpp"

namespace contregime {

struct MonteCarlo {
  std::vector<double> values;
  double mean = 0.0;
  double se = 0.0;
};

/// Mean and standard error of a sample, summed in index order.
MonteCarlo summarize_sample(std::vector<double> values);

/// Counterfactual outcomes under g: regime draws alternate with the
/// structural transitions on the fine grid. Censoring is switched off in the
/// intervened world; terminal events stay part of the outcome path. Subject i
/// reuses the observed-world keys, so regimes and meshes share randomness.
MonteCarlo simulate_counterfactual(const DgpSpec& spec, const RegimeSpec& g, const Partition& decisions,
                                   std::size_t n, std::uint64_t seed, unsigned threads = 0);

/// Exact E nu(Y_G) for a discrete chain by backward induction over
/// (covariate, treatment) on the fine grid. Throws UnsupportedError for
/// continuous specs or regimes.
double enumerate_exact(const DgpSpec& spec, const RegimeSpec& g, const Partition& decisions);

/// Same target by expanding every path forward. Throws ResourceError when
/// the path has more than max_binary_steps binary choices.
double enumerate_paths(const DgpSpec& spec, const RegimeSpec& g, const Partition& decisions,
                       std::size_t max_binary_steps = 12);

struct ConvergenceRow {
  std::size_t K = 0;
  double estimate = 0.0;
  double se = 0.0;
  /// |estimate - previous estimate|; NaN on the first row.
  double delta_prev = 0.0;
  /// Paired standard error of the difference (common random numbers).
  double delta_se = 0.0;
  /// False when this difference exceeds the previous one beyond the noise.
  bool ok = true;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  bool ok() const;
};

/// Counterfactual means over a mesh schedule, each subject simulated under
/// every K. Successive differences must not increase beyond
/// threshold_se * sqrt(se_a^2 + se_b^2).
ConvergenceTable mesh_convergence(const DgpSpec& spec, const RegimeSpec& g,
                                  const std::vector<std::size_t>& k_schedule, std::size_t n,
                                  std::uint64_t seed, unsigned threads = 0, double threshold_se = 3.0);

}  // namespace contregime
