#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace contregime {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class PartitionScheme { uniform };

/// Ordered time points 0 = t_0 < ... < t_K = horizon.
class Partition {
 public:
  /// Validates the invariants; throws InvalidArgument otherwise.
  explicit Partition(std::vector<double> times);

  std::span<const double> times() const noexcept { return times_; }
  double operator[](std::size_t i) const { return times_[i]; }
  double horizon() const noexcept { return times_.back(); }
  double mesh() const noexcept { return mesh_; }
  /// Number of points, K + 1.
  std::size_t size() const noexcept { return times_.size(); }
  /// Number of gaps, K.
  std::size_t steps() const noexcept { return times_.size() - 1; }

  /// Index of the point equal to t (relative tolerance 1e-9 of the horizon).
  std::optional<std::size_t> find(double t) const;

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::vector<double> times_;
  double mesh_ = 0.0;
};

Partition make_partition(double horizon, std::size_t steps,
                         PartitionScheme scheme = PartitionScheme::uniform);

/// Inserts the midpoint of every gap.
Partition refine(const Partition& p);

/// Fine-grid index of every point of `coarse`. Throws InvalidArgument when
/// `coarse` is not a sub-grid of `fine`.
std::vector<std::size_t> subgrid_indices(const Partition& coarse,
                                         const Partition& fine);

/// One subject's path on a fine grid. Values are piecewise constant between
/// grid times and frozen after the exit time X = min(T, C).
struct Trajectory {
  std::shared_ptr<const Partition> grid;
  std::size_t treatment_dim = 1;
  std::size_t covariate_dim = 1;
  std::vector<double> treatment;  // grid->size() * treatment_dim, row major
  std::vector<double> covariate;  // grid->size() * covariate_dim
  double event_time = kInfinity;
  double censor_time = kInfinity;
  double outcome = 0.0;

  std::span<const double> treatment_at(std::size_t j) const {
    return {treatment.data() + j * treatment_dim, treatment_dim};
  }
  std::span<const double> covariate_at(std::size_t j) const {
    return {covariate.data() + j * covariate_dim, covariate_dim};
  }
  double exit_time() const noexcept {
    return event_time < censor_time ? event_time : censor_time;
  }
  bool censored() const noexcept { return censor_time < kInfinity; }
  bool died() const noexcept { return event_time < kInfinity; }
  /// Grid index of X, or grid->size() when the subject is followed to the
  /// horizon.
  std::size_t exit_index() const;
};

using Cohort = std::vector<Trajectory>;

/// Throws InvalidArgument naming the first violated invariant.
void validate(const Trajectory& tr);

/// Declared map from a history prefix to its finite summary.
enum class SummaryMap {
  /// Latest covariate vector, followed by the current treatment for
  /// treatment-aware views.
  last_value,
};

/// Prefix of a trajectory up to grid index `upto_index`. Without a current
/// treatment it represents the history before the treatment at that time is
/// drawn; with one, the treatment-aware history.
struct HistoryView {
  std::size_t upto_index = 0;
  std::size_t treatment_dim = 1;
  std::size_t covariate_dim = 1;
  std::vector<double> past_treatments;  // indices [0, upto_index)
  std::vector<double> past_covariates;  // indices [0, upto_index]
  std::optional<std::vector<double>> current_treatment;
  std::vector<double> summary;

  friend bool operator==(const HistoryView&, const HistoryView&) = default;
};

std::vector<double> summarize(SummaryMap map, const HistoryView& view);

HistoryView history_at(const Trajectory& tr, std::size_t j, bool with_current,
                       SummaryMap map = SummaryMap::last_value);

/// CSV with columns subject_id, t, a_1..a_p, l_1..l_q, event_time,
/// censor_time, outcome; one row per grid time.
void write_cohort_csv(std::ostream& out, const Cohort& cohort);
Cohort read_cohort_csv(std::istream& in);

}  // namespace contregime
