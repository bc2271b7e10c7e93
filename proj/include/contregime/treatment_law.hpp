#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "contregime/rng.hpp"

namespace contregime {

/// Finite support with probabilities summing to one.
struct DiscreteLaw {
  std::vector<double> support;
  std::vector<double> probs;
};

struct GaussianLaw {
  double mean = 0.0;
  double sd = 1.0;
};

struct PointMassLaw {
  double value = 0.0;
};

/// Law of max(A, threshold) for A ~ N(mean, sd^2): an atom at the threshold
/// plus the Gaussian density above it.
struct ThresholdGaussianLaw {
  double mean = 0.0;
  double sd = 1.0;
  double threshold = 0.0;
};

/// Conditional law of the treatment at one decision time.
using TreatmentLaw = std::variant<DiscreteLaw, GaussianLaw, PointMassLaw, ThresholdGaussianLaw>;

inline constexpr std::size_t kHermiteOrder = 21;

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Nodes and weights with sum_i w_i f(x_i) ~ E f(Z), Z ~ N(0, 1).
/// Exact for polynomials of degree < 2 * order.
const QuadratureRule& gauss_hermite(std::size_t order = kHermiteOrder);

inline double normal_pdf(double z) noexcept {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}
inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

bool is_continuous(const TreatmentLaw& law) noexcept;

/// Inverse-transform sample: discrete laws read draw.u, Gaussian-based laws
/// read draw.z.
double sample(const TreatmentLaw& law, const TreatmentDraw& draw);

/// Probability mass (discrete, point mass) or Lebesgue density (Gaussian).
/// Throws UnsupportedError for the mixed threshold law.
double density(const TreatmentLaw& law, double a);

/// d target / d reference evaluated at the observed treatment a. Throws
/// PositivityError when the target is not absolutely continuous against the
/// reference.
double density_ratio(const TreatmentLaw& target, const TreatmentLaw& reference, double a);

/// Tail part of the threshold law: integral over (threshold, inf) of
/// f(a) N(a; mean, sd^2) da. Throws NumericalError when the adaptive rule
/// does not reach its tolerance.
double threshold_tail_integral(const ThresholdGaussianLaw& law, const std::function<double(double)>& f);

/// E f(A) under the law: a finite sum, Gauss-Hermite for Gaussian laws, and
/// atom plus adaptive Gauss-Kronrod tail for the threshold law.
template <class F>
double integrate(const TreatmentLaw& law, F&& f) {
  if (const auto* d = std::get_if<DiscreteLaw>(&law)) {
    double s = 0.0;
    for (std::size_t k = 0; k < d->support.size(); ++k) {
      if (d->probs[k] != 0.0) s += d->probs[k] * f(d->support[k]);
    }
    return s;
  }
  if (const auto* g = std::get_if<GaussianLaw>(&law)) {
    const QuadratureRule& rule = gauss_hermite();
    double s = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      s += rule.weights[k] * f(g->mean + g->sd * rule.nodes[k]);
    }
    return s;
  }
  if (const auto* p = std::get_if<PointMassLaw>(&law)) return f(p->value);
  const auto& t = std::get<ThresholdGaussianLaw>(law);
  const double atom = normal_cdf((t.threshold - t.mean) / t.sd);
  return atom * f(t.threshold) + threshold_tail_integral(t, std::function<double(double)>(f));
}

std::string describe(const TreatmentLaw& law);

}  // namespace contregime
