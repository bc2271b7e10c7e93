#include "contregime/treatment_law.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

#include "contregime/errors.hpp"
#include "contregime/format.hpp"

namespace contregime {

namespace {

// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
QuadratureRule build_hermite(std::size_t order) {
  const auto n = static_cast<Eigen::Index>(order);
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  for (Eigen::Index k = 0; k < n; ++k) {
    rule.nodes[static_cast<std::size_t>(k)] = eig.eigenvalues()(k);
    const double v0 = eig.eigenvectors()(0, k);
    rule.weights[static_cast<std::size_t>(k)] = v0 * v0;
  }
  // Symmetrize: removes eigen-solver round-off so odd moments vanish.
  for (std::size_t k = 0; k < order / 2; ++k) {
    const std::size_t m = order - 1 - k;
    const double x = 0.5 * (rule.nodes[m] - rule.nodes[k]);
    const double w = 0.5 * (rule.weights[m] + rule.weights[k]);
    rule.nodes[k] = -x;
    rule.nodes[m] = x;
    rule.weights[k] = rule.weights[m] = w;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
  double total = 0.0;
  for (double w : rule.weights) total += w;
  for (double& w : rule.weights) w /= total;
  return rule;
}

}  // namespace

const QuadratureRule& gauss_hermite(std::size_t order) {
  if (order == kHermiteOrder) {
    static const QuadratureRule rule = build_hermite(kHermiteOrder);
    return rule;
  }
  static std::mutex mu;
  static std::map<std::size_t, QuadratureRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, build_hermite(order)).first;
  return it->second;
}

bool is_continuous(const TreatmentLaw& law) noexcept {
  return std::holds_alternative<GaussianLaw>(law) || std::holds_alternative<ThresholdGaussianLaw>(law);
}

double sample(const TreatmentLaw& law, const TreatmentDraw& draw) {
  if (const auto* d = std::get_if<DiscreteLaw>(&law)) {
    double cum = 0.0;
    for (std::size_t k = 0; k + 1 < d->support.size(); ++k) {
      cum += d->probs[k];
      if (draw.u < cum) return d->support[k];
    }
    return d->support.back();
  }
  if (const auto* g = std::get_if<GaussianLaw>(&law)) return g->mean + g->sd * draw.z;
  if (const auto* p = std::get_if<PointMassLaw>(&law)) return p->value;
  const auto& t = std::get<ThresholdGaussianLaw>(law);
  return std::max(t.mean + t.sd * draw.z, t.threshold);
}

namespace {

double discrete_mass(const DiscreteLaw& d, double a) {
  for (std::size_t k = 0; k < d.support.size(); ++k) {
    if (d.support[k] == a) return d.probs[k];
  }
  return 0.0;
}

}  // namespace

double density(const TreatmentLaw& law, double a) {
  if (const auto* d = std::get_if<DiscreteLaw>(&law)) return discrete_mass(*d, a);
  if (const auto* g = std::get_if<GaussianLaw>(&law)) return normal_pdf((a - g->mean) / g->sd) / g->sd;
  if (const auto* p = std::get_if<PointMassLaw>(&law)) return a == p->value ? 1.0 : 0.0;
  throw UnsupportedError("the threshold law has no density against a single dominating measure");
}

double density_ratio(const TreatmentLaw& target, const TreatmentLaw& reference, double a) {
  if (const auto* ref = std::get_if<DiscreteLaw>(&reference)) {
    if (is_continuous(target)) {
      throw PositivityError("continuous intervention against a discrete treatment law: " +
                            describe(target));
    }
    std::vector<double> atoms;
    if (const auto* d = std::get_if<DiscreteLaw>(&target)) {
      for (std::size_t k = 0; k < d->support.size(); ++k) {
        if (d->probs[k] > 0.0) atoms.push_back(d->support[k]);
      }
    } else {
      atoms.push_back(std::get<PointMassLaw>(target).value);
    }
    for (double atom : atoms) {
      if (discrete_mass(*ref, atom) <= 0.0) {
        throw PositivityError("intervention puts mass on treatment " + format_double(atom) +
                              " which the observed law never assigns");
      }
    }
    const double num = density(target, a);
    if (num == 0.0) return 0.0;
    return num / discrete_mass(*ref, a);
  }
  if (const auto* ref = std::get_if<GaussianLaw>(&reference)) {
    if (const auto* g = std::get_if<GaussianLaw>(&target)) {
      const double zt = (a - g->mean) / g->sd;
      const double zr = (a - ref->mean) / ref->sd;
      return (ref->sd / g->sd) * std::exp(0.5 * (zr * zr - zt * zt));
    }
    throw PositivityError("intervention " + describe(target) +
                          " has atoms and is not absolutely continuous against the observed "
                          "Gaussian treatment law");
  }
  throw InvalidArgument("reference treatment law must be discrete or Gaussian");
}

double threshold_tail_integral(const ThresholdGaussianLaw& law,
                               const std::function<double(double)>& f) {
  const double z0 = (law.threshold - law.mean) / law.sd;
  if (z0 > 40.0) return 0.0;
  double error = 0.0;
  auto integrand = [&](double z) { return f(law.mean + law.sd * z) * normal_pdf(z); };
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, z0, std::numeric_limits<double>::infinity(), 15, 1e-11, &error);
  if (!std::isfinite(value) || error > 1e-8 * std::max(1.0, std::abs(value))) {
    throw NumericalError("threshold tail quadrature did not converge (threshold " +
                         format_double(law.threshold) + ", mean " + format_double(law.mean) +
                         ", error estimate " + format_double(error) + ")");
  }
  return value;
}

std::string describe(const TreatmentLaw& law) {
  std::ostringstream os;
  if (const auto* d = std::get_if<DiscreteLaw>(&law)) {
    os << "discrete{";
    for (std::size_t k = 0; k < d->support.size(); ++k) {
      os << (k ? ", " : "") << format_double(d->support[k]) << ":" << format_double(d->probs[k]);
    }
    os << "}";
  } else if (const auto* g = std::get_if<GaussianLaw>(&law)) {
    os << "normal(" << format_double(g->mean) << ", " << format_double(g->sd) << ")";
  } else if (const auto* p = std::get_if<PointMassLaw>(&law)) {
    os << "point_mass(" << format_double(p->value) << ")";
  } else {
    const auto& t = std::get<ThresholdGaussianLaw>(law);
    os << "max(normal(" << format_double(t.mean) << ", " << format_double(t.sd) << "), "
       << format_double(t.threshold) << ")";
  }
  return os.str();
}

}  // namespace contregime
