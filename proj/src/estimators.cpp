#include "contregime/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include "contregime/errors.hpp"
#include "contregime/oracle.hpp"
#include "contregime/parallel.hpp"
#include "contregime/regression.hpp"

namespace contregime {

namespace {

struct Context {
  const ValueProcess& H;
  const NuisanceSet& nuis;
  const RegimeSpec& g;
  std::vector<std::size_t> idx;

  Context(const ValueProcess& process, const NuisanceSet& n, const RegimeSpec& regime, const Partition& decisions)
      : H(process), nuis(n), g(regime), idx(subgrid_indices(decisions, *n.truth.fine_grid)) {
    if (H.K != decisions.steps()) {
      throw InvalidArgument("value process has " + std::to_string(H.K) + " decisions, partition has " +
                            std::to_string(decisions.steps()));
    }
  }

  std::size_t K() const { return idx.size() - 1; }

  double v(std::size_t j, double l) const {
    if (H.v) return H.v(j, l);
    const double s[1] = {l};
    const TreatmentLaw law = regime_law(g, s, nuis.propensity.law(j, s));
    return integrate(law, [&](double a) { return H.h(j, l, a); });
  }

  // H(t_j) for j < K and V(t_j) for j <= K along one subject.
  void along(const DecisionPath& p, std::vector<double>& hs, std::vector<double>& vs) const {
    const std::size_t K = this->K();
    hs.assign(K, 0.0);
    vs.assign(K + 1, 0.0);
    for (std::size_t j = 0; j < K; ++j) {
      if (H.absorb_at_death && !p.alive_at(idx[j])) {
        hs[j] = vs[j] = p.nu;
      } else {
        hs[j] = H.h(j, p.l[j], p.a[j]);
        vs[j] = v(j, p.l[j]);
      }
    }
    vs[K] = p.nu;
  }
};

void check_cohort(const Cohort& cohort, const WeightProcess& Q, std::size_t K) {
  if (Q.n != cohort.size() || Q.K != K) {
    throw InvalidArgument("weight process does not match the cohort and partition");
  }
}

template <class Term>
std::vector<double> per_subject(const Context& ctx, const Cohort& cohort, unsigned threads, Term term) {
  std::vector<double> out(cohort.size());
  parallel_for(cohort.size(), threads, [&](std::size_t i) {
    const DecisionPath p = decision_path(cohort[i], ctx.idx);
    std::vector<double> hs, vs;
    ctx.along(p, hs, vs);
    out[i] = term(i, p, hs, vs);
  });
  return out;
}

// ---- exact recursion on a chain -------------------------------------------

ValueProcess exact_chain(const NuisanceSet& nuis, const RegimeSpec& g, std::span<const std::size_t> idx) {
  const DgpSpec& spec = *nuis.outcome.spec;
  const ChainParams c = spec.chain();
  const std::optional<HazardSpec> terminal = spec.terminal;
  const std::size_t K = idx.size() - 1;
  auto tables = std::make_shared<std::vector<std::array<double, 2>>>(K + 1);
  (*tables)[K] = {0.0, 1.0};
  std::vector<std::size_t> bounds(idx.begin(), idx.end());

  auto h = [c, terminal, tables, bounds](std::size_t j, double l, double a) {
    auto step = [&](double from, const std::array<double, 2>& w) {
      const double haz = terminal ? terminal->at(from, a) : 0.0;
      const double p = chain_step_prob(c, from, a);
      return haz * from + (1.0 - haz) * (p * w[1] + (1.0 - p) * w[0]);
    };
    std::array<double, 2> w = (*tables)[j + 1];
    for (std::size_t m = bounds[j + 1] - 1; m > bounds[j]; --m) w = {step(0.0, w), step(1.0, w)};
    return step(l, w);
  };

  ValueProcess H;
  H.K = K;
  H.source = "exact-recursion(" + nuis.outcome.label + ")";
  H.h = h;
  for (std::size_t j = K; j-- > 0;) {
    for (int l = 0; l < 2; ++l) {
      const double s[1] = {static_cast<double>(l)};
      const TreatmentLaw law = regime_law(g, s, nuis.propensity.law(j, s));
      (*tables)[j][static_cast<std::size_t>(l)] = integrate(law, [&](double a) { return h(j, s[0], a); });
    }
  }
  H.v = [tables](std::size_t j, double l) {
    if (l == 0.0) return (*tables)[j][0];
    if (l == 1.0) return (*tables)[j][1];
    throw DomainError("chain covariate must be 0 or 1");
  };
  H.initial = integrate(baseline_law(spec), [&](double l) { return H.v(0, l); });
  return H;
}

// ---- exact recursion for a linear-Gaussian diffusion ------------------------

constexpr std::size_t kGridPoints = 801;
constexpr double kGridHalfWidth = 8.0;

double interpolate(const std::vector<double>& values, double x) {
  const double step = 2.0 * kGridHalfWidth / static_cast<double>(kGridPoints - 1);
  const double pos = (x + kGridHalfWidth) / step;
  const auto k = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(kGridPoints - 2)));
  const double frac = pos - static_cast<double>(k);
  return values[k] + frac * (values[k + 1] - values[k]);
}

ValueProcess exact_diffusion(const NuisanceSet& nuis, const RegimeSpec& g, std::span<const std::size_t> idx,
                             unsigned threads) {
  const DgpSpec& spec = *nuis.outcome.spec;
  if (spec.terminal) {
    throw UnsupportedError("exact value recursion does not support terminal hazards on a diffusion");
  }
  const DiffusionParams d = spec.diffusion();
  const Partition& fine = *spec.fine_grid;
  const std::size_t K = idx.size() - 1;
  std::vector<GaussianInterval> intervals;
  for (std::size_t j = 0; j < K; ++j) {
    std::vector<double> widths;
    for (std::size_t m = idx[j]; m < idx[j + 1]; ++m) widths.push_back(fine[m + 1] - fine[m]);
    intervals.push_back(diffusion_interval(d, widths));
  }
  // grids[j] holds V(t_j) on the grid for j < K; V(t_K) is the identity
  auto grids = std::make_shared<std::vector<std::vector<double>>>(K);
  auto h = [intervals, grids, K](std::size_t j, double l, double a) {
    const GaussianInterval& gi = intervals[j];
    const double mean = gi.mean(l, a);
    if (j + 1 == K) return mean;
    const std::vector<double>& next = (*grids)[j + 1];
    if (gi.variance == 0.0) return interpolate(next, mean);
    const double sd = std::sqrt(gi.variance);
    const QuadratureRule& rule = gauss_hermite();
    double s = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) s += rule.weights[k] * interpolate(next, mean + sd * rule.nodes[k]);
    return s;
  };
  auto v_direct = [&](std::size_t j, double l) {
    const double s[1] = {l};
    const TreatmentLaw law = regime_law(g, s, nuis.propensity.law(j, s));
    return integrate(law, [&](double a) { return h(j, l, a); });
  };
  for (std::size_t j = K; j-- > 1;) {
    std::vector<double>& grid = (*grids)[j];
    grid.resize(kGridPoints);
    const double step = 2.0 * kGridHalfWidth / static_cast<double>(kGridPoints - 1);
    parallel_for(kGridPoints, threads, [&](std::size_t k) {
      grid[k] = v_direct(j, -kGridHalfWidth + step * static_cast<double>(k));
    });
  }
  ValueProcess H;
  H.K = K;
  H.source = "exact-recursion(" + nuis.outcome.label + ")";
  H.h = h;
  H.initial = integrate(baseline_law(spec), [&](double l) { return v_direct(0, l); });
  return H;
}

// ---- sequential regression -------------------------------------------------

ValueProcess fitted(const NuisanceSet& nuis, const RegimeSpec& g, const Partition& decisions,
                    const Cohort& cohort, unsigned threads) {
  const bool chain = nuis.truth.kind() == DgpKind::discrete_chain;
  const std::size_t K = decisions.steps();
  const auto idx = subgrid_indices(decisions, *nuis.truth.fine_grid);
  auto coefs = std::make_shared<std::vector<Eigen::VectorXd>>(K);
  const Eigen::Index p = chain ? 4 : 3;
  auto features = [chain](double l, double a, auto&& row) {
    row(0) = 1.0;
    row(1) = l;
    row(2) = a;
    if (chain) row(3) = l * a;
  };

  ValueProcess H;
  H.K = K;
  H.source = chain ? "fitted-regression([1,L,A,LA])" : "fitted-regression([1,L,A])";
  H.h = [coefs, chain, p](std::size_t j, double l, double a) {
    const Eigen::VectorXd& b = (*coefs)[j];
    double s = b[0] + b[1] * l + b[2] * a;
    if (chain && p == 4) s += b[3] * l * a;
    return s;
  };

  std::vector<DecisionPath> paths(cohort.size());
  parallel_for(cohort.size(), threads, [&](std::size_t i) { paths[i] = decision_path(cohort[i], idx); });
  const Context ctx(H, nuis, g, decisions);
  std::vector<double> pseudo(cohort.size());
  for (std::size_t j = K; j-- > 0;) {
    parallel_for(cohort.size(), threads, [&](std::size_t i) {
      const DecisionPath& path = paths[i];
      if (j + 1 == K || !path.alive_at(idx[j + 1])) pseudo[i] = path.nu;
      else pseudo[i] = path.uncensored_at(idx[j + 1]) ? ctx.v(j + 1, path.l[j + 1]) : 0.0;
    });
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (paths[i].alive_at(idx[j]) && paths[i].uncensored_at(idx[j + 1])) rows.push_back(i);
    }
    if (rows.empty()) throw NumericalError("no subjects at risk for the outcome regression at decision " + std::to_string(j));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), p);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      features(paths[rows[r]].l[j], paths[rows[r]].a[j], [&](Eigen::Index c) -> double& { return x(row, c); });
      y[row] = pseudo[rows[r]];
    }
    (*coefs)[j] = least_squares(x, y).coef;
  }
  return H;
}

}  // namespace

ValueProcess build_H(const NuisanceSet& nuis, const RegimeSpec& g, const Partition& decisions,
                     const Cohort* cohort, unsigned threads) {
  const auto idx = subgrid_indices(decisions, *nuis.truth.fine_grid);
  if (nuis.outcome.provenance == Provenance::fitted) {
    if (!cohort || cohort->empty()) throw InvalidArgument("fitted value process needs a cohort");
    return fitted(nuis, g, decisions, *cohort, threads);
  }
  if (nuis.outcome.spec->kind() == DgpKind::discrete_chain) return exact_chain(nuis, g, idx);
  return exact_diffusion(nuis, g, idx, threads);
}

WeightProcess WeightProcess::constant(std::size_t n, std::size_t K, double value) {
  WeightProcess Q;
  Q.n = n;
  Q.K = K;
  Q.q.assign(n * (K + 1), value);
  return Q;
}

WeightProcess build_Q(const NuisanceSet& nuis, const RegimeSpec& g, const Partition& decisions,
                      const Cohort& cohort, const WeightOptions& options) {
  const auto idx = subgrid_indices(decisions, *nuis.truth.fine_grid);
  const std::size_t K = idx.size() - 1;
  WeightProcess Q = WeightProcess::constant(cohort.size(), K, 0.0);
  Q.cap = options.cap;
  std::vector<std::size_t> capped(cohort.size(), 0);
  parallel_for(cohort.size(), options.threads, [&](std::size_t i) {
    const Trajectory& tr = cohort[i];
    const DecisionPath p = decision_path(tr, idx);
    double ratio = 1.0;
    double survival = 1.0;
    std::size_t m = 0;  // next fine step whose censoring hazard is pending
    for (std::size_t j = 0; j < K; ++j) {
      if (!p.uncensored_at(idx[j + 1])) break;  // remaining entries stay 0
      if (p.alive_at(idx[j])) {
        const double s[1] = {p.l[j]};
        ratio *= density_ratio(g, s, nuis.propensity.law(j, s), p.a[j]);
      }
      if (nuis.censoring.active()) {
        for (; m < idx[j + 1]; ++m) {
          if (m + 1 >= p.death) break;
          survival *= 1.0 - nuis.censoring.hazard(tr.covariate_at(m)[0], tr.treatment_at(m)[0]);
        }
      }
      double q = ratio / survival;
      if (options.cap > 0.0 && q > options.cap) {
        q = options.cap;
        ++capped[i];
      }
      Q.at(i, j) = q;
    }
    Q.at(i, K) = Q.at(i, K - 1);
  });
  for (std::size_t c : capped) Q.capped += c;
  return Q;
}

nlohmann::json to_json(const Estimate& e) {
  nlohmann::json j;
  j["point"] = e.point;
  j["se"] = e.se;
  j["n"] = e.n;
  j["K"] = e.K;
  j["diagnostics"] = e.diagnostics;
  return j;
}

namespace {

void weight_diagnostics(const WeightProcess& Q, Estimate& e) {
  double sum = 0.0, sum2 = 0.0, max = 0.0;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < Q.n; ++i) {
    const double w = Q.at(i, Q.K);
    sum += w;
    sum2 += w * w;
    max = std::max(max, w);
    zeros += w == 0.0 ? 1 : 0;
  }
  e.diagnostics["ess"] = sum2 > 0.0 ? sum * sum / sum2 : 0.0;
  e.diagnostics["max_weight"] = max;
  e.diagnostics["zero_weight_share"] = Q.n ? static_cast<double>(zeros) / static_cast<double>(Q.n) : 0.0;
  e.diagnostics["capped"] = static_cast<double>(Q.capped);
}

}  // namespace

std::vector<double> dr_terms(const ValueProcess& H, const WeightProcess& Q, const RegimeSpec& g,
                             const NuisanceSet& nuis, const Partition& decisions, const Cohort& cohort,
                             unsigned threads) {
  const Context ctx(H, nuis, g, decisions);
  check_cohort(cohort, Q, ctx.K());
  const std::size_t K = ctx.K();
  return per_subject(ctx, cohort, threads, [&](std::size_t i, const DecisionPath& p, const auto& hs, const auto& vs) {
    double s = 0.0;
    for (std::size_t j = 0; j < K; ++j) s += Q.at(i, j) * hs[j] - Q.before(i, j) * vs[j];
    return Q.at(i, K) * p.nu - s;
  });
}

Estimate gcomp_estimate(const ValueProcess& H, const NuisanceSet& nuis, const RegimeSpec& g,
                        const Partition& decisions, const Cohort& cohort, const WeightProcess* Q,
                        unsigned threads) {
  Estimate e;
  e.n = cohort.size();
  e.K = decisions.steps();
  const Context ctx(H, nuis, g, decisions);
  if (H.initial) {
    e.point = *H.initial;
    e.se = 0.0;
    return e;
  }
  std::vector<double> v0(cohort.size());
  parallel_for(cohort.size(), threads, [&](std::size_t i) {
    v0[i] = ctx.v(0, cohort[i].covariate_at(ctx.idx[0])[0]);
  });
  const MonteCarlo mc = summarize_sample(std::move(v0));
  e.point = mc.mean;
  e.se = mc.se;
  e.diagnostics["se_influence_curve"] = 0.0;
  if (Q && !g.depends_on_actual()) {
    const MonteCarlo ic = summarize_sample(dr_terms(H, *Q, g, nuis, decisions, cohort, threads));
    e.se = ic.se;
    e.diagnostics["se_influence_curve"] = 1.0;
  }
  return e;
}

Estimate ipw_estimate(const WeightProcess& Q, const Cohort& cohort) {
  if (Q.n != cohort.size()) throw InvalidArgument("weight process does not match the cohort");
  std::vector<double> terms(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) terms[i] = Q.at(i, Q.K) * cohort[i].outcome;
  const MonteCarlo mc = summarize_sample(std::move(terms));
  Estimate e{mc.mean, mc.se, cohort.size(), Q.K, {}};
  weight_diagnostics(Q, e);
  return e;
}

Estimate dr_estimate(const ValueProcess& H, const WeightProcess& Q, const RegimeSpec& g,
                     const NuisanceSet& nuis, const Partition& decisions, const Cohort& cohort,
                     unsigned threads) {
  if (g.depends_on_actual()) {
    throw ScopeError("the doubly robust functional is defined for prespecified regimes only; " +
                     g.describe() + " depends on the observed treatment law");
  }
  const MonteCarlo mc = summarize_sample(dr_terms(H, Q, g, nuis, decisions, cohort, threads));
  Estimate e{mc.mean, mc.se, cohort.size(), Q.K, {}};
  weight_diagnostics(Q, e);
  return e;
}

Residual ee_residual_gcomp(const ValueProcess& H, const WeightProcess& Q, const RegimeSpec& g,
                           const NuisanceSet& nuis, const Partition& decisions, const Cohort& cohort,
                           unsigned threads) {
  const Context ctx(H, nuis, g, decisions);
  check_cohort(cohort, Q, ctx.K());
  const std::size_t K = ctx.K();
  auto terms = per_subject(ctx, cohort, threads, [&](std::size_t i, const DecisionPath&, const auto& hs, const auto& vs) {
    double s = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      const double q = Q.at(i, j);
      if (q != 0.0) s += q * (vs[j + 1] - hs[j]);
    }
    return s;
  });
  const MonteCarlo mc = summarize_sample(std::move(terms));
  return {mc.mean, mc.se, cohort.size()};
}

Residual ee_residual_ipw(const ValueProcess& H, const WeightProcess& Q, const RegimeSpec& g,
                         const NuisanceSet& nuis, const Partition& decisions, const Cohort& cohort,
                         unsigned threads) {
  const Context ctx(H, nuis, g, decisions);
  check_cohort(cohort, Q, ctx.K());
  const std::size_t K = ctx.K();
  auto terms = per_subject(ctx, cohort, threads, [&](std::size_t i, const DecisionPath& p, const auto& hs, const auto& vs) {
    double s = 0.0;
    for (std::size_t j = 0; j < K; ++j) s += Q.at(i, j) * hs[j] - Q.before(i, j) * vs[j];
    return s + (Q.at(i, K) - Q.at(i, K - 1)) * p.nu;
  });
  const MonteCarlo mc = summarize_sample(std::move(terms));
  return {mc.mean, mc.se, cohort.size()};
}

}  // namespace contregime
