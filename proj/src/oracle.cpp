#include "contregime/oracle.hpp"

#include <cmath>
#include <map>
#include <tuple>

#include "contregime/errors.hpp"
#include "contregime/parallel.hpp"

namespace contregime {

MonteCarlo summarize_sample(std::vector<double> values) {
  MonteCarlo mc;
  const auto n = static_cast<double>(values.size());
  if (values.empty()) {
    mc.mean = mc.se = std::nan("");
    return mc;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  mc.mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mc.mean) * (v - mc.mean);
  mc.se = values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  mc.values = std::move(values);
  return mc;
}

MonteCarlo simulate_counterfactual(const DgpSpec& spec, const RegimeSpec& g, const Partition& decisions,
                                   std::size_t n, std::uint64_t seed, unsigned threads) {
  validate(spec);
  const auto idx = subgrid_indices(decisions, *spec.fine_grid);
  const CounterRng rng(seed);
  const TreatmentPolicy policy = regime_policy(g, spec);
  const PathOptions world{.censoring = false, .terminal = true};
  std::vector<double> values(n);
  parallel_for(n, threads, [&](std::size_t i) {
    values[i] = simulate_outcome(spec, std::span(idx).first(idx.size() - 1), policy, rng, i, world);
  });
  return summarize_sample(std::move(values));
}

namespace {

struct ChainModel {
  const DgpSpec& spec;
  const RegimeSpec& g;
  std::vector<bool> is_decision;  // per fine index

  ChainModel(const DgpSpec& s, const RegimeSpec& regime, const Partition& decisions)
      : spec(s), g(regime), is_decision(s.fine_grid->size(), false) {
    if (spec.kind() != DgpKind::discrete_chain) {
      throw UnsupportedError("exact enumeration needs a discrete-chain spec");
    }
    validate(spec);
    const auto idx = subgrid_indices(decisions, *spec.fine_grid);
    for (std::size_t j = 0; j + 1 < idx.size(); ++j) is_decision[idx[j]] = true;
  }

  DiscreteLaw treatment_law(double l) const {
    const double s[1] = {l};
    TreatmentLaw law = regime_law(g, s, propensity_law(spec, s));
    if (const auto* p = std::get_if<PointMassLaw>(&law)) return DiscreteLaw{{p->value}, {1.0}};
    if (const auto* d = std::get_if<DiscreteLaw>(&law)) return *d;
    throw UnsupportedError("exact enumeration needs a discrete regime law, got " + describe(law));
  }

  double terminal(double l, double a) const { return spec.terminal ? spec.terminal->at(l, a) : 0.0; }
};

}  // namespace

double enumerate_exact(const DgpSpec& spec, const RegimeSpec& g, const Partition& decisions) {
  const ChainModel model(spec, g, decisions);
  const std::size_t steps = spec.fine_grid->steps();
  const ChainParams& c = spec.chain();
  // incoming(m, l, a): value at fine index m before any draw there, with a the
  // treatment carried in; after(m, l, a): value once the treatment at m is set.
  std::map<std::tuple<std::size_t, double, double>, double> memo;
  std::function<double(std::size_t, double, double)> incoming;
  auto after = [&](std::size_t m, double l, double a) {
    const double h = model.terminal(l, a);
    const double p = chain_step_prob(c, l, a);
    const double cont = p * incoming(m + 1, 1.0, a) + (1.0 - p) * incoming(m + 1, 0.0, a);
    return h * l + (1.0 - h) * cont;
  };
  incoming = [&](std::size_t m, double l, double a) -> double {
    if (m == steps) return l;
    const auto key = std::make_tuple(m, l, model.is_decision[m] ? 0.0 : a);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    double v = 0.0;
    if (model.is_decision[m]) {
      const DiscreteLaw law = model.treatment_law(l);
      for (std::size_t k = 0; k < law.support.size(); ++k) {
        if (law.probs[k] != 0.0) v += law.probs[k] * after(m, l, law.support[k]);
      }
    } else {
      v = after(m, l, a);
    }
    memo.emplace(key, v);
    return v;
  };
  return (1.0 - c.baseline_prob) * incoming(0, 0.0, 0.0) + c.baseline_prob * incoming(0, 1.0, 0.0);
}

double enumerate_paths(const DgpSpec& spec, const RegimeSpec& g, const Partition& decisions,
                       std::size_t max_binary_steps) {
  const ChainModel model(spec, g, decisions);
  const std::size_t steps = spec.fine_grid->steps();
  std::size_t binary = steps;
  for (bool d : model.is_decision) binary += d ? 1 : 0;
  if (spec.terminal) binary += steps;
  if (binary > max_binary_steps) {
    throw ResourceError("path expansion needs " + std::to_string(binary) +
                        " binary steps, budget is " + std::to_string(max_binary_steps));
  }
  const ChainParams& c = spec.chain();
  std::function<double(std::size_t, double, double, double)> walk =
      [&](std::size_t m, double l, double a, double prob) -> double {
    if (prob == 0.0) return 0.0;
    if (m == steps) return prob * l;
    auto step = [&](double act) {
      double total = 0.0;
      const double h = model.terminal(l, act);
      if (h > 0.0) total += prob * h * l;
      const double p = chain_step_prob(c, l, act);
      total += walk(m + 1, 1.0, act, prob * (1.0 - h) * p);
      total += walk(m + 1, 0.0, act, prob * (1.0 - h) * (1.0 - p));
      return total;
    };
    if (!model.is_decision[m]) return step(a);
    const DiscreteLaw law = model.treatment_law(l);
    double total = 0.0;
    for (std::size_t k = 0; k < law.support.size(); ++k) {
      const double keep = prob;
      prob = keep * law.probs[k];
      total += step(law.support[k]);
      prob = keep;
    }
    return total;
  };
  return walk(0, 0.0, 0.0, 1.0 - c.baseline_prob) + walk(0, 1.0, 0.0, c.baseline_prob);
}

bool ConvergenceTable::ok() const {
  for (const auto& r : rows) {
    if (!r.ok) return false;
  }
  return true;
}

ConvergenceTable mesh_convergence(const DgpSpec& spec, const RegimeSpec& g,
                                  const std::vector<std::size_t>& k_schedule, std::size_t n,
                                  std::uint64_t seed, unsigned threads, double threshold_se) {
  validate(spec);
  if (k_schedule.empty()) throw InvalidArgument("mesh schedule is empty");
  for (std::size_t i = 1; i < k_schedule.size(); ++i) {
    if (k_schedule[i] < k_schedule[i - 1]) throw InvalidArgument("mesh schedule must not decrease");
  }
  const std::size_t m = k_schedule.size();
  std::vector<std::vector<std::size_t>> indices;
  for (std::size_t K : k_schedule) {
    const auto idx = subgrid_indices(make_partition(spec.fine_grid->horizon(), K), *spec.fine_grid);
    indices.emplace_back(idx.begin(), idx.end() - 1);
  }
  const CounterRng rng(seed);
  const TreatmentPolicy policy = regime_policy(g, spec);
  const PathOptions world{.censoring = false, .terminal = true};
  std::vector<double> values(n * m);
  parallel_for(n, threads, [&](std::size_t i) {
    for (std::size_t k = 0; k < m; ++k) {
      values[i * m + k] = simulate_outcome(spec, indices[k], policy, rng, i, world);
    }
  });

  ConvergenceTable table;
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = values[i * m + k];
    const MonteCarlo mc = summarize_sample(std::move(col));
    ConvergenceRow row{k_schedule[k], mc.mean, mc.se, std::nan(""), std::nan(""), true};
    if (k > 0) {
      std::vector<double> diff(n);
      for (std::size_t i = 0; i < n; ++i) diff[i] = values[i * m + k] - values[i * m + k - 1];
      const MonteCarlo d = summarize_sample(std::move(diff));
      row.delta_prev = std::abs(mc.mean - table.rows.back().estimate);
      row.delta_se = d.se;
      if (k > 1) {
        const ConvergenceRow& prev = table.rows.back();
        row.ok = row.delta_prev <=
                 prev.delta_prev + threshold_se * std::hypot(row.delta_se, prev.delta_se);
      }
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace contregime
