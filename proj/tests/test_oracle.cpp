#include <doctest.h>

#include <cmath>

#include "contregime/errors.hpp"
#include "contregime/oracle.hpp"
#include "contregime/regimes.hpp"
#include "support.hpp"

using namespace contregime;
using testsupport::within;

namespace {

struct Named {
  RegimeSpec g;
  testsupport::BinaryRule rule;  // empty when the treatment is not binary
};

std::vector<Named> binary_regimes() {
  const auto pi = [](double l) { return 0.2 + 0.6 * l; };
  return {
      {null_regime(), pi},
      {always_treat(), [](double) { return 1.0; }},
      {never_treat(), [](double) { return 0.0; }},
      {point_mass([](std::span<const double> s) { return 1.0 - s[0]; }, "A=1-L"), [](double l) { return 1.0 - l; }},
      {deterministic_dynamic(0.5, 1.0, 0.0), [](double l) { return l >= 0.5 ? 1.0 : 0.0; }},
      {stochastic_bernoulli(0.3, 0.4), [](double l) { return 0.3 + 0.4 * l; }},
      {incremental(2.0), [pi](double l) { return 2 * pi(l) / (2 * pi(l) + 1 - pi(l)); }},
      {incremental(1.0), pi},
      {threshold(0.5), {}},
  };
}

}  // namespace

TEST_CASE("exact enumeration matches independent recursions") {
  const DgpSpec spec = bin3();
  const Partition d = *spec.fine_grid;
  CHECK(std::abs(enumerate_exact(spec, always_treat(), d) - 0.7085) < 1e-12);
  CHECK(std::abs(enumerate_exact(spec, never_treat(), d) - 0.2915) < 1e-12);
  CHECK(std::abs(enumerate_exact(spec, null_regime(), d) - 0.5) < 1e-12);
  CHECK(std::abs(enumerate_exact(spec, incremental(1.0), d) - 0.5) < 1e-12);

  for (const auto& [g, rule] : binary_regimes()) {
    INFO(g.describe());
    const double exact = enumerate_exact(spec, g, d);
    CHECK(std::abs(enumerate_paths(spec, g, d) - exact) < 1e-12);
    if (!rule) continue;
    CHECK(std::abs(testsupport::chain_forward(spec.chain(), rule, 3) - exact) < 1e-12);
    CHECK(std::abs(testsupport::chain_brute_force(spec.chain(), rule, 3) - exact) < 1e-12);
  }
}

TEST_CASE("threshold on a binary treatment against a hand sum") {
  // max(A, 0.5): treated subjects stay at 1, untreated get 0.5
  ChainParams p;
  double q = p.baseline_prob;
  for (int k = 0; k < 3; ++k) {
    double next = 0.0;
    for (double l : {0.0, 1.0}) {
      const double pl = l == 1.0 ? q : 1.0 - q;
      const double pa = 0.2 + 0.6 * l;
      next += pl * (pa * (0.2 + 0.3 + 0.3 * l) + (1 - pa) * (0.2 + 0.15 + 0.3 * l));
    }
    q = next;
  }
  const DgpSpec spec = bin3();
  CHECK(std::abs(enumerate_exact(spec, threshold(0.5), *spec.fine_grid) - q) < 1e-12);
}

TEST_CASE("enumeration limits") {
  CHECK_THROWS_AS(enumerate_exact(ou1(), shift(0.5), make_partition(1.0, 4)), UnsupportedError);
  DgpSpec long_chain = bin3();
  long_chain.fine_grid = std::make_shared<const Partition>(make_partition(10.0, 10));
  const Partition d = *long_chain.fine_grid;
  CHECK_THROWS_AS(enumerate_paths(long_chain, always_treat(), d), ResourceError);
  CHECK_NOTHROW(enumerate_paths(long_chain, always_treat(), make_partition(10.0, 10), 20));
  // backward induction has no path budget
  CHECK(std::isfinite(enumerate_exact(long_chain, null_regime(), d)));
}

TEST_CASE("counterfactual simulation hits the exact values") {
  const DgpSpec spec = bin3();
  const Partition d = *spec.fine_grid;
  const MonteCarlo always = simulate_counterfactual(spec, always_treat(), d, 100000, 21);
  CHECK(within(always.mean, 0.7085, always.se));
  const MonteCarlo never = simulate_counterfactual(spec, never_treat(), d, 100000, 21);
  CHECK(within(never.mean, 0.2915, never.se));
  const MonteCarlo null = simulate_counterfactual(spec, null_regime(), d, 100000, 21);
  CHECK(within(null.mean, 0.5, null.se));

  for (const auto& [g, rule] : binary_regimes()) {
    INFO(g.describe());
    const MonteCarlo mc = simulate_counterfactual(spec, g, d, 50000, 33);
    CHECK(within(mc.mean, enumerate_exact(spec, g, d), mc.se));
  }
}

TEST_CASE("null counterfactual equals the observed mean") {
  const DgpSpec spec = cens3();
  const Partition d = *spec.fine_grid;
  const MonteCarlo cf = simulate_counterfactual(spec, null_regime(), d, 50000, 4);
  const Cohort observed = simulate_observed(bin3(), d, 50000, 4);
  std::vector<double> nu;
  for (const auto& tr : observed) nu.push_back(tr.outcome);
  const MonteCarlo obs = summarize_sample(nu);
  CHECK(within(cf.mean, obs.mean, std::hypot(cf.se, obs.se)));
}

TEST_CASE("counterfactuals do not depend on the thread count") {
  const DgpSpec spec = ou1();
  const Partition d = make_partition(1.0, 8);
  const MonteCarlo a = simulate_counterfactual(spec, shift(0.5), d, 2000, 9, 1);
  const MonteCarlo b = simulate_counterfactual(spec, shift(0.5), d, 2000, 9, 3);
  CHECK(a.values == b.values);
  CHECK(a.mean == b.mean);
  CHECK(a.se == b.se);
}

TEST_CASE("mesh convergence tables") {
  SUBCASE("fixed decisions on the chain repeat the same value") {
    const ConvergenceTable t = mesh_convergence(bin3(), always_treat(), {3, 3, 3}, 20000, 2);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[1].estimate == t.rows[0].estimate);
    CHECK(t.rows[2].estimate == t.rows[0].estimate);
    CHECK(t.rows[1].delta_prev == 0.0);
    CHECK(std::isnan(t.rows[0].delta_prev));
    CHECK(t.ok());
  }
  SUBCASE("null regime on OU1 tracks the observed mean") {
    const DgpSpec spec = ou1();
    const ConvergenceTable t = mesh_convergence(spec, null_regime(), {4, 8, 16}, 20000, 6);
    for (const auto& row : t.rows) {
      const Cohort obs = simulate_observed(spec, make_partition(1.0, row.K), 20000, 6);
      std::vector<double> nu;
      for (const auto& tr : obs) nu.push_back(tr.outcome);
      const MonteCarlo m = summarize_sample(nu);
      CHECK(within(row.estimate, m.mean, std::hypot(row.se, m.se)));
    }
  }
  SUBCASE("schedule validation") {
    CHECK_THROWS_AS(mesh_convergence(bin3(), null_regime(), {3, 1}, 10, 1), InvalidArgument);
    CHECK_THROWS_AS(mesh_convergence(ou1(), null_regime(), {3}, 10, 1), InvalidArgument);
  }
}

TEST_CASE("summaries of samples") {
  const MonteCarlo m = summarize_sample({1.0, 2.0, 3.0, 4.0});
  CHECK(m.mean == 2.5);
  CHECK(m.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)).epsilon(1e-15));
}
