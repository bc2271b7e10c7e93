#include <doctest.h>

#include <cmath>

#include "contregime/errors.hpp"
#include "contregime/oracle.hpp"
#include "contregime/regimes.hpp"
#include "support.hpp"

using namespace contregime;

namespace {

TreatmentLaw bernoulli(double p) { return DiscreteLaw{{0.0, 1.0}, {1.0 - p, p}}; }

const double kL1[1] = {1.0};
const double kL0[1] = {0.0};

}  // namespace

TEST_CASE("always-treat draws and ratios") {
  const RegimeSpec g = always_treat();
  const CounterRng rng(5);
  for (std::uint64_t i = 0; i < 100; ++i) {
    const TreatmentDraw d = rng.draw(i, 0, DrawRole::treatment);
    CHECK(sample_regime(g, kL1, bernoulli(0.8), d) == 1.0);
    CHECK(sample_regime(g, kL0, bernoulli(0.2), d) == 1.0);
  }
  CHECK(density_ratio(g, kL1, bernoulli(0.8), 1.0) == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(density_ratio(g, kL1, bernoulli(0.8), 0.0) == 0.0);
  CHECK_FALSE(g.depends_on_actual());
}

TEST_CASE("incremental odds shift") {
  const RegimeSpec g = incremental(2.0);
  const TreatmentLaw law = regime_law(g, kL1, bernoulli(0.5));
  const auto& d = std::get<DiscreteLaw>(law);
  CHECK(d.probs[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(g.depends_on_actual());

  // empirical frequency of the transformed natural draw
  const CounterRng rng(8);
  double hits = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) hits += sample_regime(g, kL1, bernoulli(0.5), rng.draw(i, 0, DrawRole::treatment));
  const double se = std::sqrt(2.0 / 9.0 / n);
  CHECK(testsupport::within(hits / n, 2.0 / 3.0, se));

  CHECK_THROWS_AS(incremental(0.0), InvalidArgument);
  CHECK_THROWS_AS(incremental(-1.0), InvalidArgument);
  CHECK_THROWS_AS(regime_law(g, kL1, GaussianLaw{0.0, 1.0}), InvalidArgument);
}

TEST_CASE("identity regimes behave like the null regime") {
  const CounterRng rng(1);
  const TreatmentLaw gauss = GaussianLaw{0.3, 0.3};
  for (std::uint64_t i = 0; i < 500; ++i) {
    const TreatmentDraw d = rng.draw(i, 2, DrawRole::treatment);
    const double natural_g = sample_regime(null_regime(), kL0, gauss, d);
    CHECK(sample_regime(shift(0.0), kL0, gauss, d) == natural_g);
    CHECK(sample_regime(threshold(-kInfinity), kL0, gauss, d) == natural_g);
    CHECK(density_ratio(shift(0.0), kL0, gauss, natural_g) == 1.0);
    CHECK(density_ratio(threshold(-kInfinity), kL0, gauss, natural_g) == 1.0);

    const double natural_b = sample_regime(null_regime(), kL1, bernoulli(0.8), d);
    CHECK(sample_regime(incremental(1.0), kL1, bernoulli(0.8), d) == natural_b);
    CHECK(density_ratio(incremental(1.0), kL1, bernoulli(0.8), natural_b) == 1.0);
  }
  CHECK(density_ratio(null_regime(), kL1, bernoulli(0.8), 0.0) == 1.0);
  CHECK(density_ratio(null_regime(), kL0, gauss, 12.0) == 1.0);
}

TEST_CASE("gaussian shift ratio") {
  const double mu = 0.2, s = 0.3, delta = 0.5;
  const TreatmentLaw law = GaussianLaw{mu, s};
  CHECK(density_ratio(shift(delta), kL0, law, mu) ==
        doctest::Approx(std::exp(-delta * delta / (2 * s * s))).epsilon(1e-13));
  // likelihood ratio at an arbitrary point
  const double a = 0.9;
  const double expected = std::exp((-(a - mu - delta) * (a - mu - delta) + (a - mu) * (a - mu)) / (2 * s * s));
  CHECK(density_ratio(shift(delta), kL0, law, a) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(regime_law(shift(delta), kL0, bernoulli(0.5)), InvalidArgument);
}

TEST_CASE("positivity failures surface") {
  const TreatmentLaw gauss = GaussianLaw{0.0, 0.3};
  CHECK_THROWS_AS(density_ratio(point_mass(0.5), kL0, gauss, 0.5), PositivityError);
  CHECK_THROWS_AS(density_ratio(threshold(0.0), kL0, gauss, 0.1), PositivityError);
  CHECK_THROWS_AS(density_ratio(deterministic_dynamic(0.0, 1.0, 0.0), kL0, gauss, 1.0), PositivityError);
  // max(A, 0.5) on a binary treatment puts mass where the observed law has none
  CHECK_THROWS_AS(density_ratio(threshold(0.5), kL1, bernoulli(0.8), 0.5), PositivityError);
  CHECK(density_ratio(threshold(0.0), kL1, bernoulli(0.8), 1.0) == 1.0);

  const DgpSpec spec = ou1();
  const Cohort cohort = simulate_observed(spec, make_partition(1.0, 4), 1, 1);
  CHECK_THROWS_AS(density_ratio(point_mass(0.5), history_at(cohort[0], 0, false), 0.5, spec), PositivityError);
}

TEST_CASE("per-step weights have mean one") {
  struct Case {
    RegimeSpec g;
    TreatmentLaw law;
    double l;
  };
  const std::vector<Case> cases{
      {always_treat(), bernoulli(0.8), 1.0},
      {never_treat(), bernoulli(0.2), 0.0},
      {incremental(2.0), bernoulli(0.5), 1.0},
      {stochastic_bernoulli(0.3, 0.4), bernoulli(0.8), 1.0},
      {deterministic_dynamic(0.5, 1.0, 0.0), bernoulli(0.2), 0.0},
      {shift(0.5), GaussianLaw{0.1, 0.3}, 0.2},
      {stochastic_gaussian(0.2, 0.5, 0.4), GaussianLaw{0.1, 0.3}, 0.2},
  };
  const CounterRng rng(77);
  for (const auto& c : cases) {
    const double s[1] = {c.l};
    std::vector<double> w;
    for (std::uint64_t i = 0; i < 100000; ++i) {
      const double a = sample(c.law, rng.draw(i, 0, DrawRole::treatment));
      w.push_back(density_ratio(c.g, s, c.law, a));
    }
    const MonteCarlo mc = summarize_sample(std::move(w));
    INFO(c.g.describe());
    CHECK(testsupport::within(mc.mean, 1.0, mc.se));
  }
}

TEST_CASE("point-mass ratio vanishes off the rule") {
  const RegimeSpec g = point_mass([](std::span<const double> s) { return s[0]; }, "A=L");
  for (double l : {0.0, 1.0}) {
    const double s[1] = {l};
    for (double a : {0.0, 1.0}) {
      const double r = density_ratio(g, s, bernoulli(0.2 + 0.6 * l), a);
      if (a == l) CHECK(r > 0.0);
      else CHECK(r == 0.0);
    }
  }
}

TEST_CASE("regime parsing") {
  CHECK(parse_regime("always_treat").value == 1.0);
  CHECK(parse_regime("never_treat").value == 0.0);
  CHECK(parse_regime("null").variant == RegimeVariant::null);
  CHECK(parse_regime("natural").variant == RegimeVariant::null);
  CHECK(parse_regime("shift:delta=0.5").delta == 0.5);
  CHECK(parse_regime("incremental:odds_multiplier=2").multiplier == 2.0);
  CHECK(parse_regime("threshold:theta=-inf").theta == -kInfinity);
  CHECK(parse_regime("stochastic:intercept=0.3,slope=0.2").variant == RegimeVariant::stochastic_prespecified);
  CHECK_THROWS_AS(parse_regime("wobble"), InvalidArgument);
  CHECK_THROWS_AS(parse_regime("shift:gamma=1"), InvalidArgument);
  CHECK_THROWS_AS(parse_regime("incremental:multiplier=0"), InvalidArgument);

  for (const RegimeSpec& g : {always_treat(), shift(0.25), incremental(3.0), threshold(-kInfinity),
                              deterministic_dynamic(0.5, 1.0, 0.0), stochastic_gaussian(0.1, 0.2, 0.3)}) {
    const RegimeSpec back = regime_from_json(to_json(g));
    CHECK(back.describe() == g.describe());
  }
  try {
    (void)regime_from_json(nlohmann::json::parse(R"({"variant":"teleport"})"));
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "regime.variant");
  }
}
