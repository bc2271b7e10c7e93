#include <doctest.h>

#include <sstream>

#include "contregime/dgp.hpp"
#include "contregime/errors.hpp"
#include "contregime/format.hpp"
#include "contregime/parallel.hpp"
#include "contregime/rng.hpp"
#include "contregime/timegrid.hpp"

using namespace contregime;

namespace {

std::vector<double> times_of(const Partition& p) { return {p.times().begin(), p.times().end()}; }

}  // namespace

TEST_CASE("uniform partitions") {
  const Partition p = make_partition(1.0, 4);
  CHECK(times_of(p) == std::vector<double>{0, 0.25, 0.5, 0.75, 1.0});
  CHECK(p.mesh() == 0.25);
  CHECK(p.steps() == 4);

  const Partition one = make_partition(1.0, 1);
  CHECK(times_of(one) == std::vector<double>{0, 1.0});
  CHECK(one.mesh() == 1.0);

  const Partition three = make_partition(3.0, 3);
  CHECK(times_of(three) == std::vector<double>{0, 1, 2, 3});
  CHECK(three.mesh() == 1.0);
}

TEST_CASE("bad partitions are rejected") {
  CHECK_THROWS_AS(make_partition(0.0, 3), InvalidArgument);
  CHECK_THROWS_AS(make_partition(-1.0, 3), InvalidArgument);
  CHECK_THROWS_AS(make_partition(1.0, 0), InvalidArgument);
  CHECK_THROWS_AS(Partition({0.0, 0.5, 0.5, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(Partition({0.1, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(Partition({0.0}), InvalidArgument);
}

TEST_CASE("refine inserts midpoints") {
  CHECK(times_of(refine(Partition({0, 0.5, 1}))) == std::vector<double>{0, 0.25, 0.5, 0.75, 1});
  CHECK(times_of(refine(Partition({0, 1}))) == std::vector<double>{0, 0.5, 1});
  CHECK(refine(refine(Partition({0, 1}))).mesh() == 0.25);

  for (std::size_t K : {1u, 3u, 7u, 10u}) {
    for (double tau : {0.3, 1.0, 3.0, 17.0}) {
      const Partition p = make_partition(tau, K);
      CHECK(refine(p).mesh() <= p.mesh() / 2 + 1e-15 * tau);
      CHECK(refine(p).size() == 2 * K + 1);
    }
  }
  // non-uniform gaps halve too
  const Partition q({0.0, 0.1, 0.7, 1.0});
  CHECK(refine(q).mesh() == doctest::Approx(0.3));
}

TEST_CASE("sub-grid indices") {
  const Partition fine = make_partition(1.0, 256);
  const auto idx = subgrid_indices(make_partition(1.0, 4), fine);
  CHECK(idx == std::vector<std::size_t>{0, 64, 128, 192, 256});
  CHECK_THROWS_AS(subgrid_indices(make_partition(1.0, 3), fine), InvalidArgument);
  CHECK_THROWS_AS(subgrid_indices(make_partition(2.0, 4), fine), InvalidArgument);
}

TEST_CASE("history views") {
  const DgpSpec spec = cens3();
  const Cohort cohort = simulate_observed(spec, *spec.fine_grid, 200, 3, 1);

  SUBCASE("baseline view") {
    const Trajectory& tr = cohort[0];
    const HistoryView h = history_at(tr, 0, false);
    CHECK(h.past_treatments.empty());
    CHECK(h.past_covariates.size() == 1);
    CHECK(h.summary == std::vector<double>{tr.covariate_at(0)[0]});
    CHECK_FALSE(h.current_treatment.has_value());

    const HistoryView g = history_at(tr, 0, true);
    REQUIRE(g.current_treatment.has_value());
    CHECK(*g.current_treatment == std::vector<double>{tr.treatment_at(0)[0]});
    CHECK(g.summary.size() == 2);
    CHECK(g.summary[1] == tr.treatment_at(0)[0]);
  }

  SUBCASE("summaries recompute bit-exactly and views are pure") {
    for (const Trajectory& tr : cohort) {
      for (std::size_t j = 0; j < tr.grid->size(); ++j) {
        for (bool cur : {false, true}) {
          const HistoryView h = history_at(tr, j, cur);
          CHECK(summarize(SummaryMap::last_value, h) == h.summary);
          CHECK(history_at(tr, j, cur) == h);
        }
      }
    }
  }

  SUBCASE("values after exit are frozen") {
    bool seen = false;
    for (const Trajectory& tr : cohort) {
      if (!tr.censored()) continue;
      const std::size_t x = tr.exit_index();
      REQUIRE(x < tr.grid->size());
      for (std::size_t j = x; j < tr.grid->size(); ++j) {
        const HistoryView h = history_at(tr, j, true);
        CHECK(h.summary[0] == tr.covariate_at(x)[0]);
        CHECK(h.summary[1] == tr.treatment_at(x)[0]);
      }
      seen = true;
    }
    CHECK(seen);
  }

  CHECK_THROWS_AS(history_at(cohort[0], 4, false), InvalidArgument);
}

TEST_CASE("trajectory invariants hold for simulated cohorts") {
  const DgpSpec spec = cens3();
  const Cohort cohort = simulate_observed(spec, *spec.fine_grid, 500, 9, 1);
  for (const Trajectory& tr : cohort) {
    CHECK_NOTHROW(validate(tr));
    if (tr.event_time <= tr.censor_time) CHECK(tr.censor_time == kInfinity);
  }
  Trajectory bad = cohort[0];
  bad.covariate.pop_back();
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
}

TEST_CASE("cohort csv round trip") {
  const DgpSpec spec = cens3();
  const Cohort cohort = simulate_observed(spec, *spec.fine_grid, 50, 4, 1);
  std::stringstream ss;
  write_cohort_csv(ss, cohort);
  const std::string text = ss.str();
  CHECK(text.rfind("subject_id,t,a_1,l_1,event_time,censor_time,outcome\n", 0) == 0);
  const Cohort back = read_cohort_csv(ss);
  REQUIRE(back.size() == cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    CHECK(*back[i].grid == *cohort[i].grid);
    CHECK(back[i].treatment == cohort[i].treatment);
    CHECK(back[i].covariate == cohort[i].covariate);
    CHECK(back[i].censor_time == cohort[i].censor_time);
    CHECK(back[i].event_time == cohort[i].event_time);
    CHECK(back[i].outcome == cohort[i].outcome);
  }
  std::stringstream again;
  write_cohort_csv(again, back);
  CHECK(again.str() == text);
}

TEST_CASE("format_double round trips") {
  for (double x : {0.0, 0.1, 1.0 / 3.0, -2.5e-300, 0.7085, 1e22}) {
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(0.15) == "0.15");
  CHECK(format_double(kInfinity) == "inf");
  CHECK(format_double(-kInfinity) == "-inf");
}

TEST_CASE("philox known answers") {
  // Random123 test vectors for Philox4x32-10
  const CounterRng zero(0);
  CHECK(zero.block(0, 0, DrawRole::baseline) ==
        std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  const CounterRng ones(~std::uint64_t{0});
  CHECK(ones.block(~std::uint64_t{0}, 0xffffffffu, static_cast<DrawRole>(0xffffffffu)) ==
        std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
}

TEST_CASE("uniforms are open-interval and roughly uniform") {
  const CounterRng rng(42);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(static_cast<std::uint64_t>(i), 3, DrawRole::transition);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    s += u;
    s2 += u * u;
  }
  const double mean = s / n;
  CHECK(std::abs(mean - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(s2 / n - mean * mean - 1.0 / 12.0) < 0.002);
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("parallel_for propagates worker exceptions") {
  std::vector<int> out(100, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i));
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
    if (i == 7) throw InvalidArgument("boom");
  }), InvalidArgument);
}
