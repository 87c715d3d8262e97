#include <cmath>

#include "doctest.h"
#include "enumerate.hpp"
#include "helpers.hpp"
#include "stratma/estimators.hpp"
#include "stratma/simulation.hpp"

using namespace stratma;

namespace {

PopulationTable two_arm(const std::vector<double>& y1, const std::vector<double>& y0) {
  std::vector<UnitRecord> units;
  int id = 0;
  for (double y : y1) units.push_back(testing::unit("a" + std::to_string(id++), 1, y, y));
  for (double y : y0) units.push_back(testing::unit("a" + std::to_string(id++), 0, y, y));
  return PopulationTable(std::move(units), ArmMode::two_arm);
}

SampleDraw pick(const PopulationTable& pop, std::vector<std::size_t> selected, Scheme scheme,
                const StrataAssignment& strata) {
  SampleDraw d;
  d.selected = std::move(selected);
  d.scheme = scheme;
  d.counts.assign(strata.n_arms(), {});
  for (int z = 0; z < strata.n_arms(); ++z) d.counts[z].assign(strata.n_strata(z), 0);
  for (auto i : d.selected) ++d.counts[pop.arm_of(i)][strata.label(i)];
  return d;
}

}  // namespace

TEST_CASE("oracle difference in means") {
  const auto r = estimate_oracle(two_arm({2, 4}, {1, 1}));
  CHECK(r.estimand == Estimand::ate);
  CHECK(r.estimate == 2.0);
  const auto flat = estimate_oracle(two_arm({5, 5, 5}, {5, 5}));
  CHECK(flat.estimate == 0.0);
  REQUIRE(flat.se);
  CHECK(*flat.se == 0.0);
}

TEST_CASE("subset estimator: hand arithmetic") {
  std::vector<UnitRecord> units{testing::unit("a", 1, 0, 1), testing::unit("b", 1, 0, 3),
                                testing::unit("c", 1, 0, std::nullopt), testing::unit("d", 0, 0, 0),
                                testing::unit("e", 0, 0, 0)};
  const PopulationTable pop(std::move(units), ArmMode::two_arm);
  const auto r = estimate_subset(pop, coded_draw(pop, nullptr, Scheme::srs));
  CHECK(r.estimate == 2.0);
  REQUIRE(r.se);
  CHECK(*r.se == doctest::Approx(1.0));
  // coded sample = full population gives the oracle point estimate
  const auto full = two_arm({2, 4, 7}, {1, 1, 0});
  CHECK(estimate_subset(full, coded_draw(full, nullptr, Scheme::srs)).estimate == estimate_oracle(full).estimate);
}

TEST_CASE("subset and MA-SRS are unbiased over all assignments and draws (N = 6)") {
  TinyPopulation tp{{1, 4, 2, 0, 3, 5}, {2, 4, 5, 1, 3, 9}, {1.5, 3, 2, 1, 2, 4}, {2, 5, 4, 0, 3, 7}, 3};
  const auto s = exhaustive_oracle(
      tp, [](const std::vector<int>& z) { return std::vector<int>(z.size(), 0); },
      [](const std::vector<std::vector<int>>&) { return Quotas{{2}, {2}}; });
  CHECK(s.mean_subset == doctest::Approx(s.true_ate).epsilon(1e-12));
  CHECK(s.mean_srs == doctest::Approx(s.true_ate).epsilon(1e-12));
  CHECK(s.mean_stratified == doctest::Approx(s.true_ate).epsilon(1e-12));
}

TEST_CASE("MA-SRS hand example and full-coding cancellation") {
  const auto pop = testing::single_arm({1, 2, 3, 4}, {1.5, std::nullopt, 3.5, std::nullopt});
  const auto r = estimate_ma_srs(pop, coded_draw(pop, nullptr, Scheme::srs));
  CHECK(r.estimand == Estimand::mean);
  CHECK(r.estimate == doctest::Approx(3.0));

  std::vector<UnitRecord> units;
  const double yh[] = {0.3, 1.7, 2.2, -1, 4, 0.5}, y[] = {1, 2, 2, 0, 5, 1};
  for (int i = 0; i < 6; ++i) units.push_back(testing::unit("u" + std::to_string(i), i % 2, yh[i], y[i]));
  const PopulationTable full(std::move(units), ArmMode::two_arm);
  CHECK(estimate_ma_srs(full, coded_draw(full, nullptr, Scheme::srs)).estimate ==
        doctest::Approx(estimate_oracle(full).estimate).epsilon(1e-14));
}

TEST_CASE("perfect predictor gives the surrogate mean") {
  const auto pop = testing::single_arm({1, 2, 3, 6}, {1, std::nullopt, 3, std::nullopt});
  CHECK(estimate_ma_srs(pop, coded_draw(pop, nullptr, Scheme::srs)).estimate == 3.0);
}

TEST_CASE("MA-stratified hand example") {
  const auto pop = testing::single_arm({1, 2, 3, 4}, {1.5, std::nullopt, 3.5, std::nullopt});
  const StrataAssignment strata(pop, {0, 0, 1, 1});
  const auto alloc = Allocation::manual({{1, 1}});
  const auto r = estimate_ma_stratified(pop, strata, coded_draw(pop, &strata, Scheme::stratified), &alloc);
  CHECK(r.estimate == doctest::Approx(3.0));
  CHECK_FALSE(r.se.has_value());  // n_k = 1 < N_k
  CHECK_FALSE(r.diagnostics.empty());
}

TEST_CASE("MA-stratified with one stratum is bit-identical to MA-SRS") {
  Rng rng(3);
  std::vector<UnitRecord> units;
  for (int i = 0; i < 40; ++i) {
    const double yh = rng.normal();
    units.push_back(testing::unit("u" + std::to_string(i), i % 2, yh, yh + rng.normal(0.3, 1)));
  }
  const PopulationTable pop(std::move(units), ArmMode::two_arm);
  const auto trivial = StrataAssignment::trivial(pop);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::vector<int> budget{7, 9};
    const auto srs = srs_sample(pop, budget, {s, 0});
    const auto a = estimate_ma_srs(pop, srs);
    SampleDraw as_strat = srs;
    as_strat.scheme = Scheme::stratified;
    const auto b = estimate_ma_stratified(pop, trivial, as_strat);
    CHECK(a.estimate == b.estimate);
    REQUIRE(a.se);
    REQUIRE(b.se);
    CHECK(*a.se == *b.se);
  }
}

TEST_CASE("MA-stratified with full coding equals the oracle") {
  std::vector<UnitRecord> units;
  const double yh[] = {0.3, 1.7, 2.2, -1, 4, 0.5, 2, 2}, y[] = {1, 2, 2, 0, 5, 1, 3, 1};
  for (int i = 0; i < 8; ++i) units.push_back(testing::unit("u" + std::to_string(i), i % 2, yh[i], y[i]));
  const PopulationTable pop(std::move(units), ArmMode::two_arm);
  const StrataAssignment strata(pop, {0, 0, 0, 0, 1, 1, 1, 1});
  const auto r = estimate_ma_stratified(pop, strata, coded_draw(pop, &strata, Scheme::stratified));
  CHECK(r.estimate == doctest::Approx(estimate_oracle(pop).estimate).epsilon(1e-14));
}

TEST_CASE("draw that disagrees with the allocation is rejected") {
  const auto pop = testing::single_arm({1, 2, 3, 4}, {1, 2, 3, std::nullopt});
  const StrataAssignment strata(pop, {0, 0, 1, 1});
  const auto alloc = Allocation::manual({{1, 1}});
  try {
    estimate_ma_stratified(pop, strata, coded_draw(pop, &strata, Scheme::stratified), &alloc);
    FAIL("expected StratumDrawMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StratumDrawMismatch);
  }
}

TEST_CASE("CI is estimate +/- z * se and components sum to se^2") {
  Rng rng(9);
  std::vector<UnitRecord> units;
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) {
    const double yh = rng.normal(i % 3, 1);
    units.push_back(testing::unit("u" + std::to_string(i), i % 2, yh, yh + rng.normal(-0.2 * (i % 3), 0.5)));
    labels.push_back(i % 3);
  }
  const PopulationTable pop(std::move(units), ArmMode::two_arm);
  const StrataAssignment strata(pop, labels);
  const auto alloc = Allocation::manual({{4, 4, 4}, {3, 5, 4}});
  const auto draw = stratified_sample(pop, strata, alloc, {1, 1});
  const auto r = estimate_ma_stratified(pop, strata, draw, &alloc, {0.9, VarianceMode::superpopulation});
  REQUIRE(r.se);
  REQUIRE(r.ci);
  const double z = normal_quantile(0.95);
  CHECK(r.ci->first == doctest::Approx(r.estimate - z * *r.se));
  CHECK(r.ci->second == doctest::Approx(r.estimate + z * *r.se));
  double sum = 0;
  for (const auto& c : r.components) sum += c.value;
  CHECK(sum == doctest::Approx(*r.se * *r.se));
  CHECK(r.arm_values[1] - r.arm_values[0] == doctest::Approx(r.estimate));
}

TEST_CASE("method names round-trip") {
  for (auto m : {Method::oracle, Method::subset, Method::ma_srs, Method::ma_stratified})
    CHECK(parse_method(to_string(m)) == m);
  CHECK(parse_method("ma_stratified") == Method::ma_stratified);
}
