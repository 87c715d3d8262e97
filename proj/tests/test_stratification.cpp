#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "enumerate.hpp"
#include "helpers.hpp"
#include "stratma/estimators.hpp"
#include "stratma/rng.hpp"
#include "stratma/stratification.hpp"
#include "stratma/variance.hpp"

using namespace stratma;

namespace {

PopulationTable featured(int n, std::uint64_t seed, bool two_arm = false) {
  Rng rng(seed);
  std::vector<UnitRecord> units;
  for (int i = 0; i < n; ++i) {
    const double yh = rng.normal(0, 2);
    auto u = testing::unit("u" + std::to_string(10000 + i), two_arm ? std::optional<int>(i % 2) : std::nullopt,
                           yh, yh - 0.3 * yh + rng.normal());
    u.features["wc"] = std::round(rng.uniform(50, 500));
    u.features["grade"] = static_cast<double>(rng.below(6));
    units.push_back(std::move(u));
  }
  return PopulationTable(std::move(units), two_arm ? ArmMode::two_arm : ArmMode::single_arm);
}

CandidateStratification named(std::string name, int k) {
  CandidateStratification c;
  c.name = std::move(name);
  c.k_per_arm = {k};
  return c;
}

}  // namespace

TEST_CASE("quantile cut examples") {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(quantile_cut(v, 4).labels == std::vector<int>{1, 1, 2, 2, 3, 3, 4, 4});

  const std::vector<double> flat(5, 2.0);
  const auto c = quantile_cut(flat, 3);
  CHECK(c.groups == 1);
  CHECK(c.labels == std::vector<int>(5, 1));
  CHECK_FALSE(c.warnings.empty());
  CHECK_THROWS_AS(quantile_cut(flat, 3, true), Error);

  const std::vector<double> ties{1, 1, 1, 1, 9};
  CHECK(quantile_cut(ties, 2).labels == std::vector<int>{1, 1, 1, 1, 2});
}

TEST_CASE("property: quantile cut is monotone and permutation invariant") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(60));
    std::vector<double> v(n);
    for (auto& x : v) x = std::round(rng.normal(0, 3));  // plenty of ties
    const int q = 2 + static_cast<int>(rng.below(5));
    const auto a = quantile_cut(v, q);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (v[i] < v[j]) CHECK(a.labels[i] <= a.labels[j]);
    std::set<int> used(a.labels.begin(), a.labels.end());
    CHECK(static_cast<int>(used.size()) == a.groups);
    CHECK(*used.rbegin() == a.groups);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<double> shuffled(n);
    for (int i = 0; i < n; ++i) shuffled[i] = v[perm[i]];
    const auto b = quantile_cut(shuffled, q);
    for (int i = 0; i < n; ++i) CHECK(b.labels[i] == a.labels[perm[i]]);
  }
}

TEST_CASE("cross strata") {
  const std::vector<int> a{1, 1, 2, 2}, b{1, 2, 1, 2};
  const auto c = cross_strata(a, b);
  CHECK(std::set<int>(c.begin(), c.end()).size() == 4);
  CHECK(cross_strata(a, a) == a);

  // four y_hat bins x two word-count bins
  std::vector<double> yh, wc;
  for (int i = 0; i < 40; ++i) {
    yh.push_back(i);
    wc.push_back((i * 7) % 10);
  }
  const auto cell = cross_strata(quantile_cut(yh, 4).labels, quantile_cut(wc, 2).labels);
  CHECK(*std::max_element(cell.begin(), cell.end()) == 8);
}

TEST_CASE("property: crossing refines both inputs") {
  Rng rng(4);
  std::vector<int> a(200), b(200);
  for (int i = 0; i < 200; ++i) {
    a[i] = 1 + static_cast<int>(rng.below(3));
    b[i] = 1 + static_cast<int>(rng.below(4));
  }
  const auto c = cross_strata(a, b);
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 200; ++j)
      if (c[i] == c[j]) CHECK((a[i] == a[j] && b[i] == b[j]));
}

TEST_CASE("candidate counts") {
  const auto pop = featured(300, 1);
  CHECK(generate_candidates(pop, {"y_hat"}).size() == 3);
  CHECK(generate_candidates(pop, {"y_hat", "wc"}).size() == 10);
  CHECK(generate_candidates(pop, {"y_hat", "wc", "grade"}).size() == 21);
  CHECK_THROWS_AS(generate_candidates(pop, {"nope"}), Error);
}

TEST_CASE("two-arm candidates cut within each arm and keep cells above the minimum") {
  const auto pop = featured(400, 2, true);
  for (const auto& c : generate_candidates(pop, {"y_hat", "wc"})) {
    REQUIRE(c.k_per_arm.size() == 2);
    for (int z = 0; z < 2; ++z) {
      CHECK(c.strata.n_strata(z) == c.k_per_arm[z]);
      for (int n : c.strata.counts(z)) CHECK(n >= 2);
    }
  }
}

TEST_CASE("precoding metrics") {
  const auto pop = testing::single_arm({0, 2, 2, 4}, std::vector<std::optional<double>>(4));
  CHECK(precoding_metrics(pop, StrataAssignment::trivial(pop)).var_of_stratum_means == 0.0);
  const StrataAssignment strata(pop, {0, 0, 1, 1});  // means 1 and 3
  const auto m = precoding_metrics(pop, strata);
  CHECK(m.var_of_stratum_means == doctest::Approx(1.0));
  CHECK(m.balance_ratio == 1.0);
  CHECK(m.min_stratum_size == 2);
}

TEST_CASE("rank filters and ordering") {
  std::vector<CandidateStratification> c{named("a", 3), named("b", 3)};
  std::vector<CandidateMetrics> m(2);
  m[0].var_of_stratum_means = 0.5;
  m[1].var_of_stratum_means = 1.0;
  m[0].min_stratum_size = m[1].min_stratum_size = 150;
  auto r = rank_candidates(c, m);
  CHECK(r.order == std::vector<std::size_t>{1, 0});

  m[1].min_stratum_size = 50;
  r = rank_candidates(c, m);
  CHECK(r.order == std::vector<std::size_t>{0});
  REQUIRE(r.excluded.size() == 1);
  CHECK(r.excluded[0].first == 1);

  m[1].min_stratum_size = 150;
  m[1].balance_ratio = 12;
  r = rank_candidates(c, m);
  CHECK(r.excluded.size() == 1);

  std::vector<CandidateStratification> tie{named("eight", 8), named("four", 4)};
  std::vector<CandidateMetrics> tm(2);
  tm[0].var_of_stratum_means = tm[1].var_of_stratum_means = 2.0;
  tm[0].min_stratum_size = tm[1].min_stratum_size = 200;
  CHECK(rank_candidates(tie, tm).order == std::vector<std::size_t>{1, 0});

  tm[0].min_stratum_size = tm[1].min_stratum_size = 1;
  const auto none = rank_candidates(tie, tm);
  CHECK(none.order.empty());
  REQUIRE_FALSE(none.diagnostics.empty());
  CHECK(none.diagnostics[0].rfind("AllFiltered", 0) == 0);
}

TEST_CASE("oracle metrics: zero residuals give zero delta") {
  std::vector<double> yh{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<std::optional<double>> y(yh.begin(), yh.end());
  const auto pop = testing::single_arm(yh, y);
  const StrataAssignment strata(pop, {0, 0, 0, 0, 1, 1, 1, 1});
  const auto m = oracle_metrics(pop, strata, Budget::count(4), AllocationMethod::proportional);
  REQUIRE(m.oracle);
  CHECK(m.oracle->delta == 0.0);
}

TEST_CASE("oracle metrics: splitting by residual sign helps, confirmed by enumeration") {
  const std::vector<double> yh{0, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<std::optional<double>> y{-2, -1.5, -2.5, -1, 2, 1.5, 1, 2.5};
  const auto pop = testing::single_arm(yh, y);
  const StrataAssignment strata(pop, {0, 0, 0, 0, 1, 1, 1, 1});
  const auto m = oracle_metrics(pop, strata, Budget::count(4), AllocationMethod::proportional);
  REQUIRE(m.oracle);
  CHECK(m.oracle->delta > 0);

  // enumerate: SRS of 4 from 8 vs 2 + 2 stratified
  auto variance = [&](const StrataAssignment& s, const Quotas& n) {
    std::vector<double> est;
    testing::for_each_stratified_draw(pop, s, n, [&](const SampleDraw& d) {
      est.push_back(estimate_ma_stratified(pop, s, d).estimate);
    });
    double mu = std::accumulate(est.begin(), est.end(), 0.0) / est.size(), v = 0;
    for (double e : est) v += (e - mu) * (e - mu);
    return v / est.size();
  };
  const double gap = variance(StrataAssignment::trivial(pop), {{4}}) - variance(strata, {{2, 2}});
  CHECK(gap == doctest::Approx(m.oracle->delta).epsilon(1e-12));
}

TEST_CASE("precoding proxy tracks oracle gain on surrogate-biased data") {
  // residual mean falls with y_hat, so finer y_hat cuts should separate residual means
  Rng rng(8);
  std::vector<UnitRecord> units;
  for (int i = 0; i < 2000; ++i) {
    const double yh = rng.normal(0, 2);
    auto u = testing::unit("u" + std::to_string(i), i % 2, yh, 0.5 * yh + rng.normal(0, 0.5));
    u.features["noise"] = rng.normal();
    units.push_back(std::move(u));
  }
  const PopulationTable pop(std::move(units), ArmMode::two_arm);
  const auto cands = generate_candidates(pop, {"y_hat", "noise"});
  std::vector<double> pre, delta;
  for (const auto& c : cands) {
    const auto m = oracle_metrics(pop, c.strata, Budget::fraction(0.2), AllocationMethod::proportional);
    pre.push_back(m.var_of_stratum_means);
    delta.push_back(m.oracle->delta);
  }
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
    return r;
  };
  const auto ra = ranks(pre), rb = ranks(delta);
  const double mean_r = (ra.size() - 1) / 2.0;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - mean_r) * (rb[i] - mean_r);
    da += (ra[i] - mean_r) * (ra[i] - mean_r);
    db += (rb[i] - mean_r) * (rb[i] - mean_r);
  }
  CHECK(num / std::sqrt(da * db) > 0.5);
}
