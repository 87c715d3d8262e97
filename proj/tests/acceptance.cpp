// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.
// Usage: acceptance [path-to-stratma-binary]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "cli.hpp"
#include "stratma/allocation.hpp"
#include "stratma/power.hpp"
#include "stratma/rng.hpp"
#include "stratma/simulation.hpp"
#include "stratma/variance.hpp"

using namespace stratma;

namespace {

constexpr double kExactAbs = 1e-12;
constexpr double kExactRel = 1e-12;
constexpr double kPluginRel = 1e-10;
constexpr double kGapRel = 1e-10;
constexpr double kNeymanSlack = 0.01;
constexpr double kSeRatioLo = 0.95, kSeRatioHi = 1.05;
constexpr double kLargeBiasReduction = 40.0;
constexpr double kOptOverPropPoints = 5.0;
constexpr double kCoverageLo = 0.93, kCoverageHi = 0.97;
constexpr double kMaxAbsBias = 0.025;
constexpr double kCalibrationAbs = 1e-12;
constexpr double kPseudoR2Tol = 0.03;
constexpr int kReplications = 1000;

int g_failed = 0;

void report(int id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
  if (!ok) ++g_failed;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

int threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Fixed N = 8 population, four treated. Surrogates carry a level-dependent bias.
TinyPopulation tiny_eight() {
  return {{1.2, 3.4, 0.7, 2.9, 5.1, 4.0, 1.8, 3.3},
          {2.0, 4.9, 1.1, 3.0, 6.8, 5.5, 2.2, 4.6},
          {1.0, 2.5, 1.5, 2.0, 3.9, 3.6, 2.4, 2.7},
          {2.6, 3.5, 1.9, 3.4, 5.0, 4.1, 2.5, 3.8},
          4};
}

TinyPopulation constant_effect(TinyPopulation tp, double tau) {
  for (std::size_t i = 0; i < tp.y0.size(); ++i) tp.y1[i] = tp.y0[i] + tau;
  return tp;
}

// Within each arm, rank units by observed surrogate and split at the given sizes.
StratumRule split_by_surrogate(const TinyPopulation& tp, std::vector<int> sizes) {
  return [tp, sizes](const std::vector<int>& z) {
    std::vector<int> labels(z.size(), 0);
    for (int arm = 0; arm < 2; ++arm) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < z.size(); ++i)
        if (z[i] == arm) idx.push_back(i);
      auto yhat = [&](std::size_t i) { return arm == 1 ? tp.yhat1[i] : tp.yhat0[i]; };
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return yhat(a) < yhat(b); });
      std::size_t at = 0;
      for (int k = 0; k < static_cast<int>(sizes.size()); ++k)
        for (int j = 0; j < sizes[k]; ++j) labels[idx[at++]] = k;
    }
    return labels;
  };
}

QuotaRule fixed_quotas(std::vector<int> per_arm) {
  return [per_arm](const std::vector<std::vector<int>>&) { return Quotas{per_arm, per_arm}; };
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto tp = tiny_eight();
  const auto s = exhaustive_oracle(tp, split_by_surrogate(tp, {2, 2}), fixed_quotas({1, 1}));
  const double secs = seconds_since(t0);
  const double bias = std::abs(s.mean_stratified - s.true_ate);
  const double decomp = rel_err(s.var_stratified, s.mean_expected_conditional + s.var_oracle_estimator);
  report(1, s.assignments == 70 && bias <= kExactAbs && decomp <= kExactRel && secs < 1.0,
         "assignments=" + std::to_string(s.assignments) + " |mean-ATE|=" + fmt(bias) +
             " rel(var - (E cond + Var oracle))=" + fmt(decomp) + " time=" + fmt(secs) + "s");
}

void criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    std::string name;
    TinyPopulation tp;
    std::vector<int> sizes, quota;
  };
  auto twelve = [] {
    TinyPopulation tp;
    Rng rng(12);
    for (int i = 0; i < 12; ++i) {
      const double y0 = rng.normal(2, 1.5);
      tp.y0.push_back(y0);
      tp.y1.push_back(y0 + rng.normal(1, 0.7));
      tp.yhat0.push_back(0.6 * y0 + rng.normal(0.5, 0.5));
      tp.yhat1.push_back(0.6 * tp.y1.back() + rng.normal(0.5, 0.5));
    }
    tp.n_treated = 6;
    return tp;
  }();
  const std::vector<Case> cases{{"N=8 strata(1,3) quota(1,2)", tiny_eight(), {1, 3}, {1, 2}},
                                {"N=12 strata(3,3) quota(2,2)", twelve, {3, 3}, {2, 2}}};
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    for (bool constant : {false, true}) {
      const auto tp = constant ? constant_effect(c.tp, 1.3) : c.tp;
      const auto s = exhaustive_oracle(tp, split_by_surrogate(tp, c.sizes), fixed_quotas(c.quota));
      const double bias = s.mean_plugin - s.var_stratified;
      const double expected = s.tau_variance / static_cast<double>(tp.y0.size());
      double err;
      if (constant) {
        err = std::abs(bias) / s.var_stratified;  // zero up to rounding
        ok &= expected <= 1e-28 && err <= kPluginRel;
      } else {
        err = rel_err(bias, expected);
        ok &= std::isfinite(s.mean_plugin) && err <= kPluginRel;
      }
      detail += c.name + (constant ? " const-tau" : "") + " err=" + fmt(err) + "; ";
    }
  }
  const double secs = seconds_since(t0);
  ok &= secs < 5.0;
  report(2, ok, detail + "time=" + fmt(secs) + "s");
}

void criterion3() {
  const auto tp = tiny_eight();
  const auto s = exhaustive_oracle(tp, split_by_surrogate(tp, {2, 2}), fixed_quotas({1, 1}));
  const auto s3 = exhaustive_oracle(tp, split_by_surrogate(tp, {1, 3}), fixed_quotas({1, 2}));
  // one stratum per arm: the decomposition must vanish exactly on every assignment
  bool zero = true;
  std::vector<int> z(8, 0);
  std::fill(z.begin() + 4, z.end(), 1);
  do {
    const auto pop = tiny_table(tp, z);
    const auto d = bs_ws_decomposition(pop, StrataAssignment::trivial(pop), Quotas{{2}, {2}});
    zero &= d.bs == 0.0 && d.ws == 0.0 && d.delta == 0.0;
  } while (std::next_permutation(z.begin(), z.end()));
  const double worst = std::max(s.max_conditional_gap_error, s3.max_conditional_gap_error);
  report(3, worst <= kGapRel && zero,
         "max rel |gap - (BS-WS)|=" + fmt(worst) + " over " + std::to_string(s.assignments + s3.assignments) +
             " assignments; K=1 exact zeros=" + (zero ? "yes" : "no"));
}

double cond_var(const std::vector<int>& N, const std::vector<double>& s, const std::vector<int>& n) {
  double v = 0;
  for (std::size_t k = 0; k < N.size(); ++k)
    if (n[k] < N[k]) v += double(N[k]) * (N[k] - n[k]) / n[k] * s[k] * s[k];
  return v;
}

// Best value over integer allocations with floor <= n_k <= N_k summing to n.
double integer_optimum(const std::vector<int>& N, const std::vector<double>& s, int n, int floor) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> cur(N.size());
  std::function<void(std::size_t, int)> rec = [&](std::size_t k, int left) {
    if (k + 1 == N.size()) {
      if (left < std::min(floor, N[k]) || left > N[k]) return;
      cur[k] = left;
      best = std::min(best, cond_var(N, s, cur));
      return;
    }
    for (int a = std::min(floor, N[k]); a <= std::min(N[k], left); ++a) {
      cur[k] = a;
      rec(k + 1, left - a);
    }
  };
  rec(0, n);
  return best;
}

void criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(derive_seed(4, {4}));
  int rounded_ok = 0, within = 0;
  double worst = 0;
  const int instances = 200;
  for (int t = 0; t < instances; ++t) {
    const int K = 1 + static_cast<int>(rng.below(3));
    std::vector<int> N(K);
    std::vector<double> s(K);
    int total = 0;
    for (int k = 0; k < K; ++k) {
      N[k] = 2 + static_cast<int>(rng.below(40));
      s[k] = rng.uniform(0.1, 5.0);
      total += N[k];
    }
    const int n = 2 * K + static_cast<int>(rng.below(std::min(30, total) - 2 * K + 1));
    const auto a = neyman_allocation(N, s, n, 2);
    const auto& tgt = a.targets;
    // every quota is a rounding of its bounded continuous target
    bool roundable = true;
    for (int k = 0; k < K; ++k) {
      roundable &= a.n[k] == static_cast<int>(std::floor(tgt[k] + 1e-9)) ||
                   a.n[k] == static_cast<int>(std::ceil(tgt[k] - 1e-9));
    }
    rounded_ok += roundable;
    const double got = cond_var(N, s, a.n), best = integer_optimum(N, s, n, 2);
    const double excess = best > 0 ? got / best - 1 : (got == 0 ? 0 : 1);
    worst = std::max(worst, excess);
    within += excess <= kNeymanSlack;
  }
  const double secs = seconds_since(t0);
  report(4, rounded_ok == instances && within == instances && secs < 30,
         "roundable=" + std::to_string(rounded_ok) + "/" + std::to_string(instances) +
             " within 1% of integer optimum=" + std::to_string(within) + "/" + std::to_string(instances) +
             " worst excess=" + fmt(100 * worst) + "% time=" + fmt(secs) + "s");
}

ScenarioConfig scenario(BiasPattern b, VariancePattern v, double r2, StrataConfig st, double h, std::uint64_t id) {
  ScenarioConfig c;
  c.bias = b;
  c.variance = v;
  c.r2 = r2;
  c.strata = st;
  c.h = h;
  c.replications = kReplications;
  c.seed = 20240501;
  c.scenario_id = id;
  return c;
}

const std::vector<StrataConfig> kStrata{StrataConfig::balanced_exact, StrataConfig::balanced_approx,
                                        StrataConfig::unbalanced};
const std::vector<VariancePattern> kVariance{VariancePattern::homogeneous, VariancePattern::heterogeneous,
                                             VariancePattern::extreme_contrast};
const std::vector<BiasPattern> kBias{BiasPattern::none, BiasPattern::small, BiasPattern::moderate,
                                     BiasPattern::large, BiasPattern::extreme_contrast};

void criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  // (a) no bias, homogeneous: pooled empirical SE ratio over every r2 x strata x h cell
  double var_strat = 0, var_srs = 0, lo = 1e9, hi = 0;
  std::uint64_t id = 5000;
  int cells = 0;
  for (double r2 : {0.4, 0.85})
    for (auto st : kStrata)
      for (int hi10 = 1; hi10 <= 9; ++hi10) {
        const auto r = run_scenario(scenario(BiasPattern::none, VariancePattern::homogeneous, r2, st, hi10 / 10.0, id++),
                                    threads());
        const double a = r.get("ma_stratified_prop").emp_se, b = r.get("ma_srs").emp_se;
        var_strat += a * a;
        var_srs += b * b;
        lo = std::min(lo, a / b);
        hi = std::max(hi, a / b);
        ++cells;
      }
  const double ratio = std::sqrt(var_strat / var_srs);
  const bool ok_a = ratio >= kSeRatioLo && ratio <= kSeRatioHi;

  // (b) large bias, h = 0.1, r2 = 0.4, every variance x strata cell
  double min_red = 1e9;
  for (auto v : kVariance)
    for (auto st : kStrata) {
      const auto r = run_scenario(scenario(BiasPattern::large, v, 0.4, st, 0.1, id++), threads());
      min_red = std::min(min_red, r.get("ma_stratified_prop").var_reduction_vs_srs);
    }
  const bool ok_b = min_red >= kLargeBiasReduction;

  // (c) extreme-contrast variance, h = 0.1: optimal minus proportional reduction
  double gain = 0, min_gain = 1e9;
  int nc = 0;
  for (auto b : kBias)
    for (double r2 : {0.4, 0.85}) {
      const auto r = run_scenario(
          scenario(b, VariancePattern::extreme_contrast, r2, StrataConfig::balanced_exact, 0.1, id++), threads());
      const double g = r.get("ma_stratified_opt").var_reduction_vs_srs - r.get("ma_stratified_prop").var_reduction_vs_srs;
      gain += g;
      min_gain = std::min(min_gain, g);
      ++nc;
    }
  gain /= nc;
  const bool ok_c = gain >= kOptOverPropPoints;
  report(5, ok_a && ok_b && ok_c,
         "(a) pooled SE ratio=" + fmt(ratio) + " over " + std::to_string(cells) + " cells [per-cell " + fmt(lo) + ", " +
             fmt(hi) + "]; (b) min reduction=" + fmt(min_red) + "%; (c) mean opt-prop gain=" + fmt(gain) +
             " pts [min " + fmt(min_gain) + "]; time=" + fmt(seconds_since(t0)) + "s");
}

void criterion6() {
  const std::vector<ScenarioConfig> sample{
      scenario(BiasPattern::none, VariancePattern::homogeneous, 0.4, StrataConfig::balanced_exact, 0.1, 6001),
      scenario(BiasPattern::none, VariancePattern::heterogeneous, 0.85, StrataConfig::unbalanced, 0.5, 6002),
      scenario(BiasPattern::small, VariancePattern::homogeneous, 0.85, StrataConfig::balanced_approx, 0.3, 6003),
      scenario(BiasPattern::small, VariancePattern::extreme_contrast, 0.4, StrataConfig::balanced_exact, 0.7, 6004),
      scenario(BiasPattern::moderate, VariancePattern::heterogeneous, 0.4, StrataConfig::balanced_approx, 0.2, 6005),
      scenario(BiasPattern::moderate, VariancePattern::extreme_contrast, 0.85, StrataConfig::unbalanced, 0.9, 6006),
      scenario(BiasPattern::large, VariancePattern::homogeneous, 0.4, StrataConfig::unbalanced, 0.4, 6007),
      scenario(BiasPattern::large, VariancePattern::extreme_contrast, 0.85, StrataConfig::balanced_exact, 0.1, 6008),
      scenario(BiasPattern::large, VariancePattern::heterogeneous, 0.85, StrataConfig::balanced_exact, 0.6, 6009),
      scenario(BiasPattern::extreme_contrast, VariancePattern::homogeneous, 0.85, StrataConfig::balanced_approx, 0.8, 6010),
      scenario(BiasPattern::extreme_contrast, VariancePattern::heterogeneous, 0.4, StrataConfig::unbalanced, 0.2, 6011),
      scenario(BiasPattern::extreme_contrast, VariancePattern::extreme_contrast, 0.4, StrataConfig::balanced_approx, 0.5, 6012)};
  const std::vector<std::string> names{"oracle", "subset", "ma_srs", "ma_stratified_prop", "ma_stratified_opt"};
  std::vector<double> cov(names.size(), 0), bias(names.size(), 0);
  for (const auto& c : sample) {
    const auto r = run_scenario(c, threads());
    for (std::size_t e = 0; e < names.size(); ++e) {
      cov[e] += r.get(names[e]).coverage / sample.size();
      bias[e] += r.get(names[e]).bias / sample.size();
    }
  }
  bool ok = true;
  std::string detail;
  for (std::size_t e = 0; e < names.size(); ++e) {
    ok &= cov[e] >= kCoverageLo && cov[e] <= kCoverageHi && std::abs(bias[e]) <= kMaxAbsBias;
    detail += names[e] + " cov=" + fmt(cov[e]) + " bias=" + fmt(bias[e], 3) + "; ";
  }
  report(6, ok, detail + "12 scenarios x " + std::to_string(kReplications) + " reps");
}

void criterion7() {
  double worst_identity = 0, worst_r2 = 0;
  const std::vector<double> w{0.15, 0.35, 0.2, 0.3};
  int patterns = 0;
  for (auto b : kBias)
    for (auto v : kVariance)
      for (double r2 : {0.4, 0.85}) {
        const auto c = calibrate_dgp(b, v, r2, 3.0, w);
        double m = 0, vb = 0, sw = 0;
        for (int k = 0; k < 4; ++k) m += w[k] * c.b[k];
        for (int k = 0; k < 4; ++k) vb += w[k] * (c.b[k] - m) * (c.b[k] - m), sw += w[k] * c.sigma2_eps[k];
        worst_identity = std::max(worst_identity, std::abs(vb + sw - 9.0 * (1 - r2)));

        ScenarioConfig cfg;
        cfg.N = 10000;
        cfg.bias = b;
        cfg.variance = v;
        cfg.r2 = r2;
        const auto pop = generate_population(cfg, derive_seed(7, {static_cast<std::uint64_t>(patterns++)}));
        VectorXd y(pop.table.size()), e(pop.table.size());
        for (std::size_t i = 0; i < pop.table.size(); ++i) {
          y[i] = *pop.table.unit(i).y;
          e[i] = y[i] - pop.table.unit(i).y_hat;
        }
        worst_r2 = std::max(worst_r2, std::abs(1 - sample_variance(e) / sample_variance(y) - r2));
      }
  report(7, worst_identity <= kCalibrationAbs && worst_r2 <= kPseudoR2Tol,
         "max |Var_w(b) + sum w sigma2 - sigma^2(1-R2)|=" + fmt(worst_identity) + "; max |pseudo-R2 - R2|=" +
             fmt(worst_r2) + " over " + std::to_string(patterns) + " pattern x R2 cells at N=10000");
}

void criterion8() {
  auto design = [](std::vector<double> means) {
    PowerDesign d;
    for (int z = 0; z < 2; ++z) {
      PowerArm a;
      a.y_var = 49 + z;
      const double var[] = {0.0025, 0.01, 0.04, 9};
      for (int k = 0; k < 4; ++k) a.strata.push_back({250.0 + 50 * k, means[k], var[k]});
      d.arms.push_back(a);
    }
    return d;
  };
  const auto spread = design({-0.5, -2, -4, -7}), flat = design({-1, -1, -1, -1});
  const auto grid = parse_h_grid("0.02:1:0.02");
  const auto cs = mdes_curve(spread, grid), cf = mdes_curve(flat, grid);
  double full_se2 = 0;
  for (const auto& a : spread.arms) full_se2 += a.y_var / a.N();
  const double full = spread.multiplier() * std::sqrt(full_se2);
  const bool at_one = rel_err(cs.back().mdes_srs, full) < 1e-14 && rel_err(cs.back().mdes_stratified, full) < 1e-14;
  bool below = true, equal = true;
  for (std::size_t i = 0; i + 1 < cs.size(); ++i) {
    below &= cs[i].mdes_stratified < cs[i].mdes_srs;
    equal &= rel_err(cf[i].mdes_stratified, cf[i].mdes_srs) < 1e-13;
  }
  const auto gap = std::find_if(cs.begin(), cs.end(), [](const MdesPoint& p) { return p.mdes_stratified <= 1.0; });
  const auto gap_srs = std::find_if(cs.begin(), cs.end(), [](const MdesPoint& p) { return p.mdes_srs <= 1.0; });
  report(8, at_one && below && equal,
         std::string("h=1 equals full-coding MDES: ") + (at_one ? "yes" : "no") + "; stratified < SRS for h<1: " +
             (below ? "yes" : "no") + "; equal under equal residual means: " + (equal ? "yes" : "no") +
             "; MDES<=1 reached at h=" + (gap != cs.end() ? fmt(gap->h) : "none") + " (stratified) vs " +
             (gap_srs != cs.end() ? fmt(gap_srs->h) : "none") + " (SRS)");
}

// Fixed two-arm corpus with monotone negative stratum residual means.
void criterion9() {
  Rng rng(derive_seed(9, {1}));
  const double centre[] = {2, 7, 13, 20}, resid_mean[] = {-0.5, -2, -4, -7}, resid_sd[] = {0.05, 0.1, 0.2, 3};
  std::vector<UnitRecord> units;
  std::vector<int> labels;
  for (int i = 0; i < 2000; ++i) {
    const int arm = i % 2, k = (i / 2) % 4;
    UnitRecord u;
    char id[16];
    std::snprintf(id, sizeof id, "c%05d", i);
    u.id = id;
    u.arm = arm;
    u.y_hat = rng.normal(centre[k] + 0.5 * arm, 2.0);
    u.y = u.y_hat + rng.normal(resid_mean[k], resid_sd[k]);
    units.push_back(std::move(u));
    labels.push_back(k);
  }
  const PopulationTable pop(std::move(units), ArmMode::two_arm);
  const StrataAssignment strata(pop, labels);
  const auto r = resample_repeats(pop, strata, Budget::fraction(0.3), 20, 99);
  const auto& v = r.empirical_variance;
  const bool ok = r.estimators == std::vector<std::string>{"subset", "ma_srs", "ma_stratified_prop",
                                                            "ma_stratified_opt"} &&
                  v[0] > v[1] && v[1] > v[2] && v[2] >= v[3];
  report(9, ok,
         "empirical variance over 20 repeats at h=0.3: subset=" + fmt(v[0]) + " ma_srs=" + fmt(v[1]) +
             " prop=" + fmt(v[2]) + " opt=" + fmt(v[3]));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion10(const std::string& binary) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "stratma_acceptance";
  fs::create_directories(dir);
  {
    std::ofstream(dir / "grid.json") << R"({"schema": "stratma.grid/v1", "replications": 50, "seed": 31,
      "bias": ["moderate", "extreme_contrast"], "variance": ["heterogeneous"], "r2": [0.4],
      "strata": ["balanced_approx", "unbalanced"], "h": [0.1, 0.4], "pilot": true})";
    std::ofstream pop(dir / "pop.csv");
    pop << "id,arm,y_hat,y,s,wc\n";
    Rng rng(10);
    for (int i = 0; i < 600; ++i) {
      const double yh = rng.normal(0, 2);
      pop << "p" << i << ',' << i % 2 << ',' << format_double(yh) << ','
          << (rng.uniform() < 0.5 ? format_double(yh + rng.normal(-0.3 * yh, 1)) : "") << ',' << 1 + (i / 2) % 3 << ','
          << static_cast<int>(rng.uniform(50, 400)) << '\n';
    }
  }
  const std::string grid = (dir / "grid.json").string(), pop = (dir / "pop.csv").string();
  std::vector<std::vector<std::string>> commands{
      {"simulate", "--config", grid},
      {"allocate", "--input", pop, "--arm-col", "arm", "--stratum-col", "s", "--budget", "0.2N", "--method", "neyman",
       "--seed", "5", "--draw-out", (dir / "draw.csv").string()},
      {"stratify", "--input", pop, "--arm-col", "arm", "--vars", "y_hat,wc", "--min-size", "20"},
      {"estimate", "--input", pop, "--arm-col", "arm", "--stratum-col", "s", "--format", "json"},
  };
  bool ok = true;
  int runs = 0;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    std::string reference, reference_draw;
    for (int t : {1, 2, 4}) {
      for (int rep = 0; rep < 2; ++rep) {
        auto args = commands[c];
        args.push_back("--threads");
        args.push_back(std::to_string(t));
        const auto out = dir / ("out_" + std::to_string(c) + ".txt");
        args.push_back("--output");
        args.push_back(out.string());
        std::ostringstream sink, err;
        ok &= cli::run(args, sink, err) == 0;
        const std::string got = slurp(out), draw = c == 1 ? slurp(dir / "draw.csv") : "";
        if (reference.empty()) reference = got, reference_draw = draw;
        ok &= !got.empty() && got == reference && draw == reference_draw;
        ++runs;
      }
    }
  }
  // the installed binary must agree with the in-process run
  if (!binary.empty()) {
    const auto a = dir / "bin_a.csv", b = dir / "bin_b.csv";
    const std::string base = "\"" + binary + "\" simulate --config \"" + grid + "\" --output ";
    ok &= std::system((base + "\"" + a.string() + "\" --threads 1").c_str()) == 0;
    ok &= std::system(("STRATMA_THREADS=3 " + base + "\"" + b.string() + "\"").c_str()) == 0;
    ok &= slurp(a) == slurp(b) && slurp(a) == slurp(dir / "out_0.txt");
    runs += 2;
  }
  report(10, ok, std::to_string(runs) + " runs of simulate/allocate/stratify/estimate at 1, 2 and 4 threads: " +
                     (ok ? "byte-identical" : "outputs differ"));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string binary = argc > 1 ? argv[1] : "";
  const std::vector<std::function<void()>> all{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                criterion6, criterion7, criterion8, criterion9,
                                                [&] { criterion10(binary); }};
  for (std::size_t i = 0; i < all.size(); ++i) {
    try {
      all[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), false, std::string("threw: ") + e.what());
    }
  }
  std::cout << (g_failed == 0 ? "all criteria passed" : std::to_string(g_failed) + " criteria failed") << std::endl;
  return g_failed == 0 ? 0 : 1;
}
