#include "stratma/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

#include "json.hpp"
#include "stratma/rng.hpp"
#include "stratma/sampling.hpp"
#include "stratma/variance.hpp"

namespace stratma {

// ---------------------------------------------------------------------------
// Factor levels

const char* to_string(BiasPattern p) {
  switch (p) {
    case BiasPattern::none: return "none";
    case BiasPattern::small: return "small";
    case BiasPattern::moderate: return "moderate";
    case BiasPattern::large: return "large";
    case BiasPattern::extreme_contrast: return "extreme_contrast";
  }
  return "none";
}

const char* to_string(VariancePattern p) {
  switch (p) {
    case VariancePattern::homogeneous: return "homogeneous";
    case VariancePattern::heterogeneous: return "heterogeneous";
    case VariancePattern::extreme_contrast: return "extreme_contrast";
  }
  return "homogeneous";
}

const char* to_string(StrataConfig c) {
  switch (c) {
    case StrataConfig::balanced_exact: return "balanced_exact";
    case StrataConfig::balanced_approx: return "balanced_approx";
    case StrataConfig::unbalanced: return "unbalanced";
  }
  return "balanced_exact";
}

namespace {

template <typename E>
E parse_level(const std::string& s, std::initializer_list<E> all, const char* what) {
  for (E e : all) {
    if (s == to_string(e)) return e;
  }
  throw Error(ErrorCode::InvalidConfig, std::string("unknown ") + what + " '" + s + "'");
}

std::vector<double> linear(double lo, double hi, int K) {
  std::vector<double> v(K);
  for (int k = 0; k < K; ++k) v[k] = K == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * k / (K - 1.0);
  return v;
}

std::vector<double> contrast(double lo, double mid, double hi, int K) {
  std::vector<double> v(K, mid);
  v.front() = lo;
  v.back() = hi;
  return v;
}

}  // namespace

BiasPattern parse_bias_pattern(const std::string& s) {
  return parse_level(s, {BiasPattern::none, BiasPattern::small, BiasPattern::moderate, BiasPattern::large,
                         BiasPattern::extreme_contrast},
                     "bias pattern");
}

VariancePattern parse_variance_pattern(const std::string& s) {
  return parse_level(s, {VariancePattern::homogeneous, VariancePattern::heterogeneous,
                         VariancePattern::extreme_contrast},
                     "variance pattern");
}

StrataConfig parse_strata_config(const std::string& s) {
  return parse_level(s, {StrataConfig::balanced_exact, StrataConfig::balanced_approx, StrataConfig::unbalanced},
                     "strata configuration");
}

std::vector<double> bias_pattern_values(BiasPattern p, int K) {
  if (K < 1) throw Error(ErrorCode::InvalidConfig, "K must be positive");
  if (K == 4) {
    switch (p) {
      case BiasPattern::none: return {0, 0, 0, 0};
      case BiasPattern::small: return {-0.25, -0.08, 0.08, 0.25};
      case BiasPattern::moderate: return {-0.5, -0.17, 0.17, 0.5};
      case BiasPattern::large: return {-1.0, -0.34, 0.34, 1.0};
      case BiasPattern::extreme_contrast: return {-1.0, 0.0, 0.0, 1.0};
    }
  }
  switch (p) {
    case BiasPattern::none: return std::vector<double>(K, 0.0);
    case BiasPattern::small: return linear(-0.25, 0.25, K);
    case BiasPattern::moderate: return linear(-0.5, 0.5, K);
    case BiasPattern::large: return linear(-1.0, 1.0, K);
    case BiasPattern::extreme_contrast: return contrast(-1.0, 0.0, 1.0, K);
  }
  return {};
}

std::vector<double> variance_pattern_values(VariancePattern p, int K) {
  if (K < 1) throw Error(ErrorCode::InvalidConfig, "K must be positive");
  switch (p) {
    case VariancePattern::homogeneous: return std::vector<double>(K, 1.0);
    case VariancePattern::heterogeneous: return linear(0.25, 4.0, K);
    case VariancePattern::extreme_contrast: return contrast(0.1, 1.0, 10.0, K);
  }
  return {};
}

void ScenarioConfig::check() const {
  if (N < 4 || N % 2 != 0) throw Error(ErrorCode::InvalidConfig, "N must be even and at least 4");
  if (K < 1) throw Error(ErrorCode::InvalidConfig, "K must be positive");
  if (!(h > 0.0 && h <= 1.0)) throw Error(ErrorCode::InvalidConfig, "h must lie in (0, 1]");
  if (!(r2 > 0.0 && r2 < 1.0)) throw Error(ErrorCode::InvalidR2, "R2 must lie in (0, 1)");
  if (!(sigma_y > 0.0)) throw Error(ErrorCode::InvalidConfig, "sigma_y must be positive");
  if (replications < 1) throw Error(ErrorCode::InvalidConfig, "replications must be at least 1");
  if (!(pilot_fraction > 0.0 && pilot_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "pilot_fraction must lie in (0, 1)");
  }
}

// ---------------------------------------------------------------------------
// DGP

Calibration calibrate_dgp(BiasPattern bias, VariancePattern variance, double r2, double sigma_y,
                          const std::vector<double>& weights) {
  if (!(r2 > 0.0 && r2 < 1.0)) throw Error(ErrorCode::InvalidR2, "R2 must lie in (0, 1)");
  const int K = static_cast<int>(weights.size());
  if (K == 0) throw Error(ErrorCode::NonpositiveWeights, "no stratum weights");
  for (double w : weights) {
    if (!(w > 0.0)) throw Error(ErrorCode::NonpositiveWeights, "stratum weights must be positive");
  }
  const Eigen::Map<const VectorXd> w(weights.data(), K);
  if (std::abs(w.sum() - 1.0) > 1e-9) throw Error(ErrorCode::NonpositiveWeights, "stratum weights must sum to 1");

  const auto pattern = bias_pattern_values(bias, K);
  VectorXd bp = Eigen::Map<const VectorXd>(pattern.data(), K) * sigma_y;
  bp.array() -= bp.dot(w);
  const auto vv = variance_pattern_values(variance, K);
  const Eigen::Map<const VectorXd> v(vv.data(), K);

  Calibration cal;
  cal.V = v.dot(w);
  cal.c = sigma_y * sigma_y * (1.0 - r2) / (weighted_variance(bp, w) + 1.0);
  for (int k = 0; k < K; ++k) {
    cal.b.push_back(std::sqrt(cal.c) * bp[k]);
    cal.sigma2_eps.push_back(cal.c * v[k] / cal.V);
  }
  return cal;
}

SimPopulation generate_population(const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.check();
  Rng rng(seed);
  const int N = cfg.N, K = cfg.K, Nz = N / 2;

  // Completely randomized design: the first N/2 of a random permutation are treated.
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  order = choose_without_replacement(order, order.size(), rng);
  std::vector<int> arm(N, 0);
  for (int j = 0; j < Nz; ++j) arm[order[j]] = 1;

  // Stratum membership within each arm.
  std::vector<int> stratum(N, 0);
  for (int z = 0; z < 2; ++z) {
    std::vector<std::size_t> members;
    for (int i = 0; i < N; ++i) {
      if (arm[i] == z) members.push_back(i);
    }
    if (cfg.strata == StrataConfig::balanced_exact) {
      // Members are already in random order relative to everything else.
      for (std::size_t j = 0; j < members.size(); ++j) {
        stratum[members[j]] = static_cast<int>(j * K / members.size());
      }
      continue;
    }
    std::vector<double> pi(K, 1.0 / K);
    if (cfg.strata == StrataConfig::unbalanced) {
      double s = 0.0;
      for (double& p : pi) s += (p = rng.uniform(0.2, 0.8));
      for (double& p : pi) p /= s;
    }
    for (std::size_t i : members) {
      const double u = rng.uniform();
      double acc = 0.0;
      int k = 0;
      for (; k < K - 1; ++k) {
        acc += pi[k];
        if (u < acc) break;
      }
      stratum[i] = k;
    }
  }

  // Calibration weights: realized overall stratum proportions.
  std::vector<double> w(K, 0.0);
  for (int i = 0; i < N; ++i) w[stratum[i]] += 1.0;
  for (double& x : w) x = std::max(x, 0.5) / N;  // an empty stratum keeps a token weight
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= wsum;

  SimPopulation out;
  out.calibration = calibrate_dgp(cfg.bias, cfg.variance, cfg.r2, cfg.sigma_y, w);
  out.y0.resize(N);
  out.y1.resize(N);
  std::vector<UnitRecord> units(N);
  const int width = static_cast<int>(std::to_string(N - 1).size());
  for (int i = 0; i < N; ++i) {
    out.y0[i] = rng.normal(0.0, cfg.sigma_y);
    out.y1[i] = out.y0[i] + cfg.tau;
    const double y = arm[i] ? out.y1[i] : out.y0[i];
    const int k = stratum[i];
    const double eps = rng.normal(0.0, std::sqrt(out.calibration.sigma2_eps[k]));
    std::string id = std::to_string(i);
    units[i].id = "u" + std::string(width - id.size(), '0') + id;
    units[i].arm = arm[i];
    units[i].y = y;
    units[i].y_hat = y + out.calibration.b[k] + eps;
  }
  out.table = PopulationTable(std::move(units), ArmMode::two_arm);

  // Relabel densely within arm so an empty design stratum does not leave a gap.
  std::vector<int> labels(N);
  for (int z = 0; z < 2; ++z) {
    std::set<int> used;
    for (std::size_t i : out.table.arm_members(z)) used.insert(stratum[i]);
    std::vector<int> dense(used.begin(), used.end());
    for (std::size_t i : out.table.arm_members(z)) {
      labels[i] = static_cast<int>(std::lower_bound(dense.begin(), dense.end(), stratum[i]) - dense.begin());
    }
  }
  out.strata = StrataAssignment(out.table, std::move(labels));
  return out;
}

// ---------------------------------------------------------------------------
// Scenarios

namespace {

constexpr std::uint64_t kPopulationStream = 1;
constexpr std::uint64_t kSrsStream = 2;
constexpr std::uint64_t kStratifiedStream = 3;
constexpr std::uint64_t kPilotStream = 4;

struct RepOutput {
  std::vector<double> est;
  std::vector<double> se;  // NaN when missing
};

std::vector<double> oracle_sds(const StratumValues<double>& e, int z) {
  std::vector<double> s;
  for (const auto& v : e[z]) s.push_back(v.size() > 1 ? std::sqrt(sample_variance(v)) : 0.0);
  return s;
}

std::vector<std::string> estimator_names(const ScenarioConfig& cfg) {
  std::vector<std::string> names{"oracle", "subset", "ma_srs", "ma_stratified_prop", "ma_stratified_opt"};
  if (cfg.pilot) names.push_back("ma_stratified_pilot");
  return names;
}

double se_or_nan(const EstimateReport& r) { return r.se ? *r.se : NAN; }

// Neyman SDs estimated from an SRS pilot; strata with fewer than two pilot
// units borrow the pilot's pooled arm SD.
std::vector<std::vector<double>> pilot_sds(const SimPopulation& sp, double fraction, Seed seed) {
  const auto& pop = sp.table;
  std::vector<int> budgets;
  for (int z = 0; z < 2; ++z) {
    budgets.push_back(std::max(2, static_cast<int>(std::floor(fraction * pop.arm_size(z) + 1e-9))));
  }
  const SampleDraw pilot = srs_sample(pop, budgets, seed);
  std::vector<std::vector<std::vector<double>>> e(2);
  std::vector<std::vector<double>> pooled(2);
  for (int z = 0; z < 2; ++z) e[z].resize(sp.strata.n_strata(z));
  for (std::size_t i : pilot.selected) {
    const double r = *pop.unit(i).y - pop.unit(i).y_hat;
    e[pop.arm_of(i)][sp.strata.label(i)].push_back(r);
    pooled[pop.arm_of(i)].push_back(r);
  }
  std::vector<std::vector<double>> sds(2);
  for (int z = 0; z < 2; ++z) {
    const double fallback =
        std::sqrt(sample_variance(Eigen::Map<const VectorXd>(pooled[z].data(), pooled[z].size())));
    for (const auto& v : e[z]) {
      sds[z].push_back(v.size() > 1 ? std::sqrt(sample_variance(Eigen::Map<const VectorXd>(v.data(), v.size())))
                                    : fallback);
    }
  }
  return sds;
}

RepOutput run_replication(const ScenarioConfig& cfg, int rep) {
  const auto r = static_cast<std::uint64_t>(rep);
  const SimPopulation sp = generate_population(cfg, derive_seed(cfg.seed, {cfg.scenario_id, r, kPopulationStream}));
  const auto& pop = sp.table;
  EstimateOptions opt;
  opt.ci_level = cfg.ci_level;

  std::vector<int> budgets;
  for (int z = 0; z < 2; ++z) budgets.push_back(static_cast<int>(std::floor(cfg.h * pop.arm_size(z) + 1e-9)));

  RepOutput out;
  auto push = [&](const EstimateReport& rep_) {
    out.est.push_back(rep_.estimate);
    out.se.push_back(se_or_nan(rep_));
  };

  push(estimate_oracle(pop, opt));
  const SampleDraw srs = srs_sample(pop, budgets, {derive_seed(cfg.seed, {cfg.scenario_id, r, kSrsStream}), 0});
  push(estimate_subset(pop, srs, opt));
  push(estimate_ma_srs(pop, srs, opt));

  const Seed strat_seed{derive_seed(cfg.seed, {cfg.scenario_id, r, kStratifiedStream}), 0};
  std::vector<std::vector<int>> sizes{sp.strata.counts(0), sp.strata.counts(1)};
  const Allocation prop = allocate(sizes, budgets, AllocationMethod::proportional, {}, cfg.min_floor);
  push(estimate_ma_stratified(pop, sp.strata, stratified_sample(pop, sp.strata, prop, strat_seed), &prop, opt));

  const auto e = stratum_residuals(pop, sp.strata);
  const Allocation opt_alloc =
      allocate(sizes, budgets, AllocationMethod::neyman, {oracle_sds(e, 0), oracle_sds(e, 1)}, cfg.min_floor);
  push(estimate_ma_stratified(pop, sp.strata, stratified_sample(pop, sp.strata, opt_alloc, strat_seed), &opt_alloc,
                              opt));

  if (cfg.pilot) {
    const auto sds =
        pilot_sds(sp, cfg.pilot_fraction, {derive_seed(cfg.seed, {cfg.scenario_id, r, kPilotStream}), 0});
    const Allocation pa = allocate(sizes, budgets, AllocationMethod::neyman, sds, cfg.min_floor);
    push(estimate_ma_stratified(pop, sp.strata, stratified_sample(pop, sp.strata, pa, strat_seed), &pa, opt));
  }
  return out;
}

// Run f(i) for i in [0, n) on up to `threads` workers. The lowest-index
// exception, if any, is rethrown.
template <typename F>
void parallel_for(int n, int threads, F&& f) {
  threads = std::max(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double variance_of(const std::vector<double>& x) {
  return sample_variance(Eigen::Map<const VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
}

}  // namespace

const EstimatorMetrics& ScenarioResult::get(const std::string& name) const {
  for (const auto& m : estimators) {
    if (m.estimator == name) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "no estimator named '" + name + "'");
}

ScenarioResult run_scenario(const ScenarioConfig& cfg, int threads) {
  cfg.check();
  std::vector<RepOutput> reps(cfg.replications);
  parallel_for(cfg.replications, threads, [&](int r) { reps[r] = run_replication(cfg, r); });

  ScenarioResult res;
  res.config = cfg;
  const auto names = estimator_names(cfg);
  const double zq = normal_quantile(1.0 - (1.0 - cfg.ci_level) / 2.0);
  std::vector<double> variances(names.size());
  res.estimates.assign(names.size(), {});
  for (std::size_t j = 0; j < names.size(); ++j) {
    EstimatorMetrics m;
    m.estimator = names[j];
    double sum_err = 0.0, sum_sq = 0.0, sum_se = 0.0;
    int covered = 0, with_se = 0;
    for (const auto& rep : reps) {
      const double est = rep.est[j];
      const double se = rep.se[j];
      res.estimates[j].push_back(est);
      sum_err += est - cfg.tau;
      sum_sq += (est - cfg.tau) * (est - cfg.tau);
      if (std::isnan(se)) {
        ++m.failures;
        continue;
      }
      ++with_se;
      sum_se += se;
      if (std::abs(est - cfg.tau) <= zq * se) ++covered;
    }
    const double R = cfg.replications;
    m.bias = sum_err / R;
    m.mse = sum_sq / R;
    variances[j] = cfg.replications > 1 ? variance_of(res.estimates[j]) : 0.0;
    m.emp_se = std::sqrt(variances[j]);
    m.mean_est_se = with_se ? sum_se / with_se : NAN;
    m.coverage = with_se ? double(covered) / with_se : NAN;
    res.estimators.push_back(m);
  }
  const double v_srs = variances[2], v_full = variances[0];
  for (std::size_t j = 0; j < names.size(); ++j) {
    res.estimators[j].var_reduction_vs_srs = v_srs > 0 ? 100.0 * (1.0 - variances[j] / v_srs) : NAN;
    res.estimators[j].var_inflation_vs_full = v_full > 0 ? variances[j] / v_full : NAN;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Grid

GridConfig GridConfig::full_factorial() {
  GridConfig g;
  g.bias = {BiasPattern::none, BiasPattern::small, BiasPattern::moderate, BiasPattern::large,
            BiasPattern::extreme_contrast};
  g.variance = {VariancePattern::homogeneous, VariancePattern::heterogeneous, VariancePattern::extreme_contrast};
  g.r2 = {0.4, 0.85};
  g.strata = {StrataConfig::balanced_exact, StrataConfig::balanced_approx, StrataConfig::unbalanced};
  g.h = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  return g;
}

namespace {

constexpr const char* kGridSchema = "stratma.grid/v1";

template <typename T>
std::vector<T> list_of(const nlohmann::json& j, const char* key) {
  if (!j.is_array()) throw Error(ErrorCode::InvalidConfig, std::string("'") + key + "' must be a list");
  std::vector<T> out;
  for (const auto& x : j) out.push_back(x.get<T>());
  return out;
}

}  // namespace

GridConfig GridConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  if (!j.contains("schema") || j["schema"] != kGridSchema) {
    throw Error(ErrorCode::InvalidConfig, std::string("config schema must be \"") + kGridSchema + "\"");
  }
  GridConfig g = full_factorial();
  ScenarioConfig& b = g.base;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "schema") continue;
      else if (key == "N") b.N = v.get<int>();
      else if (key == "K") b.K = v.get<int>();
      else if (key == "sigma_y") b.sigma_y = v.get<double>();
      else if (key == "tau") b.tau = v.get<double>();
      else if (key == "replications") b.replications = v.get<int>();
      else if (key == "seed") b.seed = v.get<std::uint64_t>();
      else if (key == "min_floor") b.min_floor = v.get<int>();
      else if (key == "pilot") b.pilot = v.get<bool>();
      else if (key == "pilot_fraction") b.pilot_fraction = v.get<double>();
      else if (key == "ci_level") b.ci_level = v.get<double>();
      else if (key == "r2") g.r2 = list_of<double>(v, "r2");
      else if (key == "h") g.h = list_of<double>(v, "h");
      else if (key == "bias") {
        g.bias.clear();
        for (const auto& s : list_of<std::string>(v, "bias")) g.bias.push_back(parse_bias_pattern(s));
      } else if (key == "variance") {
        g.variance.clear();
        for (const auto& s : list_of<std::string>(v, "variance")) g.variance.push_back(parse_variance_pattern(s));
      } else if (key == "strata") {
        g.strata.clear();
        for (const auto& s : list_of<std::string>(v, "strata")) g.strata.push_back(parse_strata_config(s));
      } else {
        throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad config value: ") + e.what());
  }
  return g;
}

std::string GridConfig::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = kGridSchema;
  j["N"] = base.N;
  j["K"] = base.K;
  j["sigma_y"] = base.sigma_y;
  j["tau"] = base.tau;
  j["replications"] = base.replications;
  j["seed"] = base.seed;
  j["min_floor"] = base.min_floor;
  j["pilot"] = base.pilot;
  j["pilot_fraction"] = base.pilot_fraction;
  j["ci_level"] = base.ci_level;
  j["bias"] = nlohmann::json::array();
  for (auto p : bias) j["bias"].push_back(to_string(p));
  j["variance"] = nlohmann::json::array();
  for (auto p : variance) j["variance"].push_back(to_string(p));
  j["r2"] = r2;
  j["strata"] = nlohmann::json::array();
  for (auto p : strata) j["strata"].push_back(to_string(p));
  j["h"] = h;
  return j.dump(2);
}

std::vector<ScenarioConfig> expand_grid(const GridConfig& grid) {
  std::vector<ScenarioConfig> out;
  std::uint64_t id = 0;
  for (auto b : grid.bias)
    for (auto v : grid.variance)
      for (double r2 : grid.r2)
        for (auto s : grid.strata)
          for (double h : grid.h) {
            ScenarioConfig c = grid.base;
            c.bias = b;
            c.variance = v;
            c.r2 = r2;
            c.strata = s;
            c.h = h;
            c.scenario_id = id++;
            out.push_back(c);
          }
  return out;
}

std::vector<GridCell> run_grid(const GridConfig& grid, int threads) {
  std::vector<GridCell> cells;
  for (const auto& cfg : expand_grid(grid)) {
    GridCell cell;
    cell.config = cfg;
    try {
      cell.result = run_scenario(cfg, threads);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

void write_grid_csv(std::ostream& out, const std::vector<GridCell>& cells) {
  out << "scenario,N,K,bias_pattern,variance_pattern,r2,strata_config,h,replications,seed,"
         "estimator,bias,emp_se,mse,mean_est_se,coverage,var_reduction_vs_srs,var_inflation_vs_full,"
         "failures,error\n";
  for (const auto& cell : cells) {
    const auto& c = cell.config;
    const std::string prefix = std::to_string(c.scenario_id) + ',' + std::to_string(c.N) + ',' +
                               std::to_string(c.K) + ',' + to_string(c.bias) + ',' + to_string(c.variance) +
                               ',' + format_double(c.r2) + ',' + to_string(c.strata) + ',' +
                               format_double(c.h) + ',' + std::to_string(c.replications) + ',' +
                               std::to_string(c.seed) + ',';
    if (!cell.result) {
      std::string msg = cell.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << prefix << ",NA,NA,NA,NA,NA,NA,NA,NA," << msg << '\n';
      continue;
    }
    for (const auto& m : cell.result->estimators) {
      out << prefix << m.estimator << ',' << format_double(m.bias) << ',' << format_double(m.emp_se) << ','
          << format_double(m.mse) << ',' << format_double(m.mean_est_se) << ',' << format_double(m.coverage)
          << ',' << format_double(m.var_reduction_vs_srs) << ',' << format_double(m.var_inflation_vs_full) << ','
          << m.failures << ",\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Fixed-corpus repeats

RepeatsResult resample_repeats(const PopulationTable& pop, const StrataAssignment& strata,
                               const Budget& budget, int repeats, std::uint64_t seed, int min_floor) {
  if (repeats < 2) throw Error(ErrorCode::InvalidArgument, "at least 2 repeats required");
  RepeatsResult res;
  res.estimators = {"subset", "ma_srs", "ma_stratified_prop", "ma_stratified_opt"};
  res.estimates.assign(res.estimators.size(), {});
  std::vector<int> budgets;
  std::vector<std::vector<int>> sizes;
  for (int z = 0; z < pop.n_arms(); ++z) {
    budgets.push_back(budget.for_arm(static_cast<int>(pop.arm_size(z))));
    sizes.push_back(strata.counts(z));
  }
  const auto e = stratum_residuals(pop, strata);
  std::vector<std::vector<double>> sds;
  for (int z = 0; z < pop.n_arms(); ++z) sds.push_back(oracle_sds(e, z));
  const Allocation prop = allocate(sizes, budgets, AllocationMethod::proportional, {}, min_floor);
  const Allocation ney = allocate(sizes, budgets, AllocationMethod::neyman, sds, min_floor);
  for (int r = 0; r < repeats; ++r) {
    const auto rr = static_cast<std::uint64_t>(r);
    const SampleDraw srs = srs_sample(pop, budgets, {derive_seed(seed, {rr, kSrsStream}), 0});
    const Seed ss{derive_seed(seed, {rr, kStratifiedStream}), 0};
    res.estimates[0].push_back(estimate_subset(pop, srs).estimate);
    res.estimates[1].push_back(estimate_ma_srs(pop, srs).estimate);
    res.estimates[2].push_back(
        estimate_ma_stratified(pop, strata, stratified_sample(pop, strata, prop, ss), &prop).estimate);
    res.estimates[3].push_back(
        estimate_ma_stratified(pop, strata, stratified_sample(pop, strata, ney, ss), &ney).estimate);
  }
  for (const auto& v : res.estimates) res.empirical_variance.push_back(variance_of(v));
  return res;
}

// ---------------------------------------------------------------------------
// Exhaustive oracle

PopulationTable tiny_table(const TinyPopulation& pop, const std::vector<int>& z) {
  const std::size_t N = pop.y0.size();
  std::vector<UnitRecord> units(N);
  const int width = static_cast<int>(std::to_string(N).size());
  for (std::size_t i = 0; i < N; ++i) {
    std::string id = std::to_string(i);
    units[i].id = "t" + std::string(width - id.size(), '0') + id;
    units[i].arm = z[i];
    units[i].y = z[i] ? pop.y1[i] : pop.y0[i];
    units[i].y_hat = z[i] ? pop.yhat1[i] : pop.yhat0[i];
  }
  return PopulationTable(std::move(units), ArmMode::two_arm);
}

namespace {

// All k-subsets of {0..n-1} in lexicographic order.
std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> c(k);
  std::iota(c.begin(), c.end(), 0);
  if (k > n) return out;
  for (;;) {
    out.push_back(c);
    std::size_t i = k;
    while (i > 0 && c[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++c[i - 1];
    for (std::size_t j = i; j < k; ++j) c[j] = c[j - 1] + 1;
  }
  return out;
}

double binom(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// Cartesian product of per-group subset choices, mapped to unit positions.
std::vector<std::vector<std::size_t>> product_draws(const std::vector<std::vector<std::size_t>>& groups,
                                                    const std::vector<int>& take) {
  std::vector<std::vector<std::size_t>> draws{{}};
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto choices = subsets(groups[g].size(), static_cast<std::size_t>(take[g]));
    std::vector<std::vector<std::size_t>> next;
    for (const auto& d : draws) {
      for (const auto& c : choices) {
        auto e = d;
        for (std::size_t j : c) e.push_back(groups[g][j]);
        next.push_back(std::move(e));
      }
    }
    draws = std::move(next);
  }
  for (auto& d : draws) std::sort(d.begin(), d.end());
  return draws;
}

double pop_variance(const std::vector<double>& x, const std::vector<double>& w, double m) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * (x[i] - m) * (x[i] - m);
  return acc;
}

double weighted_mean(const std::vector<double>& x, const std::vector<double>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * x[i];
  return acc;
}

}  // namespace

OracleSummary exhaustive_oracle(const TinyPopulation& tp, const StratumRule& strata_rule,
                                const QuotaRule& quotas, std::size_t cap) {
  const std::size_t N = tp.y0.size();
  if (tp.y1.size() != N || tp.yhat0.size() != N || tp.yhat1.size() != N) {
    throw Error(ErrorCode::InvalidArgument, "tiny population vectors differ in length");
  }
  const auto n1 = static_cast<std::size_t>(tp.n_treated);
  if (n1 < 2 || N - n1 < 2) throw Error(ErrorCode::InvalidArgument, "each arm needs at least 2 units");
  const double n_assign = binom(N, n1);
  if (n_assign > static_cast<double>(cap)) {
    throw Error(ErrorCode::EnumerationTooLarge, "more than " + std::to_string(cap) + " assignments");
  }

  OracleSummary s;
  VectorXd tau(static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < N; ++i) tau[static_cast<Eigen::Index>(i)] = tp.y1[i] - tp.y0[i];
  s.true_ate = mean(tau);
  s.tau_variance = sample_variance(tau);

  std::vector<double> strat_est, strat_w, srs_est, srs_w, sub_est, plug, oracle_est;
  std::vector<double> cond_terms, deltas, gaps;
  bool plugin_defined = true;

  for (const auto& treated : subsets(N, n1)) {
    std::vector<int> z(N, 0);
    for (std::size_t i : treated) z[i] = 1;
    const PopulationTable pop = tiny_table(tp, z);
    const StrataAssignment strata(pop, strata_rule(z));
    std::vector<std::vector<int>> sizes{strata.counts(0), strata.counts(1)};
    const Quotas n = quotas(sizes);

    // Stratified draws.
    std::vector<std::vector<std::size_t>> groups;
    std::vector<int> take;
    for (int a = 0; a < 2; ++a) {
      for (int k = 0; k < strata.n_strata(a); ++k) {
        groups.push_back(strata.members(a, k));
        take.push_back(n[a][k]);
      }
    }
    double count = 1.0;
    for (std::size_t g = 0; g < groups.size(); ++g) count *= binom(groups[g].size(), take[g]);
    s.evaluations += static_cast<std::size_t>(count);
    if (static_cast<double>(s.evaluations) > static_cast<double>(cap)) {
      throw Error(ErrorCode::EnumerationTooLarge, "more than " + std::to_string(cap) + " evaluations");
    }
    const auto draws = product_draws(groups, take);
    const Allocation alloc = Allocation::manual(n);
    std::vector<double> cond_strat;
    for (const auto& sel : draws) {
      SampleDraw d;
      d.selected = sel;
      d.scheme = Scheme::stratified;
      d.counts = n;
      const auto r = estimate_ma_stratified(pop, strata, d, &alloc);
      cond_strat.push_back(r.estimate);
      strat_est.push_back(r.estimate);
      strat_w.push_back(1.0 / (n_assign * draws.size()));
      if (r.se) plug.push_back(*r.se * *r.se);
      else plugin_defined = false;
    }

    // SRS draws with the same per-arm budgets.
    std::vector<std::vector<std::size_t>> arms{pop.arm_members(0), pop.arm_members(1)};
    std::vector<int> budgets;
    for (const auto& row : n) budgets.push_back(std::accumulate(row.begin(), row.end(), 0));
    const auto srs_draws = product_draws(arms, budgets);
    std::vector<double> cond_srs;
    for (const auto& sel : srs_draws) {
      SampleDraw d;
      d.selected = sel;
      d.counts = {{budgets[0]}, {budgets[1]}};
      const double v = estimate_ma_srs(pop, d).estimate;
      cond_srs.push_back(v);
      srs_est.push_back(v);
      srs_w.push_back(1.0 / (n_assign * srs_draws.size()));
      sub_est.push_back(estimate_subset(pop, d).estimate);
    }

    oracle_est.push_back(estimate_oracle(pop).estimate);
    const auto e = stratum_residuals(pop, strata);
    cond_terms.push_back(exact_conditional_variance(e, n));
    const auto dec = bs_ws_decomposition(e, n);
    deltas.push_back(dec.delta);

    const std::vector<double> ws(cond_strat.size(), 1.0 / cond_strat.size());
    const std::vector<double> wr(cond_srs.size(), 1.0 / cond_srs.size());
    const double gap = pop_variance(cond_srs, wr, weighted_mean(cond_srs, wr)) -
                       pop_variance(cond_strat, ws, weighted_mean(cond_strat, ws));
    gaps.push_back(gap);
    const double scale = std::max({std::abs(gap), std::abs(dec.bs) + std::abs(dec.ws), 1e-300});
    s.max_conditional_gap_error = std::max(s.max_conditional_gap_error, std::abs(gap - dec.delta) / scale);
    ++s.assignments;
  }

  s.mean_stratified = weighted_mean(strat_est, strat_w);
  s.var_stratified = pop_variance(strat_est, strat_w, s.mean_stratified);
  s.mean_srs = weighted_mean(srs_est, srs_w);
  s.var_srs = pop_variance(srs_est, srs_w, s.mean_srs);
  s.mean_subset = weighted_mean(sub_est, srs_w);
  s.var_subset = pop_variance(sub_est, srs_w, s.mean_subset);
  const std::vector<double> wz(s.assignments, 1.0 / n_assign);
  s.mean_expected_conditional = weighted_mean(cond_terms, wz);
  const double oracle_mean = weighted_mean(oracle_est, wz);
  s.var_oracle_estimator = pop_variance(oracle_est, wz, oracle_mean);
  s.mean_plugin = plugin_defined ? weighted_mean(plug, strat_w) : NAN;
  s.mean_delta = weighted_mean(deltas, wz);
  s.mean_conditional_gap = weighted_mean(gaps, wz);
  return s;
}

}  // namespace stratma
