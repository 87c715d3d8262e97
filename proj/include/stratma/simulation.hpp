#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stratma/allocation.hpp"
#include "stratma/core.hpp"
#include "stratma/estimators.hpp"

namespace stratma {

enum class BiasPattern { none, small, moderate, large, extreme_contrast };
enum class VariancePattern { homogeneous, heterogeneous, extreme_contrast };
enum class StrataConfig { balanced_exact, balanced_approx, unbalanced };

const char* to_string(BiasPattern p);
const char* to_string(VariancePattern p);
const char* to_string(StrataConfig c);
BiasPattern parse_bias_pattern(const std::string& s);
VariancePattern parse_variance_pattern(const std::string& s);
StrataConfig parse_strata_config(const std::string& s);

/// Unscaled pattern values for K strata. K = 4 reproduces the tabulated
/// levels; other K interpolate linearly between the same end points.
std::vector<double> bias_pattern_values(BiasPattern p, int K);
std::vector<double> variance_pattern_values(VariancePattern p, int K);

struct ScenarioConfig {
  int N = 1000;
  int K = 4;
  double sigma_y = 3.0;
  double tau = 0.0;
  BiasPattern bias = BiasPattern::none;
  VariancePattern variance = VariancePattern::homogeneous;
  double r2 = 0.4;
  StrataConfig strata = StrataConfig::balanced_exact;
  double h = 0.1;
  int replications = 1000;
  std::uint64_t seed = 1;
  std::uint64_t scenario_id = 0;
  int min_floor = 2;
  bool pilot = false;  // add the pilot-SD Neyman variant
  double pilot_fraction = 0.1;
  double ci_level = 0.95;

  void check() const;
};

struct Calibration {
  std::vector<double> b;           // stratum bias, outcome units
  std::vector<double> sigma2_eps;  // within-stratum residual variance
  double c = 0.0;
  double V = 0.0;
};

Calibration calibrate_dgp(BiasPattern bias, VariancePattern variance, double r2, double sigma_y,
                          const std::vector<double>& weights);

/// A generated finite population with both potential outcomes kept.
struct SimPopulation {
  PopulationTable table;        // observed y for every unit
  StrataAssignment strata;      // design strata, 0-based within arm
  std::vector<double> y0, y1;   // potential outcomes by unit position
  Calibration calibration;
};

SimPopulation generate_population(const ScenarioConfig& cfg, std::uint64_t seed);

struct EstimatorMetrics {
  std::string estimator;
  double bias = 0.0;
  double emp_se = 0.0;
  double mse = 0.0;
  double mean_est_se = 0.0;
  double coverage = 0.0;
  double var_reduction_vs_srs = 0.0;   // percent, relative to MA-SRS
  double var_inflation_vs_full = 0.0;  // ratio to the oracle estimator
  int failures = 0;                    // replications without an estimate
};

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<EstimatorMetrics> estimators;
  /// Per-replication estimates, [estimator][replication]; kept for paired
  /// comparisons across scenarios.
  std::vector<std::vector<double>> estimates;

  const EstimatorMetrics& get(const std::string& name) const;
};

/// Replications run on `threads` workers; results do not depend on it.
ScenarioResult run_scenario(const ScenarioConfig& cfg, int threads = 1);

struct GridConfig {
  ScenarioConfig base;
  std::vector<BiasPattern> bias;
  std::vector<VariancePattern> variance;
  std::vector<double> r2;
  std::vector<StrataConfig> strata;
  std::vector<double> h;

  static GridConfig full_factorial();
  static GridConfig from_json(const std::string& text);
  std::string to_json() const;
};

std::vector<ScenarioConfig> expand_grid(const GridConfig& grid);

struct GridCell {
  ScenarioConfig config;
  std::optional<ScenarioResult> result;
  std::string error;
};

std::vector<GridCell> run_grid(const GridConfig& grid, int threads = 1);

/// Long format: scenario factors, estimator, metrics.
void write_grid_csv(std::ostream& out, const std::vector<GridCell>& cells);

/// Fixed-corpus resampling: `repeats` independent draws of the same coded
/// table, reporting each estimator's estimate per repeat.
struct RepeatsResult {
  std::vector<std::string> estimators;
  std::vector<std::vector<double>> estimates;  // [estimator][repeat]
  std::vector<double> empirical_variance;
};

RepeatsResult resample_repeats(const PopulationTable& pop, const StrataAssignment& strata,
                               const Budget& budget, int repeats, std::uint64_t seed, int min_floor = 2);

// Exhaustive enumeration oracle -------------------------------------------------

struct TinyPopulation {
  std::vector<double> y0, y1;        // gold potential outcomes
  std::vector<double> yhat0, yhat1;  // surrogate potential outcomes
  int n_treated = 0;                 // completely randomized design
};

/// Stratum labels (0-based within arm) for a given assignment z (0/1 per unit).
using StratumRule = std::function<std::vector<int>(const std::vector<int>& z)>;
/// Coding quotas [arm][stratum] for the strata produced by the rule.
using QuotaRule = std::function<Quotas(const std::vector<std::vector<int>>& stratum_sizes)>;

struct OracleSummary {
  double true_ate = 0.0;
  double mean_stratified = 0.0;
  double var_stratified = 0.0;
  double mean_srs = 0.0;
  double var_srs = 0.0;
  double mean_subset = 0.0;
  double var_subset = 0.0;
  double mean_expected_conditional = 0.0;  // E_Z[exact conditional variance]
  double var_oracle_estimator = 0.0;       // Var_Z(full-coding estimator)
  double mean_plugin = 0.0;                // E[plug-in variance], NaN if undefined
  double mean_delta = 0.0;                 // E_Z[BS - WS]
  double mean_conditional_gap = 0.0;       // E_Z[Var_SRS|Z - Var_strat|Z], enumerated
  double max_conditional_gap_error = 0.0;  // max_Z |enumerated gap - (BS - WS)| / scale
  double tau_variance = 0.0;               // Var(tau_i), divisor N - 1
  std::size_t assignments = 0;
  std::size_t evaluations = 0;
};

OracleSummary exhaustive_oracle(const TinyPopulation& pop, const StratumRule& strata_rule,
                                const QuotaRule& quotas, std::size_t cap = 10'000'000);

/// Build the PopulationTable seen under assignment z (all units coded).
PopulationTable tiny_table(const TinyPopulation& pop, const std::vector<int>& z);

}  // namespace stratma
