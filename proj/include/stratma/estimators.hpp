#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stratma/allocation.hpp"
#include "stratma/core.hpp"
#include "stratma/sampling.hpp"
#include "stratma/variance.hpp"

namespace stratma {

enum class Estimand { ate, mean };
enum class Method { oracle, subset, ma_srs, ma_stratified };

const char* to_string(Estimand e);
const char* to_string(Method m);
Method parse_method(const std::string& text);  // accepts "ma-srs" and "ma_srs"

struct EstimateOptions {
  double ci_level = 0.95;
  VarianceMode mode = VarianceMode::superpopulation;
};

struct VarianceComponent {
  std::string name;
  double value = 0.0;
};

struct EstimateReport {
  Estimand estimand = Estimand::ate;
  Method method = Method::oracle;
  double estimate = 0.0;
  std::vector<double> arm_values;  // per-arm level; ATE = arm 1 - arm 0
  std::optional<double> se;        // missing when not estimable
  std::optional<std::pair<double, double>> ci;
  double ci_level = 0.95;
  std::vector<VarianceComponent> components;  // sum to se^2
  std::vector<StratumDiagnostics> strata;
  std::vector<std::string> diagnostics;
};

/// Estimand implied by the table: ATE for two-arm, mean for single-arm.
Estimand estimand_for(const PopulationTable& pop);

/// Full-coding benchmark (difference in arm means, or the mean).
EstimateReport estimate_oracle(const PopulationTable& pop, const EstimateOptions& opt = {});

/// Coded-sample difference in means; SE without finite population correction.
EstimateReport estimate_subset(const PopulationTable& pop, const SampleDraw& draw,
                               const EstimateOptions& opt = {});

/// Surrogate mean plus mean coded residual, per arm.
EstimateReport estimate_ma_srs(const PopulationTable& pop, const SampleDraw& draw,
                               const EstimateOptions& opt = {});

/// Surrogate mean plus stratum-weighted mean coded residual, per arm. When
/// `alloc` is given the draw's realized counts must match it.
EstimateReport estimate_ma_stratified(const PopulationTable& pop, const StrataAssignment& strata,
                                      const SampleDraw& draw, const Allocation* alloc = nullptr,
                                      const EstimateOptions& opt = {});

}  // namespace stratma
