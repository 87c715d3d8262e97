#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stratma/allocation.hpp"
#include "stratma/core.hpp"

namespace stratma {

struct CutResult {
  std::vector<int> labels;  // 1..groups
  int groups = 0;
  std::vector<std::string> warnings;
};

/// Quantile grouping with inverted-CDF cut points q_j = x_(ceil(n j / q)).
/// A value v gets label 1 + #{j : v > q_j}, so ties always share a label; empty
/// groups are collapsed. A constant input yields one group and a warning, or
/// AllValuesEqual when `require_split` is set.
CutResult quantile_cut(std::span<const double> values, int q, bool require_split = false);

/// Product of two 1-based labelings, densely renumbered in (a, b) order.
std::vector<int> cross_strata(std::span<const int> a, std::span<const int> b);

struct CandidateStratification {
  std::string name;
  std::vector<std::string> variables;
  std::vector<int> granularity;
  StrataAssignment strata;
  std::vector<int> k_per_arm;

  int total_strata() const;
};

struct CandidateOptions {
  std::vector<int> single_q{3, 4, 5};
  std::vector<std::pair<int, int>> cross_q{{2, 2}, {2, 3}, {3, 2}, {3, 3}};
  int min_cell_size = 2;  // smaller cells merge into the nearest cell by mean y_hat
};

/// Numeric values of a variable ("y_hat" or a feature column) for every unit.
std::vector<double> variable_values(const PopulationTable& pop, const std::string& name);

/// Quantile singles for each variable plus crosses for each unordered pair of
/// variables. Cuts are computed within each arm.
std::vector<CandidateStratification> generate_candidates(const PopulationTable& pop,
                                                         const std::vector<std::string>& variables,
                                                         const CandidateOptions& opt = {});

struct OracleMetrics {
  double bs = 0.0;
  double ws = 0.0;
  double delta = 0.0;
  double residual_variance_ratio = 0.0;  // max_k var_k / min_k var_k
};

struct CandidateMetrics {
  double var_of_stratum_means = 0.0;
  double balance_ratio = 1.0;
  int min_stratum_size = 0;
  std::optional<OracleMetrics> oracle;
};

/// Pre-coding proxies from sizes and y_hat only. Two-arm tables pool the
/// variance by N_z weights and report the worst balance ratio and size.
CandidateMetrics precoding_metrics(const PopulationTable& pop, const StrataAssignment& strata);

struct RankFilters {
  double max_balance_ratio = 10.0;
  int min_stratum_size = 100;
};

struct RankResult {
  std::vector<std::size_t> order;  // indices into the candidate list, best first
  std::vector<std::pair<std::size_t, std::string>> excluded;
  std::vector<std::string> diagnostics;
};

RankResult rank_candidates(const std::vector<CandidateStratification>& candidates,
                           const std::vector<CandidateMetrics>& metrics, const RankFilters& filters = {});

/// Retrospective BS/WS evaluation using the true residuals of a fully coded
/// table, at the given budget and allocation method (Neyman uses oracle SDs).
CandidateMetrics oracle_metrics(const PopulationTable& pop, const StrataAssignment& strata,
                                const Budget& budget, AllocationMethod method, int min_floor = 2);

}  // namespace stratma
