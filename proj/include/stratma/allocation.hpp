#pragma once

#include <span>
#include <string>
#include <vector>

namespace stratma {

enum class AllocationMethod { proportional, neyman, manual };

const char* to_string(AllocationMethod m);

/// Per-(arm, stratum) coding quotas.
struct Allocation {
  std::vector<std::vector<int>> n;  // [arm][stratum]
  std::vector<int> budget;          // per arm, equals the row sums
  AllocationMethod method = AllocationMethod::manual;
  bool fell_back_to_proportional = false;  // Neyman with all-zero SDs in some arm

  int n_arms() const { return static_cast<int>(n.size()); }
  static Allocation manual(std::vector<std::vector<int>> quotas);
};

/// Quotas for a single arm together with the continuous targets they round.
struct ArmAllocation {
  std::vector<int> n;
  std::vector<double> targets;
  int capped_strata = 0;  // strata whose target sits at N_k
  bool fell_back_to_proportional = false;
};

/// Coding budget expressed either as a per-arm count or as a fraction h of
/// each arm (n_z = floor(h * N_z)).
struct Budget {
  enum class Kind { count, fraction } kind = Kind::fraction;
  double value = 0.0;

  int for_arm(int arm_size) const;
  static Budget count(int n) { return {Kind::count, static_cast<double>(n)}; }
  static Budget fraction(double h) { return {Kind::fraction, h}; }
  /// Accepts "40" (count) or "0.3N" / "0.3" (fraction).
  static Budget parse(const std::string& text);
};

/// Round real targets to integers summing to `total` by largest remainder.
/// Equal remainders go to the smaller index first.
std::vector<int> largest_remainder(std::span<const double> targets, int total);

ArmAllocation proportional_allocation(std::span<const int> stratum_sizes, int budget,
                                      int min_floor = 2);

/// Continuous Neyman targets n * N_k s_k / sum_j N_j s_j with iterative capping
/// at N_k. Returns the number of capping passes through `iterations`.
std::vector<double> capped_neyman_targets(std::span<const int> stratum_sizes,
                                          std::span<const double> stratum_sds, double budget,
                                          int* iterations = nullptr);

ArmAllocation neyman_allocation(std::span<const int> stratum_sizes,
                                std::span<const double> stratum_sds, int budget, int min_floor = 2);

/// Apply one method to every arm. `stratum_sds` is ignored for proportional.
Allocation allocate(const std::vector<std::vector<int>>& stratum_sizes, const std::vector<int>& budgets,
                    AllocationMethod method,
                    const std::vector<std::vector<double>>& stratum_sds = {}, int min_floor = 2);

}  // namespace stratma
