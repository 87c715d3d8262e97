#include "stratma/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stratma/error.hpp"

namespace stratma {

const char* to_string(AllocationMethod m) {
  switch (m) {
    case AllocationMethod::proportional: return "proportional";
    case AllocationMethod::neyman: return "neyman";
    case AllocationMethod::manual: return "manual";
  }
  return "manual";
}

Allocation Allocation::manual(std::vector<std::vector<int>> quotas) {
  Allocation a;
  a.n = std::move(quotas);
  for (const auto& row : a.n) a.budget.push_back(std::accumulate(row.begin(), row.end(), 0));
  a.method = AllocationMethod::manual;
  return a;
}

int Budget::for_arm(int arm_size) const {
  if (kind == Kind::count) return static_cast<int>(value);
  return static_cast<int>(std::floor(value * arm_size + 1e-9));
}

Budget Budget::parse(const std::string& text) {
  std::string t = text;
  const bool fraction_suffix = !t.empty() && (t.back() == 'N' || t.back() == 'n');
  if (fraction_suffix) t.pop_back();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "budget '" + text + "' is not a number");
  }
  if (used != t.size() || !(v > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "budget '" + text + "' must be positive");
  }
  if (fraction_suffix || v < 1.0 || (v == 1.0 && t.find('.') != std::string::npos)) {
    if (v > 1.0) throw Error(ErrorCode::InvalidArgument, "budget fraction above 1: " + text);
    return fraction(v);
  }
  if (v != std::floor(v)) {
    throw Error(ErrorCode::InvalidArgument, "budget count '" + text + "' is not an integer");
  }
  return count(static_cast<int>(v));
}

std::vector<int> largest_remainder(std::span<const double> targets, int total) {
  constexpr double tie_eps = 1e-9;
  std::vector<int> out(targets.size());
  std::vector<double> rem(targets.size());
  int assigned = 0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const double fl = std::floor(targets[k] + tie_eps);
    out[k] = static_cast<int>(fl);
    rem[k] = std::max(0.0, targets[k] - fl);
    assigned += out[k];
  }
  std::vector<std::size_t> order(targets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rem[a] > rem[b] + tie_eps;
  });
  int left = total - assigned;
  for (std::size_t j = 0; left > 0 && !order.empty(); ++j, --left) ++out[order[j % order.size()]];
  for (std::size_t j = order.size(); left < 0 && j-- > 0; ++left) --out[order[j]];
  return out;
}

namespace {

std::vector<int> effective_floors(std::span<const int> sizes, int min_floor) {
  std::vector<int> f(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k) f[k] = std::min(min_floor, sizes[k]);
  return f;
}

void check_feasible(std::span<const int> sizes, int budget, int min_floor) {
  if (sizes.empty()) throw Error(ErrorCode::InvalidArgument, "no strata to allocate over");
  for (int s : sizes) {
    if (s < 1) throw Error(ErrorCode::InvalidArgument, "stratum sizes must be positive");
  }
  const int total = std::accumulate(sizes.begin(), sizes.end(), 0);
  if (budget > total) {
    throw Error(ErrorCode::BudgetExceedsArm, "budget " + std::to_string(budget) +
                                                 " exceeds arm size " + std::to_string(total));
  }
  const auto floors = effective_floors(sizes, min_floor);
  const int need = std::accumulate(floors.begin(), floors.end(), 0);
  if (budget < need || budget < 1) {
    throw Error(ErrorCode::BudgetTooSmall, "budget " + std::to_string(budget) +
                                               " cannot cover stratum floors totalling " +
                                               std::to_string(need));
  }
}

// Continuous optimum of the bounded problem: t_k = clamp(c * weight_k, floor_k,
// N_k) with the scale c chosen so the targets sum to the budget. Zero-weight
// strata sit at their floor unless every weighted stratum is full.
std::vector<double> bounded_targets(std::span<const int> sizes, std::span<const double> weight, int budget,
                                    std::span<const int> floors, int* capped) {
  const std::size_t K = sizes.size();
  auto at = [&](double c) {
    std::vector<double> t(K);
    for (std::size_t k = 0; k < K; ++k) t[k] = std::clamp(c * weight[k], double(floors[k]), double(sizes[k]));
    return t;
  };
  auto total = [](const std::vector<double>& t) { return std::accumulate(t.begin(), t.end(), 0.0); };

  std::vector<double> t(K);
  for (std::size_t k = 0; k < K; ++k) t[k] = weight[k] > 0.0 ? sizes[k] : floors[k];
  if (total(t) < budget) {
    // weighted strata all full: top up zero-weight strata by spare room
    double extra = budget - total(t), room = 0.0;
    for (std::size_t k = 0; k < K; ++k)
      if (weight[k] <= 0.0) room += sizes[k] - t[k];
    for (std::size_t k = 0; k < K; ++k)
      if (weight[k] <= 0.0 && room > 0.0) t[k] += extra * (sizes[k] - t[k]) / room;
  } else {
    double lo_c = 0.0, hi_c = 1.0;
    while (total(at(hi_c)) < budget) hi_c *= 2;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo_c + hi_c);
      (total(at(mid)) < budget ? lo_c : hi_c) = mid;
    }
    // exact scale on the free set found by bisection
    t = at(hi_c);
    double fixed = 0.0, w = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (t[k] > floors[k] && t[k] < sizes[k]) w += weight[k];
      else fixed += t[k];
    }
    if (w > 0.0) {
      const double c = (budget - fixed) / w;
      for (std::size_t k = 0; k < K; ++k)
        if (t[k] > floors[k] && t[k] < sizes[k]) t[k] = c * weight[k];
    }
  }
  if (capped) {
    *capped = 0;
    for (std::size_t k = 0; k < K; ++k) *capped += weight[k] > 0.0 && t[k] >= sizes[k];
  }
  return t;
}

}  // namespace

ArmAllocation proportional_allocation(std::span<const int> stratum_sizes, int budget, int min_floor) {
  check_feasible(stratum_sizes, budget, min_floor);
  const std::vector<double> weight(stratum_sizes.begin(), stratum_sizes.end());
  ArmAllocation out;
  out.targets = bounded_targets(stratum_sizes, weight, budget, effective_floors(stratum_sizes, min_floor), nullptr);
  out.n = largest_remainder(out.targets, budget);
  return out;
}

std::vector<double> capped_neyman_targets(std::span<const int> stratum_sizes,
                                          std::span<const double> stratum_sds, double budget,
                                          int* iterations) {
  const std::size_t K = stratum_sizes.size();
  std::vector<bool> capped(K, false);
  std::vector<double> t(K, 0.0);
  int passes = 0;
  for (;;) {
    ++passes;
    double remaining = budget;
    double weight = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (capped[k]) remaining -= stratum_sizes[k];
      else weight += stratum_sizes[k] * stratum_sds[k];
    }
    bool changed = false;
    for (std::size_t k = 0; k < K; ++k) {
      if (capped[k]) {
        t[k] = stratum_sizes[k];
      } else {
        t[k] = weight > 0.0 ? remaining * stratum_sizes[k] * stratum_sds[k] / weight : 0.0;
        if (t[k] > stratum_sizes[k]) {
          capped[k] = true;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  if (iterations) *iterations = passes - 1;
  return t;
}

ArmAllocation neyman_allocation(std::span<const int> stratum_sizes,
                                std::span<const double> stratum_sds, int budget, int min_floor) {
  if (stratum_sds.size() != stratum_sizes.size()) {
    throw Error(ErrorCode::InvalidArgument, "one SD per stratum required");
  }
  for (double s : stratum_sds) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw Error(ErrorCode::InvalidArgument, "stratum SDs must be finite and non-negative");
    }
  }
  check_feasible(stratum_sizes, budget, min_floor);
  if (std::all_of(stratum_sds.begin(), stratum_sds.end(), [](double x) { return x == 0.0; })) {
    ArmAllocation out = proportional_allocation(stratum_sizes, budget, min_floor);
    out.fell_back_to_proportional = true;
    return out;
  }
  std::vector<double> weight(stratum_sizes.size());
  for (std::size_t k = 0; k < weight.size(); ++k) weight[k] = stratum_sizes[k] * stratum_sds[k];
  ArmAllocation out;
  out.targets = bounded_targets(stratum_sizes, weight, budget, effective_floors(stratum_sizes, min_floor),
                                &out.capped_strata);
  out.n = largest_remainder(out.targets, budget);
  return out;
}

Allocation allocate(const std::vector<std::vector<int>>& stratum_sizes, const std::vector<int>& budgets,
                    AllocationMethod method, const std::vector<std::vector<double>>& stratum_sds,
                    int min_floor) {
  if (budgets.size() != stratum_sizes.size()) {
    throw Error(ErrorCode::InvalidArgument, "one budget per arm required");
  }
  Allocation out;
  out.method = method;
  out.budget = budgets;
  for (std::size_t z = 0; z < stratum_sizes.size(); ++z) {
    ArmAllocation arm;
    switch (method) {
      case AllocationMethod::proportional:
        arm = proportional_allocation(stratum_sizes[z], budgets[z], min_floor);
        break;
      case AllocationMethod::neyman:
        if (stratum_sds.size() != stratum_sizes.size()) {
          throw Error(ErrorCode::InvalidArgument, "Neyman allocation needs stratum SDs per arm");
        }
        arm = neyman_allocation(stratum_sizes[z], stratum_sds[z], budgets[z], min_floor);
        out.fell_back_to_proportional = out.fell_back_to_proportional || arm.fell_back_to_proportional;
        break;
      case AllocationMethod::manual:
        throw Error(ErrorCode::InvalidArgument, "manual allocations are built with Allocation::manual");
    }
    out.n.push_back(std::move(arm.n));
  }
  return out;
}

}  // namespace stratma
