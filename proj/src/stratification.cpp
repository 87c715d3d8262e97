#include "stratma/stratification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "stratma/variance.hpp"

namespace stratma {

CutResult quantile_cut(std::span<const double> values, int q, bool require_split) {
  if (q < 2) throw Error(ErrorCode::InvalidArgument, "quantile_cut needs q >= 2");
  CutResult out;
  const std::size_t n = values.size();
  if (n == 0) return out;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "quantile_cut input is not finite");
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (int j = 1; j < q; ++j) {
    const std::size_t pos = (n * j + q - 1) / q;  // ceil(n j / q), 1-based
    cuts.push_back(sorted[std::max<std::size_t>(pos, 1) - 1]);
  }
  std::vector<int> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = 1 + static_cast<int>(std::count_if(cuts.begin(), cuts.end(),
                                                [&](double c) { return values[i] > c; }));
  }
  std::vector<int> used(raw);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = 1 + static_cast<int>(std::lower_bound(used.begin(), used.end(), raw[i]) - used.begin());
  }
  out.groups = static_cast<int>(used.size());
  if (out.groups == 1) {
    if (require_split) throw Error(ErrorCode::AllValuesEqual, "all values are equal; cannot form groups");
    out.warnings.push_back("AllValuesEqual: collapsed to a single stratum");
  } else if (out.groups < q) {
    out.warnings.push_back("ties collapsed " + std::to_string(q) + " groups to " + std::to_string(out.groups));
  }
  return out;
}

std::vector<int> cross_strata(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "cross_strata inputs differ in length");
  std::map<std::pair<int, int>, int> cells;
  for (std::size_t i = 0; i < a.size(); ++i) cells.emplace(std::make_pair(a[i], b[i]), 0);
  int next = 1;
  for (auto& [key, label] : cells) label = next++;
  std::vector<int> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = cells.at({a[i], b[i]});
  return out;
}

int CandidateStratification::total_strata() const {
  return std::accumulate(k_per_arm.begin(), k_per_arm.end(), 0);
}

std::vector<double> variable_values(const PopulationTable& pop, const std::string& name) {
  std::vector<double> out(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const auto& u = pop.unit(i);
    if (name == "y_hat") {
      out[i] = u.y_hat;
      continue;
    }
    auto it = u.features.find(name);
    if (it == u.features.end()) throw Error(ErrorCode::UnknownVariable, "UnknownVariable(" + name + ")");
    if (const double* d = std::get_if<double>(&it->second)) {
      out[i] = *d;
    } else {
      throw Error(ErrorCode::NonNumericValue,
                  "variable '" + name + "' is not numeric for unit '" + u.id + "'", {u.id});
    }
  }
  return out;
}

namespace {

// Merge cells below `min_size` into the cell with the nearest mean y_hat,
// smallest cell first, then renumber densely (1-based) by original label.
void merge_small_cells(std::vector<int>& labels, const std::vector<double>& yhat, int min_size) {
  for (;;) {
    std::map<int, std::pair<int, double>> cell;  // label -> (count, y_hat sum)
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto& c = cell[labels[i]];
      ++c.first;
      c.second += yhat[i];
    }
    if (cell.size() < 2) break;
    int smallest = 0, smallest_n = std::numeric_limits<int>::max();
    for (const auto& [k, c] : cell) {
      if (c.first < smallest_n) {
        smallest = k;
        smallest_n = c.first;
      }
    }
    if (smallest_n >= min_size) break;
    const double m = cell[smallest].second / smallest_n;
    int target = 0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [k, c] : cell) {
      if (k == smallest) continue;
      const double d = std::abs(c.second / c.first - m);
      if (d < best) {
        best = d;
        target = k;
      }
    }
    for (int& l : labels) {
      if (l == smallest) l = target;
    }
  }
  std::vector<int> used(labels);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  for (int& l : labels) l = 1 + static_cast<int>(std::lower_bound(used.begin(), used.end(), l) - used.begin());
}

// Within-arm labels for one candidate: quantile cuts of each variable, crossed.
CandidateStratification build(const PopulationTable& pop, const std::vector<std::string>& vars,
                              const std::vector<int>& qs,
                              const std::map<std::string, std::vector<double>>& values, int min_cell) {
  CandidateStratification c;
  c.variables = vars;
  c.granularity = qs;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    if (v) c.name += " x ";
    c.name += vars[v] + ":q" + std::to_string(qs[v]);
  }
  std::vector<int> labels(pop.size(), 0);
  for (int z = 0; z < pop.n_arms(); ++z) {
    const auto& members = pop.arm_members(z);
    std::vector<int> arm_labels;
    for (std::size_t v = 0; v < vars.size(); ++v) {
      std::vector<double> x;
      for (std::size_t i : members) x.push_back(values.at(vars[v])[i]);
      auto cut = quantile_cut(x, qs[v]);
      arm_labels = v == 0 ? cut.labels : cross_strata(arm_labels, cut.labels);
    }
    std::vector<double> yh;
    for (std::size_t i : members) yh.push_back(pop.unit(i).y_hat);
    merge_small_cells(arm_labels, yh, min_cell);
    for (std::size_t j = 0; j < members.size(); ++j) labels[members[j]] = arm_labels[j] - 1;
  }
  c.strata = StrataAssignment(pop, std::move(labels));
  for (int z = 0; z < pop.n_arms(); ++z) c.k_per_arm.push_back(c.strata.n_strata(z));
  return c;
}

}  // namespace

std::vector<CandidateStratification> generate_candidates(const PopulationTable& pop,
                                                         const std::vector<std::string>& variables,
                                                         const CandidateOptions& opt) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& v : variables) values[v] = variable_values(pop, v);
  std::vector<CandidateStratification> out;
  for (const auto& v : variables) {
    for (int q : opt.single_q) out.push_back(build(pop, {v}, {q}, values, opt.min_cell_size));
  }
  for (std::size_t a = 0; a < variables.size(); ++a) {
    for (std::size_t b = a + 1; b < variables.size(); ++b) {
      for (const auto& [qa, qb] : opt.cross_q) {
        out.push_back(build(pop, {variables[a], variables[b]}, {qa, qb}, values, opt.min_cell_size));
      }
    }
  }
  return out;
}

CandidateMetrics precoding_metrics(const PopulationTable& pop, const StrataAssignment& strata) {
  CandidateMetrics m;
  m.min_stratum_size = std::numeric_limits<int>::max();
  double weighted = 0.0;
  double total_n = 0.0;
  for (int z = 0; z < strata.n_arms(); ++z) {
    const int K = strata.n_strata(z);
    VectorXd means(K), w(K);
    double Nz = 0.0;
    int lo = std::numeric_limits<int>::max(), hi = 0;
    for (int k = 0; k < K; ++k) {
      const auto& members = strata.members(z, k);
      double s = 0.0;
      for (std::size_t i : members) s += pop.unit(i).y_hat;
      const int Nk = static_cast<int>(members.size());
      means[k] = Nk ? s / Nk : 0.0;
      w[k] = Nk;
      Nz += Nk;
      lo = std::min(lo, Nk);
      hi = std::max(hi, Nk);
    }
    if (Nz == 0) continue;
    w /= Nz;
    weighted += Nz * weighted_variance(means, w);
    total_n += Nz;
    m.balance_ratio = std::max(m.balance_ratio, lo > 0 ? double(hi) / lo : std::numeric_limits<double>::infinity());
    m.min_stratum_size = std::min(m.min_stratum_size, lo);
  }
  m.var_of_stratum_means = total_n > 0 ? weighted / total_n : 0.0;
  if (m.min_stratum_size == std::numeric_limits<int>::max()) m.min_stratum_size = 0;
  return m;
}

RankResult rank_candidates(const std::vector<CandidateStratification>& candidates,
                           const std::vector<CandidateMetrics>& metrics, const RankFilters& filters) {
  if (candidates.size() != metrics.size()) {
    throw Error(ErrorCode::InvalidArgument, "one metrics entry per candidate required");
  }
  RankResult r;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (metrics[i].balance_ratio > filters.max_balance_ratio) {
      r.excluded.emplace_back(i, "balance ratio above " + format_double(filters.max_balance_ratio));
    } else if (metrics[i].min_stratum_size < filters.min_stratum_size) {
      r.excluded.emplace_back(i, "stratum smaller than " + std::to_string(filters.min_stratum_size));
    } else {
      r.order.push_back(i);
    }
  }
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
    if (metrics[a].var_of_stratum_means != metrics[b].var_of_stratum_means) {
      return metrics[a].var_of_stratum_means > metrics[b].var_of_stratum_means;
    }
    if (candidates[a].total_strata() != candidates[b].total_strata()) {
      return candidates[a].total_strata() < candidates[b].total_strata();
    }
    return candidates[a].name < candidates[b].name;
  });
  if (r.order.empty() && !candidates.empty()) {
    r.diagnostics.push_back("AllFiltered: every candidate failed the balance or size filter");
  }
  return r;
}

CandidateMetrics oracle_metrics(const PopulationTable& pop, const StrataAssignment& strata,
                                const Budget& budget, AllocationMethod method, int min_floor) {
  CandidateMetrics m = precoding_metrics(pop, strata);
  const auto e = stratum_residuals(pop, strata);
  std::vector<std::vector<int>> sizes;
  std::vector<std::vector<double>> sds;
  std::vector<int> budgets;
  double vmin = std::numeric_limits<double>::infinity(), vmax = 0.0;
  for (int z = 0; z < strata.n_arms(); ++z) {
    sizes.push_back(strata.counts(z));
    budgets.push_back(budget.for_arm(static_cast<int>(pop.arm_size(z))));
    sds.emplace_back();
    for (const auto& v : e[z]) {
      const double var = v.size() > 1 ? sample_variance(v) : 0.0;
      sds.back().push_back(std::sqrt(var));
      if (v.size() > 1) {
        vmin = std::min(vmin, var);
        vmax = std::max(vmax, var);
      }
    }
  }
  const Allocation alloc = allocate(sizes, budgets, method, sds, min_floor);
  const auto d = bs_ws_decomposition(e, alloc.n);
  OracleMetrics o;
  o.bs = d.bs;
  o.ws = d.ws;
  o.delta = d.delta;
  o.residual_variance_ratio = vmin > 0.0 ? vmax / vmin : std::numeric_limits<double>::infinity();
  m.oracle = o;
  return m;
}

}  // namespace stratma
