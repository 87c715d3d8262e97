#include "stratma/estimators.hpp"

#include <cmath>

namespace stratma {

const char* to_string(Estimand e) { return e == Estimand::ate ? "ate" : "mean"; }

const char* to_string(Method m) {
  switch (m) {
    case Method::oracle: return "oracle";
    case Method::subset: return "subset";
    case Method::ma_srs: return "ma-srs";
    case Method::ma_stratified: return "ma-stratified";
  }
  return "oracle";
}

Method parse_method(const std::string& text) {
  std::string t = text;
  for (char& c : t) {
    if (c == '_') c = '-';
  }
  if (t == "oracle") return Method::oracle;
  if (t == "subset") return Method::subset;
  if (t == "ma-srs") return Method::ma_srs;
  if (t == "ma-stratified") return Method::ma_stratified;
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + text + "'");
}

Estimand estimand_for(const PopulationTable& pop) {
  return pop.mode() == ArmMode::two_arm ? Estimand::ate : Estimand::mean;
}

namespace {

std::string arm_tag(int z) { return "[arm=" + std::to_string(z) + "]"; }

void finish(EstimateReport& r, const EstimateOptions& opt) {
  r.estimate = r.arm_values.size() == 2 ? r.arm_values[1] - r.arm_values[0] : r.arm_values[0];
  r.ci_level = opt.ci_level;
  if (!(opt.ci_level > 0.0 && opt.ci_level < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "CI level must lie in (0, 1)");
  }
  if (r.se) {
    const double zq = normal_quantile(1.0 - (1.0 - opt.ci_level) / 2.0);
    r.ci = std::make_pair(r.estimate - zq * *r.se, r.estimate + zq * *r.se);
  }
}

void set_se_from_components(EstimateReport& r) {
  double total = 0.0;
  for (const auto& c : r.components) total += c.value;
  if (std::isfinite(total)) r.se = std::sqrt(std::max(total, 0.0));
}

void require_coded(const UnitRecord& u) {
  if (!u.y) throw Error(ErrorCode::UncodedUnit, "unit '" + u.id + "' has no observed y", {u.id});
}

// Shared by both model-assisted estimators; ma-srs passes the trivial strata.
EstimateReport model_assisted(const PopulationTable& pop, const StrataAssignment& strata,
                              const SampleDraw& draw, Method method, const EstimateOptions& opt) {
  if (strata.n_arms() != pop.n_arms()) {
    throw Error(ErrorCode::InvalidArgument, "strata and population disagree on the number of arms");
  }
  EstimateReport r;
  r.estimand = estimand_for(pop);
  r.method = method;
  const Quotas n = draw_counts(pop, strata, draw);
  std::vector<std::vector<double>> resid_sum(strata.n_arms());
  for (int z = 0; z < strata.n_arms(); ++z) resid_sum[z].assign(strata.n_strata(z), 0.0);
  for (std::size_t i : draw.selected) {
    const auto& u = pop.unit(i);
    require_coded(u);
    resid_sum[pop.arm_of(i)][strata.label(i)] += *u.y - u.y_hat;
  }
  for (int z = 0; z < strata.n_arms(); ++z) {
    const auto& members = pop.arm_members(z);
    if (members.empty()) throw Error(ErrorCode::EmptyArmSample, "arm " + std::to_string(z) + " is empty");
    double yhat_sum = 0.0;
    for (std::size_t i : members) yhat_sum += pop.unit(i).y_hat;
    const double Nz = static_cast<double>(members.size());
    double correction = 0.0;
    for (int k = 0; k < strata.n_strata(z); ++k) {
      if (n[z][k] < 1) {
        throw Error(method == Method::ma_srs ? ErrorCode::EmptyArmSample : ErrorCode::StratumDrawMismatch,
                    "no coded units in arm " + std::to_string(z) + ", stratum " + std::to_string(k + 1));
      }
      correction += (strata.counts(z)[k] / Nz) * (resid_sum[z][k] / n[z][k]);
    }
    r.arm_values.push_back(yhat_sum / Nz + correction);
  }

  try {
    const VarianceReport v = plugin_variance(pop, strata, draw, opt.mode);
    for (int z = 0; z < static_cast<int>(v.arms.size()); ++z) {
      r.components.push_back({"within" + arm_tag(z), v.arms[z].within});
      if (v.arms[z].s2_in_total) r.components.push_back({"s2_hat/N" + arm_tag(z), v.arms[z].s2_hat / v.arms[z].N});
    }
    r.strata = v.strata;
    set_se_from_components(r);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::StratumTooSmallForVariance) throw;
    r.components.clear();
    r.diagnostics.push_back(std::string("SE not estimable: ") + e.what());
  }
  finish(r, opt);
  return r;
}

}  // namespace

EstimateReport estimate_oracle(const PopulationTable& pop, const EstimateOptions& opt) {
  EstimateReport r;
  r.estimand = estimand_for(pop);
  r.method = Method::oracle;
  bool estimable = true;
  for (int z = 0; z < pop.n_arms(); ++z) {
    const auto& members = pop.arm_members(z);
    if (members.empty()) throw Error(ErrorCode::EmptyArmSample, "arm " + std::to_string(z) + " is empty");
    VectorXd y(static_cast<Eigen::Index>(members.size()));
    for (std::size_t j = 0; j < members.size(); ++j) {
      require_coded(pop.unit(members[j]));
      y[static_cast<Eigen::Index>(j)] = *pop.unit(members[j]).y;
    }
    r.arm_values.push_back(mean(y));
    const bool counted = pop.mode() == ArmMode::two_arm || opt.mode == VarianceMode::superpopulation;
    if (!counted) continue;
    const double s2 = sample_variance(y);
    if (std::isnan(s2)) estimable = false;
    r.components.push_back({"s2/N" + arm_tag(z), s2 / static_cast<double>(y.size())});
  }
  if (estimable) {
    set_se_from_components(r);
  } else {
    r.components.clear();
    r.diagnostics.push_back("SE not estimable: an arm has a single unit");
  }
  finish(r, opt);
  return r;
}

EstimateReport estimate_subset(const PopulationTable& pop, const SampleDraw& draw,
                               const EstimateOptions& opt) {
  EstimateReport r;
  r.estimand = estimand_for(pop);
  r.method = Method::subset;
  std::vector<std::vector<double>> ys(pop.n_arms());
  for (std::size_t i : draw.selected) {
    require_coded(pop.unit(i));
    ys[pop.arm_of(i)].push_back(*pop.unit(i).y);
  }
  bool estimable = true;
  for (int z = 0; z < pop.n_arms(); ++z) {
    if (ys[z].empty()) {
      throw Error(ErrorCode::EmptyArmSample, "no coded units in arm " + std::to_string(z));
    }
    const Eigen::Map<const VectorXd> y(ys[z].data(), static_cast<Eigen::Index>(ys[z].size()));
    r.arm_values.push_back(mean(y));
    const double s2 = sample_variance(y);
    if (std::isnan(s2)) estimable = false;
    r.components.push_back({"s2/n" + arm_tag(z), s2 / static_cast<double>(y.size())});
  }
  if (estimable) {
    set_se_from_components(r);
  } else {
    r.components.clear();
    r.diagnostics.push_back("SE not estimable: an arm has a single coded unit");
  }
  finish(r, opt);
  return r;
}

EstimateReport estimate_ma_srs(const PopulationTable& pop, const SampleDraw& draw,
                               const EstimateOptions& opt) {
  return model_assisted(pop, StrataAssignment::trivial(pop), draw, Method::ma_srs, opt);
}

EstimateReport estimate_ma_stratified(const PopulationTable& pop, const StrataAssignment& strata,
                                      const SampleDraw& draw, const Allocation* alloc,
                                      const EstimateOptions& opt) {
  if (alloc) {
    const Quotas n = draw_counts(pop, strata, draw);
    if (n != alloc->n) {
      throw Error(ErrorCode::StratumDrawMismatch, "realized stratum counts differ from the allocation");
    }
  }
  return model_assisted(pop, strata, draw, Method::ma_stratified, opt);
}

}  // namespace stratma
