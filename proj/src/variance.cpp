#include "stratma/variance.hpp"

namespace stratma {

const char* to_string(VarianceMode m) {
  return m == VarianceMode::finite_population ? "finite_population" : "superpopulation";
}

StratumValues<double> stratum_residuals(const PopulationTable& pop, const StrataAssignment& strata) {
  StratumValues<double> out(strata.n_arms());
  for (int z = 0; z < strata.n_arms(); ++z) {
    for (int k = 0; k < strata.n_strata(z); ++k) {
      const auto& members = strata.members(z, k);
      VectorXd e(static_cast<Eigen::Index>(members.size()));
      for (std::size_t j = 0; j < members.size(); ++j) {
        const auto& u = pop.unit(members[j]);
        if (!u.y) throw Error(ErrorCode::UncodedUnit, "unit '" + u.id + "' has no observed y", {u.id});
        e[static_cast<Eigen::Index>(j)] = *u.y - u.y_hat;
      }
      out[z].push_back(std::move(e));
    }
  }
  return out;
}

double exact_conditional_variance(const PopulationTable& pop, const StrataAssignment& strata,
                                  const Quotas& n) {
  return exact_conditional_variance(stratum_residuals(pop, strata), n);
}

Decomposition<double> bs_ws_decomposition(const PopulationTable& pop, const StrataAssignment& strata,
                                          const Quotas& n) {
  return bs_ws_decomposition(stratum_residuals(pop, strata), n);
}

Quotas draw_counts(const PopulationTable& pop, const StrataAssignment& strata, const SampleDraw& draw) {
  Quotas n(strata.n_arms());
  for (int z = 0; z < strata.n_arms(); ++z) n[z].assign(strata.n_strata(z), 0);
  for (std::size_t i : draw.selected) ++n[pop.arm_of(i)][strata.label(i)];
  return n;
}

VarianceReport plugin_variance(const PopulationTable& pop, const StrataAssignment& strata,
                               const SampleDraw& draw, VarianceMode mode) {
  VarianceReport rep;
  rep.mode = mode;
  const Quotas n = draw_counts(pop, strata, draw);

  // Coded y and residuals per (arm, stratum).
  std::vector<std::vector<std::vector<double>>> ys(strata.n_arms()), es(strata.n_arms());
  for (int z = 0; z < strata.n_arms(); ++z) {
    ys[z].resize(strata.n_strata(z));
    es[z].resize(strata.n_strata(z));
  }
  for (std::size_t i : draw.selected) {
    const auto& u = pop.unit(i);
    if (!u.y) throw Error(ErrorCode::UncodedUnit, "sampled unit '" + u.id + "' has no observed y", {u.id});
    ys[pop.arm_of(i)][strata.label(i)].push_back(*u.y);
    es[pop.arm_of(i)][strata.label(i)].push_back(*u.y - u.y_hat);
  }

  for (int z = 0; z < strata.n_arms(); ++z) {
    ArmVariance arm;
    arm.N = 0;
    for (int c : strata.counts(z)) arm.N += c;
    const double Nz = arm.N;
    double mean_sq = 0.0, ybar = 0.0, correction = 0.0;
    for (int k = 0; k < strata.n_strata(z); ++k) {
      const int Nk = strata.counts(z)[k];
      const int nk = n[z][k];
      if (nk < 1) {
        throw Error(ErrorCode::StratumTooSmallForVariance,
                    "StratumTooSmallForVariance(" + std::to_string(z) + ", " + std::to_string(k + 1) +
                        "): no coded units");
      }
      const Eigen::Map<const VectorXd> y(ys[z][k].data(), nk);
      const Eigen::Map<const VectorXd> e(es[z][k].data(), nk);
      StratumDiagnostics sd;
      sd.arm = z;
      sd.stratum = k;
      sd.N = Nk;
      sd.n = nk;
      sd.mean_residual = mean(e);
      sd.residual_variance = sample_variance(e);
      if (nk < Nk) {
        if (nk < 2) {
          throw Error(ErrorCode::StratumTooSmallForVariance,
                      "StratumTooSmallForVariance(" + std::to_string(z) + ", " + std::to_string(k + 1) +
                          "): n=1 < N=" + std::to_string(Nk));
        }
        sd.within_term = double(Nk) * (Nk - nk) / (Nz * Nz * nk) * sd.residual_variance;
        correction += (double(Nk) * Nk) / (Nz * Nz) * (double(Nk - nk) / Nk) * sample_variance(y) / nk;
      }
      arm.within += sd.within_term;
      mean_sq += (Nk / Nz) * (y.squaredNorm() / nk);
      ybar += (Nk / Nz) * mean(y);
      rep.strata.push_back(sd);
    }
    if (arm.N < 2) {
      throw Error(ErrorCode::StratumTooSmallForVariance,
                  "arm " + std::to_string(z) + " needs at least 2 units for its outcome variance");
    }
    arm.s2_hat = Nz / (Nz - 1.0) * (mean_sq - ybar * ybar + correction);
    arm.s2_in_total = pop.mode() == ArmMode::two_arm || mode == VarianceMode::superpopulation;
    rep.total += arm.within + (arm.s2_in_total ? arm.s2_hat / Nz : 0.0);
    rep.arms.push_back(arm);
  }
  return rep;
}

}  // namespace stratma
