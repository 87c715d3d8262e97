#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stratma/core.hpp"
#include "stratma/error.hpp"
#include "stratma/sampling.hpp"
#include "stratma/stats.hpp"

namespace stratma {

/// Values (typically residuals) for every unit, grouped [arm][stratum].
template <typename Scalar>
using StratumValues = std::vector<std::vector<Vector<Scalar>>>;

/// Coding quotas [arm][stratum].
using Quotas = std::vector<std::vector<int>>;

enum class VarianceMode { finite_population, superpopulation };

const char* to_string(VarianceMode m);

namespace detail {

__extension__ typedef __int128 int128;

inline void check_quota(int z, int k, long N, int n) {
  if (n < 1 || n > N) {
    throw Error(ErrorCode::AllocationInfeasible, "AllocationInfeasible(" + std::to_string(z) + ", " +
                                                     std::to_string(k + 1) + "): n=" + std::to_string(n) +
                                                     " N=" + std::to_string(N));
  }
}

template <typename Scalar>
void check_shape(const StratumValues<Scalar>& e, const Quotas& n) {
  if (e.size() != n.size()) throw Error(ErrorCode::InvalidArgument, "arm count mismatch");
  for (std::size_t z = 0; z < e.size(); ++z) {
    if (e[z].size() != n[z].size()) throw Error(ErrorCode::InvalidArgument, "stratum count mismatch");
  }
}

template <typename Scalar>
Vector<Scalar> concat(const std::vector<Vector<Scalar>>& parts) {
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  Vector<Scalar> out(total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

}  // namespace detail

/// Conditional variance of the stratified model-assisted estimator
/// given the assignment: sum_z sum_k N_zk (N_zk - n_zk) / (N_z^2 n_zk) var_k(e),
/// var_k with divisor N_zk - 1.
template <typename Scalar>
Scalar exact_conditional_variance(const StratumValues<Scalar>& e, const Quotas& n) {
  detail::check_shape(e, n);
  Scalar total(0);
  for (std::size_t z = 0; z < e.size(); ++z) {
    long Nz = 0;
    for (const auto& v : e[z]) Nz += v.size();
    for (std::size_t k = 0; k < e[z].size(); ++k) {
      const long Nk = e[z][k].size();
      const int nk = n[z][k];
      detail::check_quota(static_cast<int>(z), static_cast<int>(k), Nk, nk);
      if (nk == Nk) continue;
      if (Nk < 2) {
        throw Error(ErrorCode::StratumTooSmall, "StratumTooSmall(" + std::to_string(z) + ", " +
                                                    std::to_string(k + 1) + ")");
      }
      const Scalar fpc = Scalar(Nk) * Scalar(Nk - nk) / (Scalar(Nz) * Scalar(Nz) * Scalar(nk));
      total += fpc * sample_variance(e[z][k]);
    }
  }
  return total;
}

/// Conditional variance of the SRS model-assisted estimator with n_z coded per
/// arm: sum_z (N_z - n_z)/N_z * S_z^2(e) / n_z.
template <typename Scalar>
Scalar srs_conditional_variance(const std::vector<Vector<Scalar>>& arm_values,
                                const std::vector<int>& n) {
  if (arm_values.size() != n.size()) throw Error(ErrorCode::InvalidArgument, "arm count mismatch");
  Scalar total(0);
  for (std::size_t z = 0; z < arm_values.size(); ++z) {
    const long Nz = arm_values[z].size();
    detail::check_quota(static_cast<int>(z), 0, Nz, n[z]);
    if (n[z] == Nz) continue;
    total += Scalar(Nz - n[z]) / Scalar(Nz) * sample_variance(arm_values[z]) / Scalar(n[z]);
  }
  return total;
}

template <typename Scalar>
Scalar srs_conditional_variance(const StratumValues<Scalar>& e, const std::vector<int>& n) {
  std::vector<Vector<Scalar>> arms;
  for (const auto& strata : e) arms.push_back(detail::concat(strata));
  return srs_conditional_variance(arms, n);
}

/// Right-hand side of the arm variance identity
/// S^2(e) = (1/(N-1)) sum_k [(N_k - 1) var_k + N_k (ebar_k - ebar)^2].
template <typename Scalar>
Scalar stratified_variance_identity(const std::vector<Vector<Scalar>>& strata) {
  const Vector<Scalar> all = detail::concat(strata);
  const Scalar ebar = mean(all);
  Scalar acc(0);
  for (const auto& v : strata) {
    const Scalar d = mean(v) - ebar;
    if (v.size() > 1) acc += Scalar(v.size() - 1) * sample_variance(v);
    acc += Scalar(v.size()) * d * d;
  }
  return acc / Scalar(all.size() - 1);
}

template <typename Scalar = double>
struct Decomposition {
  Scalar bs = 0;
  Scalar ws = 0;
  Scalar delta = 0;  // bs - ws: conditional variance gain over SRS
  std::vector<Scalar> bs_arm, ws_arm;
  // [arm][stratum]
  std::vector<std::vector<Scalar>> bs_stratum, ws_stratum, weight, stratum_mean, stratum_variance;
};

/// Between/within-strata decomposition of Var(SRS) - Var(stratified) given the
/// assignment, with the SRS comparator coding n_z = sum_k n_zk per arm.
template <typename Scalar>
Decomposition<Scalar> bs_ws_decomposition(const StratumValues<Scalar>& e, const Quotas& n) {
  detail::check_shape(e, n);
  Decomposition<Scalar> d;
  for (std::size_t z = 0; z < e.size(); ++z) {
    const Vector<Scalar> all = detail::concat(e[z]);
    const long Nz = all.size();
    long nz = 0;
    for (int v : n[z]) nz += v;
    if (Nz < 2) throw Error(ErrorCode::StratumTooSmall, "arm " + std::to_string(z) + " has fewer than 2 units");
    const Scalar ebar = mean(all);
    Scalar bs_z(0), ws_z(0);
    d.bs_stratum.emplace_back();
    d.ws_stratum.emplace_back();
    d.weight.emplace_back();
    d.stratum_mean.emplace_back();
    d.stratum_variance.emplace_back();
    for (std::size_t k = 0; k < e[z].size(); ++k) {
      const long Nk = e[z][k].size();
      const long nk = n[z][k];
      detail::check_quota(static_cast<int>(z), static_cast<int>(k), Nk, static_cast<int>(nk));
      const Scalar ek = mean(e[z][k]);
      const Scalar bs_k = Scalar(Nz - nz) / Scalar(Nz) * Scalar(Nk) / (Scalar(nz) * Scalar(Nz - 1)) *
                          (ek - ebar) * (ek - ebar);
      // Exact integer numerator so the single-stratum case cancels to zero.
      const detail::int128 num = static_cast<detail::int128>(Nk) * (Nk - nk) * (Nz - 1) * nz -
                           static_cast<detail::int128>(Nk - 1) * (Nz - nz) * Nz * nk;
      const Scalar den = Scalar(Nz) * Scalar(Nz) * Scalar(Nz - 1) * Scalar(nk) * Scalar(nz);
      const Scalar w = static_cast<Scalar>(static_cast<long double>(num)) / den;
      Scalar vk(0);
      if (Nk > 1) vk = sample_variance(e[z][k]);
      const Scalar ws_k = num == 0 ? Scalar(0) : w * vk;
      bs_z += bs_k;
      ws_z += ws_k;
      d.bs_stratum.back().push_back(bs_k);
      d.ws_stratum.back().push_back(ws_k);
      d.weight.back().push_back(w);
      d.stratum_mean.back().push_back(ek);
      d.stratum_variance.back().push_back(Nk > 1 ? vk : Scalar(NAN));
    }
    d.bs_arm.push_back(bs_z);
    d.ws_arm.push_back(ws_z);
    d.bs += bs_z;
    d.ws += ws_z;
  }
  d.delta = d.bs - d.ws;
  return d;
}

/// Residuals y - y_hat of every unit grouped by (arm, stratum), members in id
/// order. Every unit must be coded.
StratumValues<double> stratum_residuals(const PopulationTable& pop, const StrataAssignment& strata);

double exact_conditional_variance(const PopulationTable& pop, const StrataAssignment& strata,
                                  const Quotas& n);
Decomposition<double> bs_ws_decomposition(const PopulationTable& pop, const StrataAssignment& strata,
                                          const Quotas& n);

struct StratumDiagnostics {
  int arm = 0;
  int stratum = 0;  // 0-based
  int N = 0;
  int n = 0;
  double mean_residual = NAN;
  double residual_variance = NAN;  // coded-sample, divisor n - 1
  double within_term = 0.0;
};

struct ArmVariance {
  int N = 0;
  double within = 0.0;  // sum_k N_k (N_k - n_k) / (N^2 n_k) var_hat_k(e)
  double s2_hat = 0.0;  // stratified-sample estimate of the arm's outcome variance
  bool s2_in_total = true;
};

struct VarianceReport {
  double total = 0.0;
  VarianceMode mode = VarianceMode::superpopulation;
  std::vector<ArmVariance> arms;
  std::vector<StratumDiagnostics> strata;
};

/// Realized n_zk of a draw under a stratification.
Quotas draw_counts(const PopulationTable& pop, const StrataAssignment& strata, const SampleDraw& draw);

/// Conservative plug-in variance of the stratified model-assisted estimator.
/// Pass StrataAssignment::trivial for the SRS version.
VarianceReport plugin_variance(const PopulationTable& pop, const StrataAssignment& strata,
                               const SampleDraw& draw,
                               VarianceMode mode = VarianceMode::superpopulation);

}  // namespace stratma
