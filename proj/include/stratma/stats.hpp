#pragma once

// Small dense-statistics helpers shared by every module. All take Eigen
// expressions and are templated on the scalar so the exhaustive oracles can
// run in extended precision when needed.

#include <Eigen/Core>
#include <cmath>
#include <limits>

namespace stratma {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using VectorXd = Vector<double>;

template <typename Derived>
typename Derived::Scalar mean(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) return std::numeric_limits<Scalar>::quiet_NaN();
  return v.sum() / static_cast<Scalar>(v.size());
}

/// Variance with divisor n - 1. NaN for fewer than two values.
template <typename Derived>
typename Derived::Scalar sample_variance(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const auto n = v.size();
  if (n < 2) return std::numeric_limits<Scalar>::quiet_NaN();
  const Scalar m = v.sum() / static_cast<Scalar>(n);
  return (v.array() - m).square().sum() / static_cast<Scalar>(n - 1);
}

/// Sum_k w_k (x_k - xbar_w)^2 with xbar_w = Sum_k w_k x_k. Weights are used
/// as given (callers pass proportions).
template <typename DerivedX, typename DerivedW>
typename DerivedX::Scalar weighted_variance(const Eigen::MatrixBase<DerivedX>& x,
                                            const Eigen::MatrixBase<DerivedW>& w) {
  using Scalar = typename DerivedX::Scalar;
  const Scalar centre = x.dot(w);
  return ((x.array() - centre).square() * w.array()).sum();
}

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Inverse of the standard normal CDF for p in (0, 1).
double normal_quantile(double p);

}  // namespace stratma
