#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace srlab {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Elementwise std::exp. Eigen's packet exp clamps its argument, so exp(-inf)
/// comes out near 5e-309 instead of 0.
template <typename Derived>
auto exact_exp(const Eigen::ArrayBase<Derived>& a) {
  return a.unaryExpr([](double v) { return std::exp(v); });
}

/// log(sum(exp(v))) without overflow; -inf for an all -inf (or empty) input.
template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  if (v.size() == 0) return kNegInf;
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log(exact_exp(v.derived().array() - top).sum());
}

}  // namespace srlab
