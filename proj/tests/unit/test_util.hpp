#pragma once

#include "srlab/policy.hpp"

#include <cmath>
#include <vector>

namespace srlab::testing {

inline RowMatrix matrix(const std::vector<std::vector<double>>& rows) {
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

inline TabularPolicy tabular(const std::vector<std::vector<double>>& rows, Support support = Support::strict) {
  return TabularPolicy::from_probabilities(matrix(rows), support);
}

/// Plain-loop power-and-normalize, independent of the log-domain code path.
inline std::vector<double> power_normalize(const std::vector<double>& row, double s) {
  std::vector<double> out(row.size());
  double z = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) z += out[i] = std::pow(row[i], s);
  for (double& v : out) v /= z;
  return out;
}

}  // namespace srlab::testing
