#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <span>
#include <vector>

namespace srlab {

/// Ordinary least squares y = slope x + intercept.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;

  /// slope +- t_{0.975, points-2} * slope_stderr.
  double ci_low() const;
  double ci_high() const;
  nlohmann::json to_json() const;
};

/// Needs at least two points with distinct x; otherwise every field but
/// `points` is nan.
LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

/// Fit of log y on log x over the points with y > 0.
LinearFit fit_log_log(std::span<const double> x, std::span<const double> y);

/// Two-sided 97.5% Student t quantile.
double student_t_975(std::size_t dof);

/// median_t |k_{t+1} - k_inf| / |k_t - k_inf| with k_inf the last entry,
/// over the rounds where |k_t - k_inf| > floor. nan if no round qualifies.
double geometric_ratio(std::span<const double> kappa, double floor = 1e-10);

}  // namespace srlab
