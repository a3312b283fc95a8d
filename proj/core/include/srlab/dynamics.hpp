#pragma once

#include "srlab/csv.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <variant>
#include <vector>

namespace srlab {

/// Finite hypothesis class, described by log|Pi|.
struct FiniteComplexity {
  double log_class_size = 0.0;
};

/// Linear softmax class of dimension d and radius B.
struct LinearComplexity {
  double d = 1.0;
  double B = 1.0;
};

using Complexity = std::variant<FiniteComplexity, LinearComplexity>;

struct TheoryInputs {
  double c = 1.0;
  double gamma = 1.0;
  double delta = 0.5;
  std::size_t n = 1;
  double beta = 1.0;
  /// Confidence level of the high-probability statement.
  double rho = 0.05;
  Complexity complexity = FiniteComplexity{};

  void validate() const;
  /// log(n |Pi| / rho), or (d log(n B / (d rho)))^{3/2} for the linear class.
  double complexity_factor() const;

  /// Flat keys c, gamma, delta, n, beta (default 1/sqrt(n)), rho, and either
  /// log_class_size or d and B.
  static TheoryInputs from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Constants of the recurrence kappa_t <= M0 + K sqrt(kappa_{t-1}).
struct RecurrenceParams {
  double M0 = 1.0;
  double M1 = 0.0;
  double M2 = 0.0;
  double K = 0.0;
  double U = 1.0;
  double q = 0.0;

  /// Derives K, U and q. M0 > 0, M1 >= 0, M2 >= 0.
  static RecurrenceParams from_constants(double M0, double M1, double M2);
  nlohmann::json to_json() const;
};

RecurrenceParams recurrence_params(const TheoryInputs& inputs);

/// One step of the recurrence before the log x <= (2/e) sqrt x reduction.
double recurrence_step(const RecurrenceParams& params, double kappa_prev);

/// U + q^t (kappa_0 - U) for t = 0..T.
std::vector<double> bound_trajectory(double kappa_0, const RecurrenceParams& params, std::size_t T);

/// ceil(log(c kappa_0) / log(1 + sqrt(n c))), or 0 when c kappa_0 <= 1.
std::size_t iterations_threshold(double c, double kappa_0, std::size_t n);

struct EnvelopeTerms {
  /// Initialization-free floor (1/(gamma delta sqrt n)) / sqrt c.
  double stable = 0.0;
  /// sqrt(kappa_0) / (1 + sqrt(n c))^{(T-1)/2}, with the same prefactor.
  double transient = 0.0;
  double total() const { return stable + transient; }
};

/// Failure-probability envelope after T >= 1 rounds, unit hidden constant.
EnvelopeTerms envelope_terms(const TheoryInputs& inputs, double kappa_0, std::size_t T);
double failure_envelope(const TheoryInputs& inputs, double kappa_0, std::size_t T);

/// Columns t, envelope_kappa, envelope_failure for t = 0..T; the failure
/// envelope is undefined at t = 0 and written as nan.
CsvTable theory_curve(const TheoryInputs& inputs, double kappa_0, std::size_t T);

}  // namespace srlab
