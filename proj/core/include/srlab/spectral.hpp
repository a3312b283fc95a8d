#pragma once

#include "srlab/policy.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace srlab {

/// Nonincreasing, nonnegative eigenvalues.
class Spectrum {
 public:
  /// Sorts nonincreasing. Entries in (-1e-10, 0) clamp to 0; anything below
  /// -1e-10 or non-finite is a ConstructionError.
  explicit Spectrum(std::vector<double> eigenvalues);

  const std::vector<double>& eigenvalues() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double trace() const;
  /// Count of strictly positive eigenvalues.
  std::size_t rank() const;

 private:
  std::vector<double> values_;
};

/// One eigenvalue per line; blank lines and '#' comments are skipped.
Spectrum read_spectrum(std::istream& in);

/// sum_i lambda_i / (lambda_i + lambda), lambda > 0.
double effective_dimension(const Spectrum& spectrum, double lambda);

/// lambda_i <= C e^{-alpha i}, i = 1, 2, ...
struct ExponentialRegime {
  double C = 1.0;
  double alpha = 1.0;
};

/// lambda_i <= C i^{-p}, p > 1.
struct PolynomialRegime {
  double C = 1.0;
  double p = 2.0;
};

/// lambda_i >= vartheta for i <= r and sum_{i > r} lambda_i <= tau.
struct SpikedRegime {
  std::size_t r = 1;
  double vartheta = 1.0;
  double tau = 0.01;
};

using SpectralRegime = std::variant<ExponentialRegime, PolynomialRegime, SpikedRegime>;

void validate(const SpectralRegime& regime);
std::string regime_name(const SpectralRegime& regime);
/// {"kind": "exponential" | "polynomial" | "spiked", parameters...}.
SpectralRegime regime_from_json(const nlohmann::json& doc);
nlohmann::json regime_to_json(const SpectralRegime& regime);

/// Whether `spectrum` meets the regime's hypothesis (tolerance 1e-12 relative).
bool satisfies(const SpectralRegime& regime, const Spectrum& spectrum);

/// A d-term spectrum on the regime's boundary: C e^{-alpha i}, C i^{-p}, or
/// r spikes at vartheta followed by a geometric tail of total mass tau.
Spectrum canonical_spectrum(const SpectralRegime& regime, std::size_t d);

/// Explicit upper bound on effective_dimension for every spectrum that
/// satisfies the regime:
///   exponential  m + max(1, 1/(e^alpha - 1)),  m = max(0, ceil(log(C/lambda)/alpha))
///   polynomial   ceil((C/lambda)^{1/p}) * max(2, p/(p-1))
///   spiked       r + tau/lambda
double regime_bound(const SpectralRegime& regime, double lambda);

/// Eigenvalues of E_{x~mu, y~pi(.|x)}[phi phi^T], computed exactly.
Spectrum empirical_feature_spectrum(const FeatureTable& features, const TabularPolicy& policy,
                                    const PromptDistribution& mu);

}  // namespace srlab
