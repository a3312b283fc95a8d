#include "srlab/spectral.hpp"

#include "srlab/errors.hpp"
#include "srlab/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <numeric>
#include <string>

namespace srlab {
namespace {

constexpr double kClamp = 1e-10;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw PreconditionError("lambda must be positive and finite");
}

}  // namespace

Spectrum::Spectrum(std::vector<double> eigenvalues) : values_(std::move(eigenvalues)) {
  for (double& v : values_) {
    if (!std::isfinite(v)) throw ConstructionError("eigenvalues must be finite");
    if (v < -kClamp) throw ConstructionError("negative eigenvalue " + format_real(v) + " (covariance must be PSD)");
    if (v < 0.0) v = 0.0;
  }
  std::sort(values_.begin(), values_.end(), std::greater<>());
}

double Spectrum::trace() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

std::size_t Spectrum::rank() const {
  return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), [](double v) { return v > 0.0; }));
}

Spectrum read_spectrum(std::istream& in) {
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    try {
      values.push_back(parse_real(std::string_view(line).substr(first, last - first + 1)));
    } catch (const std::invalid_argument&) {
      throw ConstructionError("spectrum line " + std::to_string(line_no) + ": not a number");
    }
  }
  return Spectrum(std::move(values));
}

double effective_dimension(const Spectrum& spectrum, double lambda) {
  check_lambda(lambda);
  double total = 0.0;
  for (double v : spectrum.eigenvalues()) total += v / (v + lambda);
  return total;
}

void validate(const SpectralRegime& regime) {
  std::visit(overloaded{
                 [](const ExponentialRegime& r) {
                   if (!(r.C > 0.0) || !(r.alpha > 0.0)) throw ConfigError("regime", "exponential needs C > 0, alpha > 0");
                 },
                 [](const PolynomialRegime& r) {
                   if (!(r.C > 0.0) || !(r.p > 1.0)) throw ConfigError("regime", "polynomial needs C > 0, p > 1");
                 },
                 [](const SpikedRegime& r) {
                   if (r.r < 1 || !(r.vartheta > 0.0) || !(r.tau > 0.0)) {
                     throw ConfigError("regime", "spiked needs r >= 1, vartheta > 0, tau > 0");
                   }
                 },
             },
             regime);
}

std::string regime_name(const SpectralRegime& regime) {
  return std::visit(overloaded{
                        [](const ExponentialRegime&) { return std::string("exponential"); },
                        [](const PolynomialRegime&) { return std::string("polynomial"); },
                        [](const SpikedRegime&) { return std::string("spiked"); },
                    },
                    regime);
}

SpectralRegime regime_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("kind")) throw ConfigError("regime", "needs an object with a kind");
  try {
    const std::string kind = doc.at("kind").get<std::string>();
    SpectralRegime regime;
    if (kind == "exponential") {
      regime = ExponentialRegime{doc.at("C").get<double>(), doc.at("alpha").get<double>()};
    } else if (kind == "polynomial") {
      regime = PolynomialRegime{doc.at("C").get<double>(), doc.at("p").get<double>()};
    } else if (kind == "spiked") {
      regime = SpikedRegime{doc.at("r").get<std::size_t>(), doc.at("vartheta").get<double>(), doc.at("tau").get<double>()};
    } else {
      throw ConfigError("regime.kind", "unknown regime '" + kind + "'");
    }
    validate(regime);
    return regime;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("regime", e.what());
  }
}

nlohmann::json regime_to_json(const SpectralRegime& regime) {
  return std::visit(overloaded{
                        [](const ExponentialRegime& r) -> nlohmann::json {
                          return {{"kind", "exponential"}, {"C", r.C}, {"alpha", r.alpha}};
                        },
                        [](const PolynomialRegime& r) -> nlohmann::json {
                          return {{"kind", "polynomial"}, {"C", r.C}, {"p", r.p}};
                        },
                        [](const SpikedRegime& r) -> nlohmann::json {
                          return {{"kind", "spiked"}, {"r", r.r}, {"vartheta", r.vartheta}, {"tau", r.tau}};
                        },
                    },
                    regime);
}

bool satisfies(const SpectralRegime& regime, const Spectrum& spectrum) {
  const auto& v = spectrum.eigenvalues();
  constexpr double slack = 1.0 + 1e-12;
  return std::visit(overloaded{
                        [&](const ExponentialRegime& r) {
                          for (std::size_t i = 0; i < v.size(); ++i) {
                            if (v[i] > r.C * std::exp(-r.alpha * static_cast<double>(i + 1)) * slack) return false;
                          }
                          return true;
                        },
                        [&](const PolynomialRegime& r) {
                          for (std::size_t i = 0; i < v.size(); ++i) {
                            if (v[i] > r.C * std::pow(static_cast<double>(i + 1), -r.p) * slack) return false;
                          }
                          return true;
                        },
                        [&](const SpikedRegime& r) {
                          if (v.size() < r.r) return false;
                          for (std::size_t i = 0; i < r.r; ++i) {
                            if (v[i] * slack < r.vartheta) return false;
                          }
                          const double tail = std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(r.r), v.end(), 0.0);
                          return tail <= r.tau * slack;
                        },
                    },
                    regime);
}

Spectrum canonical_spectrum(const SpectralRegime& regime, std::size_t d) {
  validate(regime);
  std::vector<double> v(d);
  std::visit(overloaded{
                 [&](const ExponentialRegime& r) {
                   for (std::size_t i = 0; i < d; ++i) v[i] = r.C * std::exp(-r.alpha * static_cast<double>(i + 1));
                 },
                 [&](const PolynomialRegime& r) {
                   for (std::size_t i = 0; i < d; ++i) v[i] = r.C * std::pow(static_cast<double>(i + 1), -r.p);
                 },
                 [&](const SpikedRegime& r) {
                   if (d <= r.r) throw ConfigError("d", "spiked spectrum needs d > r");
                   const std::size_t tail = d - r.r;
                   // Halving tail, scaled to mass tau and capped below vartheta.
                   double mass = 0.0;
                   for (std::size_t k = 0; k < tail; ++k) mass += std::ldexp(1.0, -static_cast<int>(k));
                   const double scale = r.tau / mass;
                   for (std::size_t i = 0; i < r.r; ++i) v[i] = r.vartheta;
                   for (std::size_t k = 0; k < tail; ++k) {
                     v[r.r + k] = std::min(r.vartheta, scale * std::ldexp(1.0, -static_cast<int>(k)));
                   }
                 },
             },
             regime);
  return Spectrum(std::move(v));
}

double regime_bound(const SpectralRegime& regime, double lambda) {
  check_lambda(lambda);
  validate(regime);
  return std::visit(overloaded{
                        [&](const ExponentialRegime& r) {
                          const double m = std::max(0.0, std::ceil(std::log(r.C / lambda) / r.alpha));
                          return m + std::max(1.0, 1.0 / std::expm1(r.alpha));
                        },
                        [&](const PolynomialRegime& r) {
                          const double m = std::ceil(std::pow(r.C / lambda, 1.0 / r.p));
                          return m * std::max(2.0, r.p / (r.p - 1.0));
                        },
                        [&](const SpikedRegime& r) { return static_cast<double>(r.r) + r.tau / lambda; },
                    },
                    regime);
}

Spectrum empirical_feature_spectrum(const FeatureTable& features, const TabularPolicy& policy,
                                    const PromptDistribution& mu) {
  if (features.n_prompts() != policy.n_prompts() || features.n_responses() != policy.n_responses()) {
    throw ShapeError("feature table and policy have different prompt/response spaces");
  }
  if (mu.size() != policy.n_prompts()) throw ShapeError("prompt distribution does not match the policy");
  const auto d = static_cast<Eigen::Index>(features.dim());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t x = 0; x < policy.n_prompts(); ++x) {
    const Eigen::RowVectorXd w = exact_exp(policy.log_probs().row(static_cast<Eigen::Index>(x)).array()) * mu.weight(x);
    const auto block = features.block(x);
    cov.noalias() += block.transpose() * w.transpose().asDiagonal() * block;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  const Vector& ev = eig.eigenvalues();
  return Spectrum(std::vector<double>(ev.data(), ev.data() + ev.size()));
}

}  // namespace srlab
