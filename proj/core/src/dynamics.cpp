#include "srlab/dynamics.hpp"

#include "srlab/errors.hpp"
#include "srlab/serialization.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace srlab {
namespace {

bool positive(double v) { return v > 0.0 && std::isfinite(v); }

}  // namespace

void TheoryInputs::validate() const {
  if (!(c > 0.0 && c <= 1.0)) throw ConfigError("c", "must lie in (0, 1]");
  if (!positive(gamma)) throw ConfigError("gamma", "must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta", "must lie in (0, 1)");
  if (n < 1) throw ConfigError("n", "must be at least 1");
  if (!positive(beta)) throw ConfigError("beta", "must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho", "must lie in (0, 1)");
  if (const auto* f = std::get_if<FiniteComplexity>(&complexity)) {
    if (!(f->log_class_size >= 0.0) || !std::isfinite(f->log_class_size)) {
      throw ConfigError("log_class_size", "must be finite and nonnegative");
    }
  } else {
    const auto& l = std::get<LinearComplexity>(complexity);
    if (!(l.d >= 1.0)) throw ConfigError("d", "must be at least 1");
    if (!(l.B >= 1.0)) throw ConfigError("B", "must be at least 1");
  }
}

double TheoryInputs::complexity_factor() const {
  const double log_n = std::log(static_cast<double>(n));
  if (const auto* f = std::get_if<FiniteComplexity>(&complexity)) {
    return log_n + f->log_class_size - std::log(rho);
  }
  const auto& l = std::get<LinearComplexity>(complexity);
  const double inner = l.d * std::log(static_cast<double>(n) * l.B / (l.d * rho));
  return std::pow(std::max(inner, 0.0), 1.5);
}

TheoryInputs TheoryInputs::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("", "theory inputs must be a JSON object");
  TheoryInputs in;
  auto read = [&](const char* key, auto& into) {
    if (!doc.contains(key)) return false;
    try {
      doc.at(key).get_to(into);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(key, e.what());
    }
    return true;
  };
  for (const char* key : {"c", "gamma", "n"}) {
    if (!doc.contains(key)) throw ConfigError(key, "missing");
  }
  read("c", in.c);
  read("gamma", in.gamma);
  read("delta", in.delta);
  read("n", in.n);
  if (!read("beta", in.beta)) in.beta = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(in.n, 1)));
  read("rho", in.rho);
  if (doc.contains("d") || doc.contains("B")) {
    LinearComplexity l;
    if (!read("d", l.d)) throw ConfigError("d", "missing (B given)");
    if (!read("B", l.B)) throw ConfigError("B", "missing (d given)");
    in.complexity = l;
  } else {
    FiniteComplexity f;
    read("log_class_size", f.log_class_size);
    in.complexity = f;
  }
  in.validate();
  return in;
}

nlohmann::json TheoryInputs::to_json() const {
  nlohmann::json doc = {{"c", c}, {"gamma", gamma}, {"delta", delta}, {"n", n}, {"beta", beta}, {"rho", rho}};
  if (const auto* f = std::get_if<FiniteComplexity>(&complexity)) {
    doc["log_class_size"] = f->log_class_size;
  } else {
    const auto& l = std::get<LinearComplexity>(complexity);
    doc["d"] = l.d;
    doc["B"] = l.B;
  }
  return doc;
}

RecurrenceParams RecurrenceParams::from_constants(double M0, double M1, double M2) {
  if (!positive(M0)) throw PreconditionError("M0 must be positive");
  if (!(M1 >= 0.0) || !(M2 >= 0.0)) throw PreconditionError("M1 and M2 must be nonnegative");
  RecurrenceParams p;
  p.M0 = M0;
  p.M1 = M1;
  p.M2 = M2;
  p.K = M1 + (2.0 / std::numbers::e) * M2;
  const double root = std::sqrt(p.K * p.K + 4.0 * M0);
  const double sqrt_u = 0.5 * (p.K + root);
  p.U = sqrt_u * sqrt_u;
  p.q = p.K / (p.K + root);
  return p;
}

nlohmann::json RecurrenceParams::to_json() const {
  return {{"M0", M0}, {"M1", M1}, {"M2", M2}, {"K", K}, {"U", U}, {"q", q}};
}

RecurrenceParams recurrence_params(const TheoryInputs& inputs) {
  inputs.validate();
  const double lead = 1.0 + 1.0 / inputs.c;
  const double denom = inputs.gamma * inputs.delta;
  const double M1 = lead * inputs.complexity_factor() / (denom * std::sqrt(static_cast<double>(inputs.n)));
  const double M2 = lead * inputs.beta / denom;
  return RecurrenceParams::from_constants(lead, M1, M2);
}

double recurrence_step(const RecurrenceParams& params, double kappa_prev) {
  if (!(kappa_prev >= 1.0)) throw PreconditionError("kappa must be at least 1");
  return params.M0 + params.M1 * std::sqrt(kappa_prev) + params.M2 * std::log(kappa_prev);
}

std::vector<double> bound_trajectory(double kappa_0, const RecurrenceParams& params, std::size_t T) {
  if (!(kappa_0 >= 1.0)) throw PreconditionError("kappa_0 must be at least 1");
  std::vector<double> out;
  out.reserve(T + 1);
  out.push_back(kappa_0);
  double qt = 1.0;
  for (std::size_t t = 1; t <= T; ++t) {
    qt *= params.q;
    out.push_back(params.U + qt * (kappa_0 - params.U));
  }
  return out;
}

std::size_t iterations_threshold(double c, double kappa_0, std::size_t n) {
  if (!(c > 0.0) || n < 1) throw PreconditionError("iterations_threshold needs c > 0 and n >= 1");
  const double ck = c * kappa_0;
  if (ck <= 1.0) return 0;
  const double ratio = std::log(ck) / std::log1p(std::sqrt(static_cast<double>(n) * c));
  return static_cast<std::size_t>(std::ceil(ratio));
}

EnvelopeTerms envelope_terms(const TheoryInputs& inputs, double kappa_0, std::size_t T) {
  inputs.validate();
  if (T < 1) throw PreconditionError("the failure envelope needs T >= 1");
  if (!(kappa_0 >= 0.0)) throw PreconditionError("kappa_0 must be nonnegative");
  const double n = static_cast<double>(inputs.n);
  double prefactor = 1.0 / (inputs.gamma * inputs.delta * std::sqrt(n));
  if (std::holds_alternative<LinearComplexity>(inputs.complexity)) prefactor *= inputs.complexity_factor();
  const double decay = std::pow(1.0 + std::sqrt(n * inputs.c), 0.5 * (static_cast<double>(T) - 1.0));
  return {prefactor / std::sqrt(inputs.c), prefactor * std::sqrt(kappa_0) / decay};
}

double failure_envelope(const TheoryInputs& inputs, double kappa_0, std::size_t T) {
  return envelope_terms(inputs, kappa_0, T).total();
}

CsvTable theory_curve(const TheoryInputs& inputs, double kappa_0, std::size_t T) {
  const RecurrenceParams params = recurrence_params(inputs);
  const std::vector<double> kappa = bound_trajectory(kappa_0, params, T);
  CsvTable table;
  table.header = {"t", "envelope_kappa", "envelope_failure"};
  for (std::size_t t = 0; t <= T; ++t) {
    const double failure = t == 0 ? std::numeric_limits<double>::quiet_NaN() : failure_envelope(inputs, kappa_0, t);
    table.rows.push_back({std::to_string(t), format_real(kappa[t]), format_real(failure)});
  }
  return table;
}

}  // namespace srlab
