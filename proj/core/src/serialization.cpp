#include "srlab/serialization.hpp"

#include "srlab/errors.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace srlab {

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

double parse_real(std::string_view text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a real number: '" + std::string(text) + "'");
  }
  return value;
}

void write_tabular_policy(std::ostream& out, const TabularPolicy& policy) {
  out << policy.n_prompts() << ' ' << policy.n_responses() << '\n';
  for (std::size_t x = 0; x < policy.n_prompts(); ++x) {
    for (std::size_t y = 0; y < policy.n_responses(); ++y) {
      if (y) out << ' ';
      out << format_real(policy.probability(x, y));
    }
    out << '\n';
  }
}

TabularPolicy read_tabular_policy(std::istream& in, Support support) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ConstructionError("policy file is empty");
  std::istringstream header(line);
  std::size_t n_prompts = 0;
  std::size_t n_responses = 0;
  if (!(header >> n_prompts >> n_responses) || n_prompts == 0 || n_responses == 0) {
    throw ConstructionError("line 1: expected 'n_prompts n_responses'");
  }
  RowMatrix probs(static_cast<Eigen::Index>(n_prompts), static_cast<Eigen::Index>(n_responses));
  for (std::size_t x = 0; x < n_prompts; ++x) {
    if (!next_line()) throw ConstructionError("expected " + std::to_string(n_prompts) + " probability rows");
    std::istringstream row(line);
    std::string token;
    std::size_t y = 0;
    while (row >> token) {
      if (y == n_responses) throw ConstructionError("line " + std::to_string(line_no) + ": too many entries");
      try {
        probs(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y++)) = parse_real(token);
      } catch (const std::invalid_argument& e) {
        throw ConstructionError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (y != n_responses) throw ConstructionError("line " + std::to_string(line_no) + ": too few entries");
  }
  return TabularPolicy::from_probabilities(probs, support);
}

nlohmann::json linear_policy_to_json(const LinearSoftmaxPolicy& policy) {
  const FeatureTable& f = policy.features();
  std::vector<double> theta(policy.theta().data(), policy.theta().data() + policy.theta().size());
  std::vector<double> features(f.rows().data(), f.rows().data() + f.rows().size());
  return {{"n_prompts", f.n_prompts()}, {"n_responses", f.n_responses()}, {"dim", f.dim()},
          {"radius_B", policy.radius()}, {"theta", theta},          {"features", features}};
}

LinearSoftmaxPolicy linear_policy_from_json(const nlohmann::json& doc) {
  try {
    const auto n_prompts = doc.at("n_prompts").get<std::size_t>();
    const auto n_responses = doc.at("n_responses").get<std::size_t>();
    const auto dim = doc.at("dim").get<std::size_t>();
    const auto radius = doc.at("radius_B").get<double>();
    const auto theta = doc.at("theta").get<std::vector<double>>();
    const auto features = doc.at("features").get<std::vector<double>>();
    if (theta.size() != dim) throw ConstructionError("theta has " + std::to_string(theta.size()) + " entries, expected dim");
    if (features.size() != n_prompts * n_responses * dim) {
      throw ConstructionError("features must hold n_prompts * n_responses * dim entries");
    }
    RowMatrix rows = Eigen::Map<const RowMatrix>(features.data(), static_cast<Eigen::Index>(n_prompts * n_responses),
                                                 static_cast<Eigen::Index>(dim));
    auto table = std::make_shared<const FeatureTable>(n_prompts, n_responses, std::move(rows));
    return LinearSoftmaxPolicy(std::move(table), Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(dim)),
                               radius);
  } catch (const nlohmann::json::exception& e) {
    throw ConstructionError(std::string("linear policy document: ") + e.what());
  }
}

}  // namespace srlab
