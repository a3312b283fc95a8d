#pragma once

#include "srlab/policy.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <string>

namespace srlab {

/// Shortest decimal text that parses back to the same double;
/// "nan", "inf" and "-inf" for non-finite values.
std::string format_real(double value);
/// Inverse of format_real. Throws std::invalid_argument on malformed text.
double parse_real(std::string_view text);

/// Plain-text matrix: "n_prompts n_responses" then one row of
/// probabilities per prompt.
void write_tabular_policy(std::ostream& out, const TabularPolicy& policy);
TabularPolicy read_tabular_policy(std::istream& in, Support support = Support::strict);

/// Flat document: n_prompts, n_responses, dim, radius_B, theta[dim] and
/// features[n_prompts * n_responses * dim] in row-major (x, y, k) order.
nlohmann::json linear_policy_to_json(const LinearSoftmaxPolicy& policy);
LinearSoftmaxPolicy linear_policy_from_json(const nlohmann::json& doc);

}  // namespace srlab
