#pragma once

#include "srlab/numerics.hpp"
#include "srlab/random.hpp"

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace srlab {

using PromptIndex = std::size_t;
using ResponseIndex = std::size_t;

/// Tolerance for "sums to one" checks on distributions.
inline constexpr double kNormalizationTolerance = 1e-12;

/// Whether a policy may carry zero-probability responses.
///
/// Strict positivity is the default and is what the sharpening analysis
/// assumes. Deterministic rows (hard-instance sentinel, fully sharpened
/// policies, test fixtures) need `allow_zeros`.
enum class Support { strict, allow_zeros };

/// Distribution over a finite, ordered set of prompts.
class PromptDistribution {
 public:
  /// Prompts are named "x0", "x1", ... in weight order.
  explicit PromptDistribution(std::vector<double> weights);
  PromptDistribution(std::vector<std::string> ids, std::vector<double> weights);

  static PromptDistribution uniform(std::size_t n_prompts);

  std::size_t size() const noexcept { return weights_.size(); }
  double weight(PromptIndex x) const;
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  /// Inverse-CDF draw over the ordered prompt set.
  PromptIndex sample(RandomStream& rng) const;

 private:
  std::vector<std::string> ids_;
  std::vector<double> weights_;
  std::vector<double> cdf_;
};

/// pi(y|x) over finite prompt and response sets, stored as log-probabilities.
class TabularPolicy {
 public:
  static TabularPolicy from_probabilities(const RowMatrix& probs, Support support = Support::strict);
  static TabularPolicy from_log_probabilities(RowMatrix log_probs, Support support = Support::strict);
  /// Row-wise softmax of arbitrary finite scores.
  static TabularPolicy from_logits(const RowMatrix& logits);
  static TabularPolicy uniform(std::size_t n_prompts, std::size_t n_responses);

  std::size_t n_prompts() const noexcept { return static_cast<std::size_t>(log_probs_.rows()); }
  std::size_t n_responses() const noexcept { return static_cast<std::size_t>(log_probs_.cols()); }
  Support support() const noexcept { return support_; }

  const RowMatrix& log_probs() const noexcept { return log_probs_; }
  Vector row(PromptIndex x) const;
  RowMatrix probabilities() const { return exact_exp(log_probs_.array()).matrix(); }

  double log_prob(PromptIndex x, ResponseIndex y) const;
  double probability(PromptIndex x, ResponseIndex y) const { return std::exp(log_prob(x, y)); }

 private:
  TabularPolicy(RowMatrix log_probs, Support support) : log_probs_(std::move(log_probs)), support_(support) {}

  RowMatrix log_probs_;
  Support support_;
};

/// Feature map phi(x, y) in R^d with ||phi(x, y)||_2 <= 1.
class FeatureTable {
 public:
  /// `rows` holds phi(x, y) at row x * n_responses + y.
  FeatureTable(std::size_t n_prompts, std::size_t n_responses, RowMatrix rows);

  std::size_t n_prompts() const noexcept { return n_prompts_; }
  std::size_t n_responses() const noexcept { return n_responses_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(rows_.cols()); }

  /// phi(x, y) as a row vector.
  Eigen::Ref<const Eigen::RowVectorXd> feature(PromptIndex x, ResponseIndex y) const;
  /// The n_responses x d block of features for prompt x.
  Eigen::Ref<const RowMatrix> block(PromptIndex x) const;
  const RowMatrix& rows() const noexcept { return rows_; }

 private:
  std::size_t n_prompts_;
  std::size_t n_responses_;
  RowMatrix rows_;
};

/// pi_theta(y|x) proportional to exp(<phi(x, y), theta>), ||theta|| <= B.
class LinearSoftmaxPolicy {
 public:
  LinearSoftmaxPolicy(std::shared_ptr<const FeatureTable> features, Vector theta, double radius_B);

  std::size_t n_prompts() const noexcept { return features_->n_prompts(); }
  std::size_t n_responses() const noexcept { return features_->n_responses(); }
  std::size_t dim() const noexcept { return features_->dim(); }

  const Vector& theta() const noexcept { return theta_; }
  double radius() const noexcept { return radius_; }
  const FeatureTable& features() const noexcept { return *features_; }
  const std::shared_ptr<const FeatureTable>& shared_features() const noexcept { return features_; }

  /// Same features and radius, new parameter.
  LinearSoftmaxPolicy with_theta(Vector theta) const;

  Vector row(PromptIndex x) const;
  double log_prob(PromptIndex x, ResponseIndex y) const;
  /// Materialized log-probability table.
  TabularPolicy tabulate() const;

 private:
  std::shared_ptr<const FeatureTable> features_;
  Vector theta_;
  double radius_;
};

/// kappa, c and gamma of one policy under a prompt distribution.
struct PolicyDiagnostics {
  double kappa = 1.0;
  double min_confidence_c = 1.0;
  double margin_gamma = 0.0;
};

double log_prob(const TabularPolicy& policy, PromptIndex x, ResponseIndex y);
double log_prob(const LinearSoftmaxPolicy& policy, PromptIndex x, ResponseIndex y);

/// Argmax response; ties go to the lowest index.
ResponseIndex modal_response(const TabularPolicy& policy, PromptIndex x);
ResponseIndex modal_response(const LinearSoftmaxPolicy& policy, PromptIndex x);

/// Expected inverse modal probability, sum_x mu(x) / pi(y*(x)|x).
double condition_number(const TabularPolicy& policy, const PromptDistribution& mu);
double condition_number(const LinearSoftmaxPolicy& policy, const PromptDistribution& mu);

/// min_x pi(y*(x)|x).
double min_confidence(const TabularPolicy& policy);
double min_confidence(const LinearSoftmaxPolicy& policy);

/// min_x log(pi(y*|x) / max_{y != y*} pi(y|x)); 0 if any row has a tied maximum.
double margin(const TabularPolicy& policy);
double margin(const LinearSoftmaxPolicy& policy);

/// mu-mass of prompts whose modal probability is at most 1 - delta.
double failure_probability(const TabularPolicy& policy, const PromptDistribution& mu, double delta);
double failure_probability(const LinearSoftmaxPolicy& policy, const PromptDistribution& mu, double delta);

PolicyDiagnostics diagnose(const TabularPolicy& policy, const PromptDistribution& mu);

/// Inverse-CDF draw from pi(.|x).
ResponseIndex sample_response(const TabularPolicy& policy, PromptIndex x, RandomStream& rng);
ResponseIndex sample_response(const LinearSoftmaxPolicy& policy, PromptIndex x, RandomStream& rng);

/// Cached per-prompt CDFs; draws match sample_response exactly.
class ResponseSampler {
 public:
  explicit ResponseSampler(const TabularPolicy& policy);
  ResponseIndex sample(PromptIndex x, RandomStream& rng) const;

 private:
  std::size_t n_responses_;
  std::vector<double> cdf_;
};

}  // namespace srlab
