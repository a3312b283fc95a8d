#include "srlab/policy.hpp"

#include "srlab/errors.hpp"
#include "srlab/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace srlab {
namespace {

void check_prompt(std::size_t x, std::size_t n) {
  if (x >= n) {
    throw IndexError("prompt index " + std::to_string(x) + " out of range [0, " + std::to_string(n) + ")");
  }
}

void check_response(std::size_t y, std::size_t n) {
  if (y >= n) {
    throw IndexError("response index " + std::to_string(y) + " out of range [0, " + std::to_string(n) + ")");
  }
}

// Inverse CDF over cumulative masses; rounding slack lands on the last
// positive-mass entry.
std::size_t invert_cdf(const double* cdf, std::size_t n, double u) {
  const double* hit = std::upper_bound(cdf, cdf + n, u);
  if (hit != cdf + n) return static_cast<std::size_t>(hit - cdf);
  std::size_t last = n - 1;
  while (last > 0 && cdf[last] == cdf[last - 1]) --last;
  return last;
}

struct RowSummary {
  std::size_t modal = 0;
  double modal_log_prob = kNegInf;
  double runner_up_log_prob = kNegInf;
};

RowSummary summarize_row(const RowMatrix& lp, std::size_t x) {
  RowSummary s;
  const auto row = lp.row(static_cast<Eigen::Index>(x));
  for (Eigen::Index y = 0; y < row.size(); ++y) {
    const double v = row(y);
    if (v > s.modal_log_prob) {
      s.runner_up_log_prob = s.modal_log_prob;
      s.modal_log_prob = v;
      s.modal = static_cast<std::size_t>(y);
    } else if (v > s.runner_up_log_prob) {
      s.runner_up_log_prob = v;
    }
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// PromptDistribution

static std::vector<std::string> default_prompt_ids(std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back("x" + std::to_string(i));
  return ids;
}

PromptDistribution::PromptDistribution(std::vector<double> weights)
    : PromptDistribution(default_prompt_ids(weights.size()), std::vector<double>(weights)) {}

PromptDistribution::PromptDistribution(std::vector<std::string> ids, std::vector<double> weights)
    : ids_(std::move(ids)), weights_(std::move(weights)) {
  if (weights_.empty()) throw ConstructionError("prompt distribution needs at least one prompt");
  if (ids_.size() != weights_.size()) throw ConstructionError("prompt ids and weights differ in length");
  if (std::set<std::string>(ids_.begin(), ids_.end()).size() != ids_.size()) {
    throw ConstructionError("prompt identifiers must be unique");
  }
  double total = 0.0;
  cdf_.reserve(weights_.size());
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConstructionError("prompt weights must be finite and >= 0");
    total += w;
    cdf_.push_back(total);
  }
  if (std::abs(total - 1.0) > kNormalizationTolerance) {
    std::ostringstream os;
    os << "prompt weights sum to " << total << ", not 1";
    throw ConstructionError(os.str());
  }
}

PromptDistribution PromptDistribution::uniform(std::size_t n_prompts) {
  if (n_prompts == 0) throw ConstructionError("prompt distribution needs at least one prompt");
  return PromptDistribution(std::vector<double>(n_prompts, 1.0 / static_cast<double>(n_prompts)));
}

double PromptDistribution::weight(PromptIndex x) const {
  check_prompt(x, weights_.size());
  return weights_[x];
}

PromptIndex PromptDistribution::sample(RandomStream& rng) const {
  return invert_cdf(cdf_.data(), cdf_.size(), rng.uniform());
}

// ---------------------------------------------------------------------------
// TabularPolicy

TabularPolicy TabularPolicy::from_probabilities(const RowMatrix& probs, Support support) {
  if (probs.rows() == 0 || probs.cols() == 0) throw ConstructionError("policy table must be non-empty");
  if (!(probs.array() >= 0.0).all() || !probs.allFinite()) {
    throw ConstructionError("probabilities must be finite and >= 0");
  }
  if (support == Support::strict && !(probs.array() > 0.0).all()) {
    throw ConstructionError("zero probability in a strictly positive policy");
  }
  for (Eigen::Index x = 0; x < probs.rows(); ++x) {
    const double total = probs.row(x).sum();
    if (std::abs(total - 1.0) > kNormalizationTolerance) {
      throw ConstructionError("row " + std::to_string(x) + " does not sum to 1");
    }
  }
  return TabularPolicy(probs.array().log().matrix(), support);
}

TabularPolicy TabularPolicy::from_log_probabilities(RowMatrix log_probs, Support support) {
  if (log_probs.rows() == 0 || log_probs.cols() == 0) throw ConstructionError("policy table must be non-empty");
  for (Eigen::Index x = 0; x < log_probs.rows(); ++x) {
    for (Eigen::Index y = 0; y < log_probs.cols(); ++y) {
      const double v = log_probs(x, y);
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw ConstructionError("log-probabilities must be finite or -inf");
      }
      if (support == Support::strict && !std::isfinite(v)) {
        throw ConstructionError("zero probability in a strictly positive policy");
      }
    }
    const double total = exact_exp(log_probs.row(x).array()).sum();
    if (std::abs(total - 1.0) > kNormalizationTolerance) {
      throw ConstructionError("row " + std::to_string(x) + " sums to " + format_real(total) + ", not 1");
    }
  }
  return TabularPolicy(std::move(log_probs), support);
}

TabularPolicy TabularPolicy::from_logits(const RowMatrix& logits) {
  if (logits.rows() == 0 || logits.cols() == 0) throw ConstructionError("policy table must be non-empty");
  if (!logits.allFinite()) throw ConstructionError("logits must be finite");
  RowMatrix lp = logits;
  for (Eigen::Index x = 0; x < lp.rows(); ++x) {
    lp.row(x).array() -= log_sum_exp(lp.row(x));
  }
  return from_log_probabilities(std::move(lp), Support::strict);
}

TabularPolicy TabularPolicy::uniform(std::size_t n_prompts, std::size_t n_responses) {
  if (n_prompts == 0 || n_responses == 0) throw ConstructionError("policy table must be non-empty");
  return TabularPolicy(RowMatrix::Constant(static_cast<Eigen::Index>(n_prompts), static_cast<Eigen::Index>(n_responses),
                                           -std::log(static_cast<double>(n_responses))),
                       Support::strict);
}

Vector TabularPolicy::row(PromptIndex x) const {
  check_prompt(x, n_prompts());
  return log_probs_.row(static_cast<Eigen::Index>(x)).transpose();
}

double TabularPolicy::log_prob(PromptIndex x, ResponseIndex y) const {
  check_prompt(x, n_prompts());
  check_response(y, n_responses());
  return log_probs_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
}

// ---------------------------------------------------------------------------
// FeatureTable / LinearSoftmaxPolicy

FeatureTable::FeatureTable(std::size_t n_prompts, std::size_t n_responses, RowMatrix rows)
    : n_prompts_(n_prompts), n_responses_(n_responses), rows_(std::move(rows)) {
  if (n_prompts_ == 0 || n_responses_ == 0 || rows_.cols() == 0) {
    throw ConstructionError("feature table must be non-empty");
  }
  if (static_cast<std::size_t>(rows_.rows()) != n_prompts_ * n_responses_) {
    throw ConstructionError("feature table needs n_prompts * n_responses rows");
  }
  if (!rows_.allFinite()) throw ConstructionError("features must be finite");
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    if (rows_.row(i).norm() > 1.0 + kNormalizationTolerance) {
      throw ConstructionError("feature norm exceeds 1 at row " + std::to_string(i));
    }
  }
}

Eigen::Ref<const Eigen::RowVectorXd> FeatureTable::feature(PromptIndex x, ResponseIndex y) const {
  check_prompt(x, n_prompts_);
  check_response(y, n_responses_);
  return rows_.row(static_cast<Eigen::Index>(x * n_responses_ + y));
}

Eigen::Ref<const RowMatrix> FeatureTable::block(PromptIndex x) const {
  check_prompt(x, n_prompts_);
  return rows_.middleRows(static_cast<Eigen::Index>(x * n_responses_), static_cast<Eigen::Index>(n_responses_));
}

LinearSoftmaxPolicy::LinearSoftmaxPolicy(std::shared_ptr<const FeatureTable> features, Vector theta, double radius_B)
    : features_(std::move(features)), theta_(std::move(theta)), radius_(radius_B) {
  if (!features_) throw ConstructionError("linear softmax policy needs a feature table");
  if (static_cast<std::size_t>(theta_.size()) != features_->dim()) {
    throw ConstructionError("theta dimension does not match the feature dimension");
  }
  if (!(radius_ >= 1.0) || !std::isfinite(radius_)) throw ConstructionError("radius B must be finite and >= 1");
  if (!theta_.allFinite()) throw ConstructionError("theta must be finite");
  // Projection onto the sphere is only accurate to ~1e-10.
  if (theta_.norm() > radius_ * (1.0 + 1e-9)) throw ConstructionError("||theta|| exceeds radius B");
}

LinearSoftmaxPolicy LinearSoftmaxPolicy::with_theta(Vector theta) const {
  return LinearSoftmaxPolicy(features_, std::move(theta), radius_);
}

Vector LinearSoftmaxPolicy::row(PromptIndex x) const {
  Vector scores = features_->block(x) * theta_;
  scores.array() -= log_sum_exp(scores);
  return scores;
}

double LinearSoftmaxPolicy::log_prob(PromptIndex x, ResponseIndex y) const {
  check_response(y, n_responses());
  return row(x)(static_cast<Eigen::Index>(y));
}

TabularPolicy LinearSoftmaxPolicy::tabulate() const {
  RowMatrix lp(static_cast<Eigen::Index>(n_prompts()), static_cast<Eigen::Index>(n_responses()));
  for (std::size_t x = 0; x < n_prompts(); ++x) lp.row(static_cast<Eigen::Index>(x)) = row(x).transpose();
  return TabularPolicy::from_log_probabilities(std::move(lp), Support::allow_zeros);
}

// ---------------------------------------------------------------------------
// Diagnostics

double log_prob(const TabularPolicy& policy, PromptIndex x, ResponseIndex y) { return policy.log_prob(x, y); }
double log_prob(const LinearSoftmaxPolicy& policy, PromptIndex x, ResponseIndex y) { return policy.log_prob(x, y); }

ResponseIndex modal_response(const TabularPolicy& policy, PromptIndex x) {
  check_prompt(x, policy.n_prompts());
  return summarize_row(policy.log_probs(), x).modal;
}

ResponseIndex modal_response(const LinearSoftmaxPolicy& policy, PromptIndex x) {
  return modal_response(policy.tabulate(), x);
}

double condition_number(const TabularPolicy& policy, const PromptDistribution& mu) {
  if (mu.size() != policy.n_prompts()) throw ShapeError("prompt distribution does not match the policy");
  double kappa = 0.0;
  for (std::size_t x = 0; x < policy.n_prompts(); ++x) {
    kappa += mu.weights()[x] * std::exp(-summarize_row(policy.log_probs(), x).modal_log_prob);
  }
  return kappa;
}

double condition_number(const LinearSoftmaxPolicy& policy, const PromptDistribution& mu) {
  return condition_number(policy.tabulate(), mu);
}

double min_confidence(const TabularPolicy& policy) {
  double lowest = 0.0;
  for (std::size_t x = 0; x < policy.n_prompts(); ++x) {
    lowest = std::min(lowest, summarize_row(policy.log_probs(), x).modal_log_prob);
  }
  return std::exp(lowest);
}

double min_confidence(const LinearSoftmaxPolicy& policy) { return min_confidence(policy.tabulate()); }

double margin(const TabularPolicy& policy) {
  if (policy.n_responses() < 2) throw UndefinedMarginError("margin is undefined for a single response");
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t x = 0; x < policy.n_prompts(); ++x) {
    const RowSummary s = summarize_row(policy.log_probs(), x);
    if (s.runner_up_log_prob == s.modal_log_prob) return 0.0;
    gap = std::min(gap, s.modal_log_prob - s.runner_up_log_prob);
  }
  return gap;
}

double margin(const LinearSoftmaxPolicy& policy) { return margin(policy.tabulate()); }

double failure_probability(const TabularPolicy& policy, const PromptDistribution& mu, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw PreconditionError("delta must lie in (0, 1)");
  if (mu.size() != policy.n_prompts()) throw ShapeError("prompt distribution does not match the policy");
  const double threshold = 1.0 - delta;
  double mass = 0.0;
  for (std::size_t x = 0; x < policy.n_prompts(); ++x) {
    if (std::exp(summarize_row(policy.log_probs(), x).modal_log_prob) <= threshold) mass += mu.weights()[x];
  }
  return mass;
}

double failure_probability(const LinearSoftmaxPolicy& policy, const PromptDistribution& mu, double delta) {
  return failure_probability(policy.tabulate(), mu, delta);
}

PolicyDiagnostics diagnose(const TabularPolicy& policy, const PromptDistribution& mu) {
  return {condition_number(policy, mu), min_confidence(policy), margin(policy)};
}

ResponseIndex sample_response(const TabularPolicy& policy, PromptIndex x, RandomStream& rng) {
  check_prompt(x, policy.n_prompts());
  const std::size_t m = policy.n_responses();
  std::vector<double> cdf(m);
  double total = 0.0;
  for (std::size_t y = 0; y < m; ++y) {
    total += std::exp(policy.log_probs()(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)));
    cdf[y] = total;
  }
  return invert_cdf(cdf.data(), m, rng.uniform());
}

ResponseIndex sample_response(const LinearSoftmaxPolicy& policy, PromptIndex x, RandomStream& rng) {
  return sample_response(policy.tabulate(), x, rng);
}

ResponseSampler::ResponseSampler(const TabularPolicy& policy)
    : n_responses_(policy.n_responses()), cdf_(policy.n_prompts() * policy.n_responses()) {
  for (std::size_t x = 0; x < policy.n_prompts(); ++x) {
    double total = 0.0;
    for (std::size_t y = 0; y < n_responses_; ++y) {
      total += std::exp(policy.log_probs()(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)));
      cdf_[x * n_responses_ + y] = total;
    }
  }
}

ResponseIndex ResponseSampler::sample(PromptIndex x, RandomStream& rng) const {
  check_prompt(x, cdf_.size() / n_responses_);
  return invert_cdf(cdf_.data() + x * n_responses_, n_responses_, rng.uniform());
}

}  // namespace srlab
