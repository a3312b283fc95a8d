#pragma once

#include "srlab/policy.hpp"

#include <functional>
#include <span>
#include <vector>

namespace srlab {

using TokenIndex = std::size_t;
using Sequence = std::vector<TokenIndex>;

/// pi(y|x) = prod_h pi_h(y_h | y_<h, x) over Y = V^H.
///
/// Every (prompt, prefix) node owns one conditional row; rows are stored as
/// log-probabilities in a dense prefix trie, so the table size is bounded by
/// V^H per prompt.
class AutoregressivePolicy {
 public:
  /// Returns the conditional next-token probabilities after `prefix`.
  using StepFunction = std::function<Vector(PromptIndex, std::span<const TokenIndex> prefix)>;

  static AutoregressivePolicy build(std::size_t n_prompts, std::size_t vocab_size, std::size_t horizon,
                                    const StepFunction& step);

  std::size_t n_prompts() const noexcept { return tables_.size(); }
  std::size_t vocab_size() const noexcept { return vocab_; }
  std::size_t horizon() const noexcept { return horizon_; }
  /// |V|^H, saturating at SIZE_MAX.
  std::size_t sequence_count() const noexcept;

  Vector step_log_probs(PromptIndex x, std::span<const TokenIndex> prefix) const;
  double sequence_log_prob(PromptIndex x, std::span<const TokenIndex> sequence) const;
  Sequence sample(PromptIndex x, RandomStream& rng) const;

  /// The sequence with the given rank in lexicographic order.
  Sequence sequence_at(std::size_t rank) const;

 private:
  AutoregressivePolicy(std::size_t vocab, std::size_t horizon) : vocab_(vocab), horizon_(horizon) {}
  std::size_t node_index(std::span<const TokenIndex> prefix) const;

  std::size_t vocab_;
  std::size_t horizon_;
  std::vector<RowMatrix> tables_;
};

/// Step-wise argmax given the greedy prefix; ties go to the lowest token.
Sequence greedy_decode(const AutoregressivePolicy& policy, PromptIndex x);

struct SequenceArgmax {
  Sequence sequence;
  double log_prob = kNegInf;
  /// Every other sequence is strictly less likely.
  bool unique = true;
};

/// Exact argmax over V^H by best-first search on -log pi; lexicographically
/// smallest among exact ties. `unique` is not computed (always true).
SequenceArgmax most_likely_sequence(const AutoregressivePolicy& policy, PromptIndex x);

/// Exhaustive argmax over all V^H sequences, including a uniqueness check.
/// Throws SizeError beyond `max_sequences`.
SequenceArgmax enumerate_argmax(const AutoregressivePolicy& policy, PromptIndex x,
                                std::size_t max_sequences = 1'000'000);

/// Monte Carlo estimate of kappa: prompts drawn from mu, modal sequence
/// probability found exactly per drawn prompt.
double mc_condition_number(const AutoregressivePolicy& policy, const PromptDistribution& mu, std::size_t samples,
                           RandomStream& rng);
double mc_failure_probability(const AutoregressivePolicy& policy, const PromptDistribution& mu, double delta,
                              std::size_t samples, RandomStream& rng);

}  // namespace srlab
