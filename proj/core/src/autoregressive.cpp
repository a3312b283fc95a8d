#include "srlab/autoregressive.hpp"

#include "srlab/errors.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <queue>

namespace srlab {
namespace {

constexpr std::size_t kMaxTableCells = 50'000'000;

std::size_t saturating_pow(std::size_t base, std::size_t exp) {
  std::size_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    if (base != 0 && out > std::numeric_limits<std::size_t>::max() / base) {
      return std::numeric_limits<std::size_t>::max();
    }
    out *= base;
  }
  return out;
}

}  // namespace

AutoregressivePolicy AutoregressivePolicy::build(std::size_t n_prompts, std::size_t vocab_size, std::size_t horizon,
                                                 const StepFunction& step) {
  if (n_prompts == 0 || vocab_size == 0 || horizon == 0) {
    throw ConstructionError("autoregressive policy needs prompts, a vocabulary and a horizon");
  }
  // Nodes: all prefixes of length 0..H-1.
  std::size_t nodes = 0;
  for (std::size_t len = 0; len < horizon; ++len) {
    const std::size_t level = saturating_pow(vocab_size, len);
    if (level > kMaxTableCells) throw SizeError("autoregressive table too large");
    nodes += level;
  }
  if (nodes * vocab_size > kMaxTableCells) throw SizeError("autoregressive table too large");

  AutoregressivePolicy policy(vocab_size, horizon);
  policy.tables_.reserve(n_prompts);
  Sequence prefix;
  for (std::size_t x = 0; x < n_prompts; ++x) {
    RowMatrix table(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(vocab_size));
    std::size_t node = 0;
    for (std::size_t len = 0; len < horizon; ++len) {
      const std::size_t level = saturating_pow(vocab_size, len);
      prefix.assign(len, 0);
      for (std::size_t r = 0; r < level; ++r, ++node) {
        std::size_t code = r;
        for (std::size_t i = len; i-- > 0;) {
          prefix[i] = code % vocab_size;
          code /= vocab_size;
        }
        const Vector probs = step(x, prefix);
        if (static_cast<std::size_t>(probs.size()) != vocab_size) {
          throw ConstructionError("step distribution has the wrong vocabulary size");
        }
        if (!(probs.array() >= 0.0).all() || !probs.allFinite()) {
          throw ConstructionError("step probabilities must be finite and >= 0");
        }
        if (std::abs(probs.sum() - 1.0) > kNormalizationTolerance) {
          throw ConstructionError("step distribution does not sum to 1");
        }
        table.row(static_cast<Eigen::Index>(node)) = probs.array().log().matrix().transpose();
      }
    }
    policy.tables_.push_back(std::move(table));
  }
  return policy;
}

std::size_t AutoregressivePolicy::sequence_count() const noexcept { return saturating_pow(vocab_, horizon_); }

std::size_t AutoregressivePolicy::node_index(std::span<const TokenIndex> prefix) const {
  if (prefix.size() >= horizon_) throw IndexError("prefix is as long as the horizon");
  std::size_t offset = 0;
  for (std::size_t len = 0; len < prefix.size(); ++len) offset += saturating_pow(vocab_, len);
  std::size_t code = 0;
  for (TokenIndex t : prefix) {
    if (t >= vocab_) throw IndexError("token index out of range");
    code = code * vocab_ + t;
  }
  return offset + code;
}

Vector AutoregressivePolicy::step_log_probs(PromptIndex x, std::span<const TokenIndex> prefix) const {
  if (x >= tables_.size()) throw IndexError("prompt index out of range");
  return tables_[x].row(static_cast<Eigen::Index>(node_index(prefix))).transpose();
}

double AutoregressivePolicy::sequence_log_prob(PromptIndex x, std::span<const TokenIndex> sequence) const {
  if (sequence.size() != horizon_) throw IndexError("sequence length differs from the horizon");
  if (x >= tables_.size()) throw IndexError("prompt index out of range");
  double total = 0.0;
  for (std::size_t h = 0; h < horizon_; ++h) {
    if (sequence[h] >= vocab_) throw IndexError("token index out of range");
    total += tables_[x](static_cast<Eigen::Index>(node_index(sequence.first(h))), static_cast<Eigen::Index>(sequence[h]));
  }
  return total;
}

Sequence AutoregressivePolicy::sample(PromptIndex x, RandomStream& rng) const {
  Sequence seq;
  seq.reserve(horizon_);
  for (std::size_t h = 0; h < horizon_; ++h) {
    const Vector lp = step_log_probs(x, seq);
    const double u = rng.uniform();
    double total = 0.0;
    TokenIndex pick = vocab_;
    TokenIndex last_positive = 0;
    for (TokenIndex t = 0; t < vocab_; ++t) {
      const double p = std::exp(lp(static_cast<Eigen::Index>(t)));
      if (p > 0.0) last_positive = t;
      total += p;
      if (u < total) {
        pick = t;
        break;
      }
    }
    seq.push_back(pick == vocab_ ? last_positive : pick);
  }
  return seq;
}

Sequence AutoregressivePolicy::sequence_at(std::size_t rank) const {
  Sequence seq(horizon_);
  for (std::size_t i = horizon_; i-- > 0;) {
    seq[i] = rank % vocab_;
    rank /= vocab_;
  }
  return seq;
}

Sequence greedy_decode(const AutoregressivePolicy& policy, PromptIndex x) {
  Sequence seq;
  seq.reserve(policy.horizon());
  for (std::size_t h = 0; h < policy.horizon(); ++h) {
    const Vector lp = policy.step_log_probs(x, seq);
    Eigen::Index best = 0;
    for (Eigen::Index t = 1; t < lp.size(); ++t) {
      if (lp(t) > lp(best)) best = t;
    }
    seq.push_back(static_cast<TokenIndex>(best));
  }
  return seq;
}

SequenceArgmax most_likely_sequence(const AutoregressivePolicy& policy, PromptIndex x) {
  // Costs -log pi are additive and non-negative, so the first complete
  // sequence popped is optimal.
  struct Entry {
    double cost;
    Sequence prefix;
    bool operator>(const Entry& other) const {
      if (cost != other.cost) return cost > other.cost;
      return prefix > other.prefix;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
  frontier.push({0.0, {}});
  while (!frontier.empty()) {
    Entry top = frontier.top();
    frontier.pop();
    if (top.prefix.size() == policy.horizon()) return {std::move(top.prefix), -top.cost, true};
    const Vector lp = policy.step_log_probs(x, top.prefix);
    for (Eigen::Index t = 0; t < lp.size(); ++t) {
      if (!std::isfinite(lp(t))) continue;
      Sequence next = top.prefix;
      next.push_back(static_cast<TokenIndex>(t));
      frontier.push({top.cost - lp(t), std::move(next)});
    }
  }
  throw ConstructionError("policy assigns zero probability to every sequence");
}

SequenceArgmax enumerate_argmax(const AutoregressivePolicy& policy, PromptIndex x, std::size_t max_sequences) {
  const std::size_t total = policy.sequence_count();
  if (total > max_sequences) {
    throw SizeError("V^H = " + std::to_string(total) + " exceeds the enumeration limit");
  }
  SequenceArgmax best;
  double runner_up = kNegInf;
  for (std::size_t rank = 0; rank < total; ++rank) {
    const Sequence seq = policy.sequence_at(rank);
    const double lp = policy.sequence_log_prob(x, seq);
    if (lp > best.log_prob) {
      runner_up = best.log_prob;
      best.log_prob = lp;
      best.sequence = seq;
    } else if (lp > runner_up) {
      runner_up = lp;
    }
  }
  best.unique = runner_up < best.log_prob;
  return best;
}

namespace {

template <typename Accumulate>
void for_sampled_prompts(const AutoregressivePolicy& policy, const PromptDistribution& mu, std::size_t samples,
                         RandomStream& rng, Accumulate&& accumulate) {
  if (samples == 0) throw PreconditionError("Monte Carlo estimate needs at least one sample");
  if (mu.size() != policy.n_prompts()) throw ShapeError("prompt distribution does not match the policy");
  std::map<PromptIndex, double> modal_log_prob;
  for (std::size_t i = 0; i < samples; ++i) {
    const PromptIndex x = mu.sample(rng);
    auto it = modal_log_prob.find(x);
    if (it == modal_log_prob.end()) it = modal_log_prob.emplace(x, most_likely_sequence(policy, x).log_prob).first;
    accumulate(it->second);
  }
}

}  // namespace

double mc_condition_number(const AutoregressivePolicy& policy, const PromptDistribution& mu, std::size_t samples,
                           RandomStream& rng) {
  double total = 0.0;
  for_sampled_prompts(policy, mu, samples, rng, [&](double lp) { total += std::exp(-lp); });
  return total / static_cast<double>(samples);
}

double mc_failure_probability(const AutoregressivePolicy& policy, const PromptDistribution& mu, double delta,
                              std::size_t samples, RandomStream& rng) {
  if (!(delta > 0.0 && delta < 1.0)) throw PreconditionError("delta must lie in (0, 1)");
  std::size_t failures = 0;
  for_sampled_prompts(policy, mu, samples, rng, [&](double lp) {
    if (std::exp(lp) <= 1.0 - delta) ++failures;
  });
  return static_cast<double>(failures) / static_cast<double>(samples);
}

}  // namespace srlab
