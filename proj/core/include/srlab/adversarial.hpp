#pragma once

#include "srlab/autoregressive.hpp"
#include "srlab/policy.hpp"
#include "srlab/update.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace srlab {

// ---------------------------------------------------------------------------
// Hard instance

/// Sentinel prompt x0 plus d informative prompts x1..xd; responses y0..yM.
struct HardInstanceParams {
  std::size_t d = 1;
  std::size_t M = 3;
  double Delta = 0.5;

  /// Construction margin; the row formulas below assume this value.
  static constexpr double gamma = 0.5;

  void validate() const;
  std::size_t n_prompts() const noexcept { return d + 1; }
  std::size_t n_responses() const noexcept { return M + 1; }
  /// d log M.
  double log_class_size() const;

  /// P_i(y_{I_i}) = 1 / ((1 - gamma) M).
  double target_mass() const;
  /// Mass of each of the other M - 1 labelled responses.
  double off_target_mass() const;
};

/// ((1 - Delta) + Delta (M (1 - gamma))^p)^{1/p}. Accepts M = 2.
double instance_condition_number(const HardInstanceParams& params, double p);

class HardInstance {
 public:
  /// Secret key drawn uniformly from [M]^d.
  static HardInstance build(const HardInstanceParams& params, RandomStream& rng);
  /// key[i] in [0, M) selects response y_{key[i] + 1} for prompt x_{i+1}.
  static HardInstance with_key(const HardInstanceParams& params, std::vector<std::size_t> key);

  const HardInstanceParams& params() const noexcept { return params_; }
  const std::vector<std::size_t>& key() const noexcept { return key_; }
  const PromptDistribution& mu() const noexcept { return mu_; }
  /// The base model pi^I: P0 on x0 and P_{I_i} on x_i.
  const TabularPolicy& base_policy() const noexcept { return base_; }

 private:
  HardInstance(HardInstanceParams params, std::vector<std::size_t> key);

  HardInstanceParams params_;
  std::vector<std::size_t> key_;
  PromptDistribution mu_;
  TabularPolicy base_;
};

/// The response row P_J (J in 1..M) on y0..yM; J = 0 gives the sentinel row.
Vector hard_instance_row(const HardInstanceParams& params, std::size_t label);

/// {pi^I sharpened by beta : I in [M]^d} as a product class (M^d members).
ProductClass hard_instance_class(const HardInstanceParams& params, double beta);

/// Everything a one-round learner may look at.
struct LearnerContext {
  const HardInstance& instance;
  const ProductClass& hypotheses;
  const Dataset& data;
  double beta;
};

using HardInstanceLearner = std::function<TabularPolicy(const LearnerContext&)>;

/// Finite-class ERM over hard_instance_class.
HardInstanceLearner erm_learner();
/// Ignores the data and returns the base model.
HardInstanceLearner base_policy_learner();

/// Which response the confidence event is checked against.
enum class FailureEvent {
  /// pi_1(y_1*(x)|x) <= 1 - delta, the learned policy's own modal response.
  own_modal,
  /// pi_1(y_0*(x)|x) <= 1 - delta, the base model's modal response (the secret label).
  true_label,
};

std::string_view to_string(FailureEvent event);
/// Accepts "own-modal" and "true-label".
FailureEvent parse_failure_event(std::string_view text);

struct FailureRateOptions {
  std::size_t n = 1;
  std::size_t trials = 1;
  /// 0 selects 1/sqrt(n).
  double beta = 0.0;
  double delta = 0.5;
  FailureEvent event = FailureEvent::own_modal;
  std::size_t threads = 1;
};

struct FailureRate {
  double rate = 0.0;
  /// Sample standard deviation over trials divided by sqrt(trials).
  double standard_error = 0.0;
  double kappa_0 = 0.0;
};

/// Trial k uses rng.split(k): fresh key, n samples from the base model,
/// one learner call, then failure_probability at delta. Results are
/// reduced in trial order, so the thread count never changes the output.
FailureRate measure_failure_rate(const HardInstanceParams& params, const HardInstanceLearner& learner,
                                 const FailureRateOptions& options, const RandomStream& rng);

// ---------------------------------------------------------------------------
// Trap policy

/// Token 0 is the correct first token a, token 1 the trap z.
inline constexpr TokenIndex kTokenA = 0;
inline constexpr TokenIndex kTokenZ = 1;

struct TrapParams {
  double p_star = 0.4;
  double epsilon = 0.1;
  std::size_t H = 2;
  std::size_t V = 3;

  /// min(p*/2, 1 - 2 p*).
  static double max_epsilon(double p_star);
  void validate() const;
  /// Probability of the designated continuation after z: (p* - 2 eps) / (p* + eps).
  double continuation_mass() const;
};

struct TrapPolicy {
  TrapParams params;
  AutoregressivePolicy policy;
  /// y* = (a, a, ..., a).
  Sequence optimal;
};

TrapPolicy build_trap_policy(const TrapParams& params);

struct TrapReport {
  TrapParams params;
  double optimal_prob = 0.0;
  Sequence greedy;
  Sequence optimal;
  /// Highest probability of any sequence that starts with z.
  double best_trap_prob = 0.0;
  /// y* unique argmax; pi(y*) <= 1/2; greedy != y* and starts with z.
  std::array<bool, 3> assertions{};

  bool passed() const { return assertions[0] && assertions[1] && assertions[2]; }
  nlohmann::json to_json() const;
};

/// Exhaustive check over all V^H sequences (SizeError beyond 1e6).
TrapReport verify_greedy_failure(const TrapPolicy& trap);

}  // namespace srlab
