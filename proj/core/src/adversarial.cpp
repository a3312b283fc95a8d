#include "srlab/adversarial.hpp"

#include "srlab/errors.hpp"
#include "srlab/harness/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace srlab {

// ---------------------------------------------------------------------------
// Hard instance

void HardInstanceParams::validate() const {
  if (d < 1) throw ConstructionError("hard instance needs d >= 1");
  if (M < 3) throw ConstructionError("hard instance needs M >= 3 for a well-defined off-target mass");
  if (!(Delta > 0.0 && Delta < 1.0)) throw ConstructionError("Delta must lie in (0, 1)");
}

double HardInstanceParams::log_class_size() const {
  return static_cast<double>(d) * std::log(static_cast<double>(M));
}

double HardInstanceParams::target_mass() const { return 1.0 / ((1.0 - gamma) * static_cast<double>(M)); }

double HardInstanceParams::off_target_mass() const {
  const double m = static_cast<double>(M);
  return (1.0 / m) * (1.0 - gamma / ((m - 1.0) * (1.0 - gamma)));
}

double instance_condition_number(const HardInstanceParams& params, double p) {
  if (!(p >= 1.0)) throw PreconditionError("order p must be at least 1");
  if (params.M < 2) throw PreconditionError("M must be at least 2");
  if (!(params.Delta >= 0.0 && params.Delta <= 1.0)) throw PreconditionError("Delta must lie in [0, 1]");
  const double modal_inverse = static_cast<double>(params.M) * (1.0 - HardInstanceParams::gamma);
  return std::pow((1.0 - params.Delta) + params.Delta * std::pow(modal_inverse, p), 1.0 / p);
}

Vector hard_instance_row(const HardInstanceParams& params, std::size_t label) {
  params.validate();
  if (label > params.M) throw IndexError("label must lie in [0, M]");
  Vector row = Vector::Zero(static_cast<Eigen::Index>(params.n_responses()));
  if (label == 0) {
    row(0) = 1.0;
    return row;
  }
  row.tail(static_cast<Eigen::Index>(params.M)).setConstant(params.off_target_mass());
  row(static_cast<Eigen::Index>(label)) = params.target_mass();
  return row;
}

HardInstance::HardInstance(HardInstanceParams params, std::vector<std::size_t> key)
    : params_(params),
      key_(std::move(key)),
      mu_([&] {
        std::vector<double> w(params.n_prompts(), params.Delta / static_cast<double>(params.d));
        w[0] = 1.0 - params.Delta;
        return PromptDistribution(std::move(w));
      }()),
      base_([&] {
        RowMatrix probs(static_cast<Eigen::Index>(params_.n_prompts()), static_cast<Eigen::Index>(params_.n_responses()));
        probs.row(0) = hard_instance_row(params_, 0).transpose();
        for (std::size_t i = 0; i < params_.d; ++i) {
          probs.row(static_cast<Eigen::Index>(i + 1)) = hard_instance_row(params_, key_[i] + 1).transpose();
        }
        return TabularPolicy::from_probabilities(probs, Support::allow_zeros);
      }()) {}

HardInstance HardInstance::with_key(const HardInstanceParams& params, std::vector<std::size_t> key) {
  params.validate();
  if (key.size() != params.d) throw ShapeError("secret key must have d entries");
  for (std::size_t k : key) {
    if (k >= params.M) throw IndexError("secret key entries must lie in [0, M)");
  }
  return HardInstance(params, std::move(key));
}

HardInstance HardInstance::build(const HardInstanceParams& params, RandomStream& rng) {
  params.validate();
  std::vector<std::size_t> key(params.d);
  for (auto& k : key) k = static_cast<std::size_t>(rng.uniform_index(params.M));
  return HardInstance(params, std::move(key));
}

ProductClass hard_instance_class(const HardInstanceParams& params, double beta) {
  params.validate();
  if (!(beta > 0.0)) throw PreconditionError("beta must be positive");
  const double s = sharpening_exponent(beta);
  const auto cols = static_cast<Eigen::Index>(params.n_responses());
  auto sharpened = [&](std::size_t label) -> Eigen::RowVectorXd {
    Eigen::RowVectorXd lp = hard_instance_row(params, label).array().log().matrix().transpose() * s;
    lp.array() -= log_sum_exp(lp);
    return lp;
  };
  std::vector<RowMatrix> blocks;
  blocks.reserve(params.n_prompts());
  RowMatrix sentinel(1, cols);
  sentinel.row(0) = sharpened(0);
  blocks.push_back(std::move(sentinel));
  RowMatrix informative(static_cast<Eigen::Index>(params.M), cols);
  for (std::size_t j = 1; j <= params.M; ++j) informative.row(static_cast<Eigen::Index>(j - 1)) = sharpened(j);
  for (std::size_t i = 0; i < params.d; ++i) blocks.push_back(informative);
  return ProductClass(std::move(blocks), Support::allow_zeros);
}

HardInstanceLearner erm_learner() {
  return [](const LearnerContext& ctx) {
    const ProductErmResult pick = erm_product(ctx.hypotheses, ctx.instance.base_policy(), ctx.data, ctx.beta);
    return ctx.hypotheses.materialize(pick.choice);
  };
}

HardInstanceLearner base_policy_learner() {
  return [](const LearnerContext& ctx) { return ctx.instance.base_policy(); };
}

std::string_view to_string(FailureEvent event) {
  return event == FailureEvent::own_modal ? "own-modal" : "true-label";
}

FailureEvent parse_failure_event(std::string_view text) {
  if (text == "own-modal") return FailureEvent::own_modal;
  if (text == "true-label") return FailureEvent::true_label;
  throw std::invalid_argument("unknown failure event '" + std::string(text) + "'");
}

namespace {

// mu-mass of prompts where `learned` puts at most 1 - delta on the base model's modal response.
double true_label_failure(const TabularPolicy& learned, const HardInstance& instance, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw PreconditionError("delta must lie in (0, 1)");
  double mass = 0.0;
  for (PromptIndex x = 0; x < instance.mu().size(); ++x) {
    const ResponseIndex label = modal_response(instance.base_policy(), x);
    if (learned.probability(x, label) <= 1.0 - delta) mass += instance.mu().weight(x);
  }
  return mass;
}

}  // namespace

FailureRate measure_failure_rate(const HardInstanceParams& params, const HardInstanceLearner& learner,
                                 const FailureRateOptions& options, const RandomStream& rng) {
  params.validate();
  if (options.trials < 1) throw PreconditionError("measure_failure_rate needs at least one trial");
  if (options.n < 1) throw PreconditionError("measure_failure_rate needs n >= 1");
  const double beta = options.beta > 0.0 ? options.beta : 1.0 / std::sqrt(static_cast<double>(options.n));
  const ProductClass hypotheses = hard_instance_class(params, beta);

  const std::vector<double> failures = parallel_map(options.trials, options.threads, [&](std::size_t trial) {
    RandomStream stream = rng.split(trial);
    RandomStream key_rng = stream.split(0);
    RandomStream data_rng = stream.split(1);
    const HardInstance instance = HardInstance::build(params, key_rng);
    const Dataset data = generate_dataset(instance.base_policy(), instance.mu(), options.n, data_rng);
    const TabularPolicy learned = learner(LearnerContext{instance, hypotheses, data, beta});
    return options.event == FailureEvent::own_modal ? failure_probability(learned, instance.mu(), options.delta)
                                                    : true_label_failure(learned, instance, options.delta);
  });

  FailureRate out;
  out.kappa_0 = instance_condition_number(params, 1.0);
  const double count = static_cast<double>(failures.size());
  out.rate = std::accumulate(failures.begin(), failures.end(), 0.0) / count;
  if (failures.size() > 1) {
    double ss = 0.0;
    for (double f : failures) ss += (f - out.rate) * (f - out.rate);
    out.standard_error = std::sqrt(ss / (count - 1.0)) / std::sqrt(count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trap policy

double TrapParams::max_epsilon(double p_star) { return std::min(p_star / 2.0, 1.0 - 2.0 * p_star); }

void TrapParams::validate() const {
  if (!(p_star > 0.0 && p_star <= 0.5)) throw ConstructionError("p* must lie in (0, 1/2]");
  const double cap = max_epsilon(p_star);
  // Relative slack so a grid point computed as cap * 1.0 is accepted.
  if (!(epsilon > 0.0 && epsilon <= cap * (1.0 + 1e-12))) {
    throw ConstructionError("epsilon must lie in (0, min(p*/2, 1 - 2p*)]");
  }
  if (V < 3) throw ConstructionError("trap policy needs a vocabulary of at least 3 tokens");
  if (H < 2) throw ConstructionError("trap policy needs a horizon of at least 2");
}

double TrapParams::continuation_mass() const {
  return std::max(0.0, (p_star - 2.0 * epsilon) / (p_star + epsilon));
}

TrapPolicy build_trap_policy(const TrapParams& params) {
  params.validate();
  const auto V = static_cast<Eigen::Index>(params.V);
  const double uniform = 1.0 / static_cast<double>(params.V);
  auto step = [params, V, uniform](PromptIndex, std::span<const TokenIndex> prefix) -> Vector {
    Vector probs = Vector::Constant(V, uniform);
    if (prefix.empty()) {
      const double rest = std::max(0.0, 1.0 - 2.0 * params.p_star - params.epsilon);
      probs.setConstant(rest / static_cast<double>(params.V - 2));
      probs(kTokenZ) = params.p_star + params.epsilon;
      probs(kTokenA) = params.p_star;
    } else if (std::all_of(prefix.begin(), prefix.end(), [](TokenIndex t) { return t == kTokenA; })) {
      probs.setZero();
      probs(kTokenA) = 1.0;
    } else if (prefix.size() == 1 && prefix[0] == kTokenZ) {
      const double q = params.continuation_mass();
      probs.setConstant((1.0 - q) / static_cast<double>(params.V - 1));
      probs(0) = q;
    }
    return probs;
  };
  return TrapPolicy{params, AutoregressivePolicy::build(1, params.V, params.H, step), Sequence(params.H, kTokenA)};
}

nlohmann::json TrapReport::to_json() const {
  return {{"p_star", params.p_star},
          {"epsilon", params.epsilon},
          {"H", params.H},
          {"V", params.V},
          {"optimal_prob", optimal_prob},
          {"greedy_sequence", greedy},
          {"optimal_sequence", optimal},
          {"assertions", assertions}};
}

TrapReport verify_greedy_failure(const TrapPolicy& trap) {
  const AutoregressivePolicy& policy = trap.policy;
  TrapReport report;
  report.params = trap.params;
  report.optimal = trap.optimal;
  report.optimal_prob = std::exp(policy.sequence_log_prob(0, trap.optimal));
  report.greedy = greedy_decode(policy, 0);

  const SequenceArgmax argmax = enumerate_argmax(policy, 0);
  double best_trap = kNegInf;
  const std::size_t total = policy.sequence_count();
  for (std::size_t rank = 0; rank < total; ++rank) {
    const Sequence seq = policy.sequence_at(rank);
    if (seq.front() == kTokenZ) best_trap = std::max(best_trap, policy.sequence_log_prob(0, seq));
  }
  report.best_trap_prob = std::exp(best_trap);

  report.assertions[0] = argmax.unique && argmax.sequence == trap.optimal;
  report.assertions[1] = report.optimal_prob <= 0.5;
  report.assertions[2] = report.greedy != trap.optimal && report.greedy.front() == kTokenZ;
  return report;
}

}  // namespace srlab
