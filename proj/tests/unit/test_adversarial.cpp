#include "srlab/adversarial.hpp"
#include "srlab/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace srlab;

TEST(HardInstance, RowFormulasAtGammaHalf) {
  const HardInstanceParams p{1, 4, 0.5};
  EXPECT_DOUBLE_EQ(p.target_mass(), 0.5);
  EXPECT_NEAR(p.off_target_mass(), 1.0 / 6.0, 1e-15);
  for (std::size_t M : {3u, 5u, 8u, 12u}) {
    const HardInstanceParams q{2, M, 0.3};
    EXPECT_NEAR(q.target_mass(), 2.0 / M, 1e-15);
    EXPECT_NEAR(q.off_target_mass(), (M - 2.0) / (M * (M - 1.0)), 1e-15);
    for (std::size_t label = 0; label <= M; ++label) EXPECT_NEAR(hard_instance_row(q, label).sum(), 1.0, 1e-14);
  }
}

TEST(HardInstance, PromptDistribution) {
  RandomStream rng(1);
  const auto inst = HardInstance::build({2, 5, 0.2}, rng);
  EXPECT_NEAR(inst.mu().weight(0), 0.8, 1e-15);
  EXPECT_NEAR(inst.mu().weight(1), 0.1, 1e-15);
  EXPECT_NEAR(inst.mu().weight(2), 0.1, 1e-15);
  EXPECT_NEAR(HardInstanceParams({3, 5, 0.2}).log_class_size(), 3.0 * std::log(5.0), 1e-15);
}

TEST(HardInstance, RejectsSmallM) {
  RandomStream rng(1);
  EXPECT_THROW(HardInstance::build({1, 2, 0.2}, rng), ConstructionError);
  EXPECT_THROW(HardInstance::build({0, 4, 0.2}, rng), ConstructionError);
  EXPECT_THROW(HardInstance::build({1, 4, 1.0}, rng), ConstructionError);
}

TEST(HardInstance, KeyIsUniformAndDeterministic) {
  RandomStream a(9), b(9);
  EXPECT_EQ(HardInstance::build({6, 7, 0.5}, a).key(), HardInstance::build({6, 7, 0.5}, b).key());
  RandomStream rng(4);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 4000; ++i) ++counts[HardInstance::build({1, 4, 0.5}, rng).key()[0]];
  for (int c : counts) EXPECT_NEAR(c, 1000, 4 * std::sqrt(4000 * 0.25 * 0.75));
}

TEST(InstanceConditionNumber, Examples) {
  EXPECT_NEAR(instance_condition_number({1, 10, 0.2}, 1.0), 1.8, 1e-12);
  EXPECT_NEAR(instance_condition_number({1, 7, 1e-12}, 3.0), 1.0, 1e-9);
  EXPECT_NEAR(instance_condition_number({1, 2, 0.4}, 1.0), 1.0, 1e-15);
}

TEST(InstanceConditionNumber, MatchesEnumeration) {
  RandomStream rng(2);
  for (std::size_t d : {1u, 3u}) {
    for (std::size_t M : {3u, 6u, 11u}) {
      const HardInstanceParams p{d, M, 0.35};
      const auto inst = HardInstance::build(p, rng);
      EXPECT_NEAR(instance_condition_number(p, 1.0), condition_number(inst.base_policy(), inst.mu()), 1e-12);
    }
  }
}

TEST(HardInstanceClass, SizeAndRealizability) {
  const HardInstanceParams p{3, 4, 0.2};
  const auto cls = hard_instance_class(p, 0.5);
  EXPECT_EQ(cls.size(), 64u);
  RandomStream rng(5);
  const auto inst = HardInstance::build(p, rng);
  EXPECT_TRUE(cls.contains(gibbs_sharpen(inst.base_policy(), 0.5)));
}

TEST(MeasureFailureRate, LargeNIdentifiesKey) {
  FailureRateOptions o;
  o.n = 1000000;
  o.trials = 3;
  const auto r = measure_failure_rate({1, 3, 0.5}, erm_learner(), o, RandomStream(1));
  EXPECT_EQ(r.rate, 0.0);
}

TEST(MeasureFailureRate, BaseLearnerFailsOnInformativeMass) {
  FailureRateOptions o;
  o.n = 50;
  o.trials = 20;
  const auto r = measure_failure_rate({3, 6, 0.3}, base_policy_learner(), o, RandomStream(1));
  EXPECT_NEAR(r.rate, 0.3, 1e-12);
  EXPECT_NEAR(r.standard_error, 0.0, 1e-12);
}

TEST(MeasureFailureRate, ThreadCountDoesNotChangeResult) {
  FailureRateOptions o;
  o.n = 200;
  o.trials = 40;
  o.beta = 5.0;
  const auto one = measure_failure_rate({2, 5, 0.4}, erm_learner(), o, RandomStream(3));
  o.threads = 4;
  const auto four = measure_failure_rate({2, 5, 0.4}, erm_learner(), o, RandomStream(3));
  EXPECT_EQ(one.rate, four.rate);
  EXPECT_EQ(one.standard_error, four.standard_error);
  EXPECT_THROW(measure_failure_rate({2, 5, 0.4}, erm_learner(), {200, 0}, RandomStream(3)), PreconditionError);
}

TEST(TrapPolicy, FirstStepRow) {
  const auto trap = build_trap_policy({0.4, 0.1, 3, 4});
  const Vector p = trap.policy.step_log_probs(0, {}).array().exp();
  EXPECT_NEAR(p(kTokenZ), 0.5, 1e-15);
  EXPECT_NEAR(p(kTokenA), 0.4, 1e-15);
  EXPECT_NEAR(p(2) + p(3), 0.1, 1e-15);
}

TEST(TrapPolicy, ParameterBounds) {
  EXPECT_THROW(build_trap_policy({0.5, 0.01, 2, 3}), ConstructionError);
  EXPECT_THROW(build_trap_policy({0.4, 0.0, 2, 3}), ConstructionError);
  EXPECT_THROW(build_trap_policy({0.4, 0.25, 2, 3}), ConstructionError);
  EXPECT_THROW(build_trap_policy({0.4, 0.1, 1, 3}), ConstructionError);
  EXPECT_THROW(build_trap_policy({0.4, 0.1, 2, 2}), ConstructionError);
}

TEST(TrapPolicy, VerificationExamples) {
  const auto r = verify_greedy_failure(build_trap_policy({0.4, 0.1, 3, 4}));
  EXPECT_TRUE(r.passed());
  EXPECT_NEAR(r.optimal_prob, 0.4, 1e-15);
  EXPECT_EQ(r.greedy.front(), kTokenZ);

  const auto s = verify_greedy_failure(build_trap_policy({0.3, 0.05, 3, 4}));
  EXPECT_TRUE(s.passed());
  EXPECT_LE(s.best_trap_prob, 0.3 - 2 * 0.05 + 1e-15);

  const auto json = r.to_json();
  for (const char* key : {"p_star", "epsilon", "H", "V", "optimal_prob", "greedy_sequence", "optimal_sequence", "assertions"}) {
    EXPECT_TRUE(json.contains(key)) << key;
  }
}

TEST(TrapPolicy, TrapSequencesBoundedWhenContinuationDominates) {
  for (double p : {0.2, 0.3, 0.4}) {
    for (double f : {0.25, 0.5}) {
      for (std::size_t V : {3u, 4u, 5u}) {
        const TrapParams params{p, f * TrapParams::max_epsilon(p), 3, V};
        if (params.continuation_mass() < 1.0 / V) continue;
        const auto r = verify_greedy_failure(build_trap_policy(params));
        EXPECT_LE(r.best_trap_prob, p - 2 * params.epsilon + 1e-15);
      }
    }
  }
}
