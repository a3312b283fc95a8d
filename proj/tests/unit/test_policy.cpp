#include "srlab/errors.hpp"
#include "srlab/policy.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>

using namespace srlab;
using srlab::testing::matrix;
using srlab::testing::tabular;

namespace {

double brute_kappa(const std::vector<std::vector<double>>& rows, const std::vector<double>& mu) {
  double k = 0.0;
  for (std::size_t x = 0; x < rows.size(); ++x) {
    double top = 0.0;
    for (double p : rows[x]) top = std::max(top, p);
    k += mu[x] / top;
  }
  return k;
}

}  // namespace

TEST(PromptDistribution, RejectsBadWeights) {
  EXPECT_THROW(PromptDistribution({0.5, 0.6}), ConstructionError);
  EXPECT_THROW(PromptDistribution({-0.1, 1.1}), ConstructionError);
  EXPECT_THROW(PromptDistribution({"a", "a"}, {0.5, 0.5}), ConstructionError);
  EXPECT_NO_THROW(PromptDistribution({"a", "b"}, {0.25, 0.75}));
}

TEST(PromptDistribution, SamplesByInverseCdf) {
  const PromptDistribution mu({0.0, 1.0, 0.0});
  RandomStream rng(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(mu.sample(rng), 1u);
}

TEST(TabularPolicy, StrictSupportRejectsZeros) {
  EXPECT_THROW(tabular({{1.0, 0.0}}), ConstructionError);
  EXPECT_NO_THROW(tabular({{1.0, 0.0}}, Support::allow_zeros));
  EXPECT_THROW(tabular({{0.5, 0.6}}), ConstructionError);
}

TEST(LogProb, UniformRowIsLogQuarter) {
  const auto pi = TabularPolicy::uniform(3, 4);
  EXPECT_NEAR(log_prob(pi, 2, 3), std::log(0.25), 1e-15);
}

TEST(LogProb, DirectLogarithm) {
  EXPECT_NEAR(log_prob(tabular({{0.6, 0.4}}), 0, 0), -0.5108256237659907, 1e-12);
}

TEST(LogProb, ZeroParameterLinearPolicyIsUniform) {
  RandomStream rng(1);
  RowMatrix rows(2 * 5, 3);
  for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = 0.5 * rng.uniform();
  auto features = std::make_shared<const FeatureTable>(2, 5, rows);
  const LinearSoftmaxPolicy pi(features, Vector::Zero(3), 1.0);
  for (std::size_t x = 0; x < 2; ++x) {
    for (std::size_t y = 0; y < 5; ++y) EXPECT_NEAR(log_prob(pi, x, y), -std::log(5.0), 1e-14);
  }
}

TEST(LogProb, OutOfRangeIsIndexError) {
  const auto pi = TabularPolicy::uniform(2, 2);
  EXPECT_THROW(log_prob(pi, 2, 0), IndexError);
  EXPECT_THROW(log_prob(pi, 0, 2), IndexError);
}

TEST(ModalResponse, UniqueArgmaxAndLowestIndexTie) {
  EXPECT_EQ(modal_response(tabular({{0.1, 0.7, 0.2}}), 0), 1u);
  EXPECT_EQ(modal_response(tabular({{0.5, 0.5}}), 0), 0u);
}

TEST(ModalResponse, TrapFirstStepPicksTrapToken) {
  // a = 0.4, z = 0.5, remaining 0.1 over two tokens.
  EXPECT_EQ(modal_response(tabular({{0.4, 0.5, 0.05, 0.05}}), 0), 1u);
}

TEST(ConditionNumber, UniformIsM) {
  EXPECT_DOUBLE_EQ(condition_number(TabularPolicy::uniform(3, 8), PromptDistribution({0.2, 0.3, 0.5})), 8.0);
}

TEST(ConditionNumber, DeterministicIsOne) {
  const auto pi = tabular({{0.0, 1.0}, {1.0, 0.0}}, Support::allow_zeros);
  EXPECT_DOUBLE_EQ(condition_number(pi, PromptDistribution::uniform(2)), 1.0);
}

TEST(ConditionNumber, HardInstanceValue) {
  // Sentinel row deterministic, informative row with modal mass 2/M = 0.2.
  std::vector<double> informative(10, 0.8 / 9.0);
  informative[0] = 0.2;
  std::vector<double> sentinel(10, 0.0);
  sentinel[0] = 1.0;
  const auto pi = tabular({sentinel, informative}, Support::allow_zeros);
  EXPECT_NEAR(condition_number(pi, PromptDistribution({0.8, 0.2})), 1.8, 1e-12);
}

TEST(ConditionNumber, MatchesBruteForce) {
  RandomStream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> rows(4, std::vector<double>(6));
    for (auto& row : rows) {
      double z = 0.0;
      for (double& v : row) z += v = 0.05 + rng.uniform();
      for (double& v : row) v /= z;
    }
    std::vector<double> w{0.1, 0.2, 0.3, 0.4};
    const auto pi = tabular(rows);
    EXPECT_NEAR(condition_number(pi, PromptDistribution(w)), brute_kappa(rows, w), 1e-12);
    EXPECT_GE(condition_number(pi, PromptDistribution(w)), 1.0);
    EXPECT_LE(condition_number(pi, PromptDistribution(w)), 1.0 / min_confidence(pi) + 1e-12);
  }
}

TEST(MinConfidence, Examples) {
  EXPECT_DOUBLE_EQ(min_confidence(tabular({{1.0, 0.0}}, Support::allow_zeros)), 1.0);
  EXPECT_DOUBLE_EQ(min_confidence(TabularPolicy::uniform(2, 5)), 0.2);
  EXPECT_NEAR(min_confidence(tabular({{0.6, 0.4}, {0.9, 0.1}})), 0.6, 1e-15);
}

TEST(Margin, Examples) {
  EXPECT_NEAR(margin(tabular({{0.6, 0.4}})), std::log(1.5), 1e-12);
  EXPECT_EQ(margin(tabular({{0.6, 0.4}, {0.5, 0.5}})), 0.0);
  EXPECT_NEAR(margin(tabular({{0.6, 0.4}, {0.8, 0.2}})), std::log(1.5), 1e-12);
  EXPECT_THROW(margin(tabular({{1.0}})), UndefinedMarginError);
}

TEST(FailureProbability, Examples) {
  EXPECT_EQ(failure_probability(tabular({{1.0, 0.0}}, Support::allow_zeros), PromptDistribution::uniform(1), 0.3), 0.0);
  EXPECT_DOUBLE_EQ(failure_probability(TabularPolicy::uniform(2, 4), PromptDistribution::uniform(2), 0.5), 1.0);
  const auto two = tabular({{0.9, 0.05, 0.05}, {0.4, 0.3, 0.3}});
  EXPECT_NEAR(failure_probability(two, PromptDistribution({0.7, 0.3}), 0.5), 0.3, 1e-15);
  EXPECT_THROW(failure_probability(two, PromptDistribution({0.7, 0.3}), 1.0), PreconditionError);
}

TEST(FailureProbability, MonotoneInDelta) {
  const auto pi = tabular({{0.9, 0.1}, {0.7, 0.3}, {0.55, 0.45}});
  const PromptDistribution mu({0.2, 0.3, 0.5});
  // Larger delta means a lower confidence bar, so fewer failures.
  double previous = 1.0;
  for (double delta = 0.01; delta < 1.0; delta += 0.01) {
    const double f = failure_probability(pi, mu, delta);
    EXPECT_LE(f, previous);
    previous = f;
  }
}

TEST(SampleResponse, DeterministicPolicyAlwaysModal) {
  const auto pi = tabular({{0.0, 0.0, 1.0}}, Support::allow_zeros);
  RandomStream rng(5);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_response(pi, 0, rng), 2u);
}

TEST(SampleResponse, UniformFrequenciesWithinFourSigma) {
  const std::size_t M = 5, draws = 100000;
  const auto pi = TabularPolicy::uniform(1, M);
  RandomStream rng(8);
  std::vector<std::size_t> counts(M, 0);
  for (std::size_t i = 0; i < draws; ++i) ++counts[sample_response(pi, 0, rng)];
  const double p = 1.0 / M;
  const double sigma = std::sqrt(p * (1 - p) / draws);
  for (std::size_t c : counts) EXPECT_LT(std::abs(static_cast<double>(c) / draws - p), 4 * sigma);
}

TEST(SampleResponse, SameSeedSameDraws) {
  const auto pi = tabular({{0.2, 0.3, 0.5}});
  RandomStream a(42), b(42);
  const ResponseSampler sampler(pi);
  RandomStream c(42);
  for (int i = 0; i < 500; ++i) {
    const auto y = sample_response(pi, 0, a);
    EXPECT_EQ(y, sample_response(pi, 0, b));
    EXPECT_EQ(y, sampler.sample(0, c));
  }
}

TEST(Normalization, RowsSumToOne) {
  RandomStream rng(2);
  RowMatrix logits(6, 9);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 3.0 * rng.normal();
  const auto pi = TabularPolicy::from_logits(logits);
  for (std::size_t x = 0; x < 6; ++x) EXPECT_NEAR(pi.probabilities().row(static_cast<Eigen::Index>(x)).sum(), 1.0, 1e-12);
}

TEST(FeatureTable, RejectsLongFeatures) {
  EXPECT_THROW(FeatureTable(1, 1, matrix({{1.0, 1.0}})), ConstructionError);
}

TEST(LinearSoftmaxPolicy, RejectsThetaOutsideBall) {
  auto features = std::make_shared<const FeatureTable>(1, 2, matrix({{1.0, 0.0}, {0.0, 1.0}}));
  EXPECT_THROW(LinearSoftmaxPolicy(features, Vector::Constant(2, 2.0), 2.0), ConstructionError);
  EXPECT_NO_THROW(LinearSoftmaxPolicy(features, Vector::Constant(2, 1.0), 2.0));
}
