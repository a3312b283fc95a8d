#include "srlab/errors.hpp"
#include "srlab/harness/experiments.hpp"
#include "srlab/update.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>

using namespace srlab;
using srlab::testing::matrix;
using srlab::testing::power_normalize;
using srlab::testing::tabular;

namespace {

TabularPolicy random_policy(std::size_t X, std::size_t Y, std::uint64_t seed, double scale = 1.0) {
  RandomStream rng(seed);
  return random_tabular_policy(X, Y, scale, rng);
}

}  // namespace

TEST(GenerateDataset, DeterministicPolicyGivesTies) {
  const auto pi = tabular({{0.0, 1.0}, {1.0, 0.0}}, Support::allow_zeros);
  RandomStream rng(1);
  for (const auto& t : generate_dataset(pi, PromptDistribution::uniform(2), 200, rng)) {
    EXPECT_EQ(t.y, t.y_prime);
    EXPECT_EQ(t.delta_r, 0.0);
  }
}

TEST(GenerateDataset, RejectsEmpty) {
  RandomStream rng(1);
  EXPECT_THROW(generate_dataset(TabularPolicy::uniform(1, 2), PromptDistribution::uniform(1), 0, rng),
               PreconditionError);
}

TEST(GenerateDataset, DistinctPairFractionNearHalf) {
  RandomStream rng(9);
  const std::size_t n = 100000;
  const auto data = generate_dataset(TabularPolicy::uniform(1, 2), PromptDistribution::uniform(1), n, rng);
  std::size_t distinct = 0;
  for (const auto& t : data) distinct += t.y != t.y_prime;
  EXPECT_LT(std::abs(static_cast<double>(distinct) / n - 0.5), 4 * std::sqrt(0.25 / n));
}

TEST(GenerateDataset, RewardDifferencesMatchPolicy) {
  const auto pi = random_policy(3, 5, 4);
  RandomStream rng(2);
  for (const auto& t : generate_dataset(pi, PromptDistribution::uniform(3), 500, rng)) {
    EXPECT_NEAR(t.delta_r, std::log(pi.probability(t.x, t.y)) - std::log(pi.probability(t.x, t.y_prime)), 1e-12);
  }
}

TEST(DpoLoss, GibbsTargetFitsExactly) {
  const auto ref = random_policy(4, 6, 5);
  RandomStream rng(6);
  const auto data = generate_dataset(ref, PromptDistribution::uniform(4), 300, rng);
  EXPECT_LT(dpo_loss(gibbs_sharpen(ref, 0.7), ref, data, 0.7), 1e-18);
}

TEST(DpoLoss, ReferenceAgainstItselfIsMeanSquaredReward) {
  const auto ref = random_policy(2, 4, 7);
  RandomStream rng(8);
  const auto data = generate_dataset(ref, PromptDistribution::uniform(2), 200, rng);
  double expected = 0.0;
  for (const auto& t : data) expected += t.delta_r * t.delta_r;
  expected /= static_cast<double>(data.size());
  EXPECT_NEAR(dpo_loss(ref, ref, data, 0.5), expected, 1e-12);
}

TEST(DpoLoss, TiedPairsGiveZero) {
  const Dataset data{{0, 1, 1, 0.0}, {1, 0, 0, 0.0}};
  EXPECT_EQ(dpo_loss(random_policy(2, 3, 1), random_policy(2, 3, 2), data, 1.0), 0.0);
}

TEST(DpoLoss, MismatchedSpacesIsShapeError) {
  const Dataset data{{0, 0, 1, 0.1}};
  EXPECT_THROW(dpo_loss(TabularPolicy::uniform(1, 2), TabularPolicy::uniform(1, 3), data, 1.0), ShapeError);
}

TEST(GibbsSharpen, Examples) {
  const auto u = gibbs_sharpen(TabularPolicy::uniform(2, 5), 0.3);
  EXPECT_NEAR((u.probabilities().array() - 0.2).abs().maxCoeff(), 0.0, 1e-15);
  const auto s = gibbs_sharpen(tabular({{0.6, 0.4}}), 1.0);
  EXPECT_NEAR(s.probability(0, 0), 0.36 / 0.52, 1e-15);
  EXPECT_NEAR(s.probability(0, 1), 0.16 / 0.52, 1e-15);
  const auto flat = gibbs_sharpen(tabular({{0.6, 0.4}}), 1e12);
  EXPECT_NEAR(flat.probability(0, 0), 0.6, 1e-9);
}

TEST(GibbsSharpen, MatchesPlainPowerNormalize) {
  const auto pi = random_policy(3, 7, 12);
  const double beta = 0.4;
  const auto s = gibbs_sharpen(pi, beta);
  for (std::size_t x = 0; x < 3; ++x) {
    std::vector<double> row(7);
    for (std::size_t y = 0; y < 7; ++y) row[y] = pi.probability(x, y);
    const auto expected = power_normalize(row, 1.0 + 1.0 / beta);
    for (std::size_t y = 0; y < 7; ++y) EXPECT_NEAR(s.probability(x, y), expected[y], 1e-14);
  }
}

TEST(GibbsSharpen, MonotoneAndArgmaxPreserving) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pi = random_policy(5, 9, seed, 2.0);
    const auto s = gibbs_sharpen(pi, 0.5);
    const PromptDistribution mu = PromptDistribution::uniform(5);
    EXPECT_LE(condition_number(s, mu), condition_number(pi, mu) + 1e-12);
    for (std::size_t x = 0; x < 5; ++x) {
      EXPECT_EQ(modal_response(s, x), modal_response(pi, x));
      EXPECT_GE(s.probability(x, modal_response(s, x)), pi.probability(x, modal_response(pi, x)) - 1e-15);
    }
  }
}

TEST(GibbsSharpen, LinearLeavingBallIsOutOfClass) {
  auto features = std::make_shared<const FeatureTable>(1, 2, matrix({{1, 0}, {0, 1}}));
  const LinearSoftmaxPolicy pi(features, (Vector(2) << 1.0, 0.0).finished(), 1.5);
  EXPECT_THROW(gibbs_sharpen(pi, 1.0), OutOfClassError);
  const LinearSoftmaxPolicy wide(features, (Vector(2) << 1.0, 0.0).finished(), 3.0);
  EXPECT_NEAR(gibbs_sharpen(wide, 1.0).theta()(0), 2.0, 1e-15);
}

TEST(ErmFinite, SelectsGibbsTarget) {
  const auto ref = random_policy(3, 4, 21);
  RandomStream rng(1);
  const auto data = generate_dataset(ref, PromptDistribution::uniform(3), 100, rng);
  const std::vector<TabularPolicy> cls{ref, random_policy(3, 4, 22), gibbs_sharpen(ref, 0.5), gibbs_sharpen(ref, 2.0)};
  const auto pick = erm_finite(cls, ref, data, 0.5);
  EXPECT_EQ(pick.index, 2u);
  EXPECT_LT(pick.loss, 1e-18);
}

TEST(ErmFinite, SingletonTiesAndEmpty) {
  const auto ref = random_policy(1, 3, 1);
  const Dataset data{{0, 0, 1, 0.3}};
  EXPECT_EQ(erm_finite(std::vector<TabularPolicy>{ref}, ref, data, 1.0).index, 0u);
  EXPECT_EQ(erm_finite(std::vector<TabularPolicy>{ref, ref}, ref, data, 1.0).index, 0u);
  EXPECT_THROW(erm_finite(std::vector<TabularPolicy>{}, ref, data, 1.0), PreconditionError);
}

TEST(ProductClass, MixedRadixIndexing) {
  const auto base = random_policy(3, 4, 2);
  const std::vector<double> exps{1.0, 2.0, 3.0};
  const auto cls = ProductClass::sharpening_orbit(base, exps);
  EXPECT_EQ(cls.size(), 27u);
  for (std::size_t i = 0; i < cls.size(); ++i) EXPECT_EQ(cls.flat_index(cls.choice_of(i)), i);
  EXPECT_EQ(cls.choice_of(5), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(cls.contains(base));
  EXPECT_FALSE(cls.contains(random_policy(3, 4, 3)));
}

TEST(ProductClass, ErmMatchesExhaustiveSearch) {
  // Two-candidate orbit with ties and a random one, on small classes.
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto ref = random_policy(3, 4, 100 + seed, 1.5);
    RandomStream rng(seed);
    std::vector<RowMatrix> blocks;
    for (std::size_t x = 0; x < 3; ++x) {
      RowMatrix block(3, 4);
      for (Eigen::Index k = 0; k < 3; ++k) {
        Eigen::RowVectorXd logits(4);
        for (Eigen::Index j = 0; j < 4; ++j) logits(j) = rng.normal();
        logits.array() -= log_sum_exp(logits);
        block.row(k) = logits;
      }
      if (seed % 5 == 0) block.row(2) = block.row(0);  // exact duplicate to exercise tie-breaks
      blocks.push_back(block);
    }
    const ProductClass cls(blocks, Support::strict);
    const double beta = 0.5 + rng.uniform();
    const auto data = generate_dataset(ref, PromptDistribution({0.5, 0.3, 0.2}), 40, rng);
    const auto fast = erm_product(cls, ref, data, beta);
    const auto members = cls.enumerate();
    const auto slow = erm_finite(members, ref, data, beta);
    EXPECT_EQ(cls.flat_index(fast.choice), slow.index) << "seed " << seed;
    EXPECT_NEAR(fast.loss, slow.loss, 1e-12 * (1.0 + slow.loss));
  }
}

TEST(ProductClass, EnumerationLimit) {
  const auto base = random_policy(6, 2, 1);
  const std::vector<double> exps(10, 1.0);
  const auto cls = ProductClass::sharpening_orbit(base, exps);
  EXPECT_THROW(cls.enumerate(), SizeError);
}

TEST(ErmLinear, RealizableMatchesClosedForm) {
  RandomStream rng(31);
  const auto pi = random_linear_policy(4, 8, 5, 10.0, 1.0, rng);
  const double beta = 0.5;
  const auto data = generate_dataset(pi, PromptDistribution::uniform(4), 400, rng);
  const auto fit = erm_linear(pi.features(), pi.theta(), data, beta, 10.0);
  EXPECT_FALSE(fit.constraint_active);
  EXPECT_LT((fit.theta - 3.0 * pi.theta()).norm(), 1e-8);
}

TEST(ErmLinear, ZeroDesignKeepsReference) {
  auto features = std::make_shared<const FeatureTable>(1, 2, matrix({{0.3, 0.4}, {0.3, 0.4}}));
  const Vector theta = (Vector(2) << 0.5, -0.5).finished();
  const Dataset data{{0, 0, 1, 0.0}, {0, 1, 1, 0.0}};
  const auto fit = erm_linear(*features, theta, data, 1.0, 5.0);
  EXPECT_EQ(fit.theta, theta);
}

TEST(ErmLinear, BindingRadiusLandsOnSphere) {
  RandomStream rng(41);
  const auto pi = random_linear_policy(3, 6, 4, 2.0, 1.5, rng);
  const auto data = generate_dataset(pi, PromptDistribution::uniform(3), 300, rng);
  const auto fit = erm_linear(pi.features(), pi.theta(), data, 0.25, 2.0);
  EXPECT_TRUE(fit.constraint_active);
  EXPECT_GT(fit.multiplier, 0.0);
  EXPECT_NEAR(fit.theta.norm(), 2.0, 1e-10);
  EXPECT_LE(fit.theta.norm(), 2.0);
}

TEST(RunIterations, ZeroRoundsRecordsInitialOnly) {
  const auto pi = random_policy(2, 3, 1);
  const auto run = run_iterations(pi, PromptDistribution::uniform(2), UpdateConfig::with_default_beta(10, 0, UpdateMode::exact_gibbs),
                                  std::monostate{}, RandomStream(0));
  ASSERT_EQ(run.record.rounds.size(), 1u);
  EXPECT_EQ(run.record.rounds[0].kappa, condition_number(pi, PromptDistribution::uniform(2)));
  EXPECT_TRUE(std::isnan(run.record.rounds[0].dpo_train_loss));
}

TEST(RunIterations, UniformIsFixedPoint) {
  UpdateConfig cfg = UpdateConfig::with_default_beta(10, 8, UpdateMode::exact_gibbs);
  const auto run = run_iterations(TabularPolicy::uniform(3, 6), PromptDistribution::uniform(3), cfg, std::monostate{}, RandomStream(0));
  for (const auto& r : run.record.rounds) EXPECT_NEAR(r.kappa, 6.0, 1e-12);
}

TEST(RunIterations, ExactGibbsKappaNonincreasing) {
  UpdateConfig cfg = UpdateConfig::with_default_beta(10, 15, UpdateMode::exact_gibbs);
  cfg.beta = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pi = random_policy(4, 7, seed);
    const auto mu = PromptDistribution::uniform(4);
    const auto run = run_iterations(pi, mu, cfg, std::monostate{}, RandomStream(0));
    TabularPolicy current = pi;
    for (std::size_t t = 1; t < run.record.rounds.size(); ++t) {
      EXPECT_LE(run.record.rounds[t].kappa, run.record.rounds[t - 1].kappa + 1e-12);
      current = gibbs_sharpen(current, cfg.beta);
      EXPECT_NEAR(run.record.rounds[t].kappa, condition_number(current, mu), 1e-12);
    }
  }
}

TEST(RunIterations, ErmFiniteIsRealizableAndDeterministic) {
  const auto pi = random_policy(3, 5, 77, 0.5);
  const auto mu = PromptDistribution::uniform(3);
  UpdateConfig cfg = UpdateConfig::with_default_beta(500, 4, UpdateMode::erm_finite);
  cfg.beta = 1.0;
  const TabularHypotheses cls = ProductClass::sharpening_orbit(pi, orbit_exponents(cfg.beta, 6));
  const auto a = run_iterations(pi, mu, cfg, cls, RandomStream(5));
  const auto b = run_iterations(pi, mu, cfg, cls, RandomStream(5));
  EXPECT_TRUE(a.record.realizable);
  EXPECT_EQ(a.record.to_csv().to_string(), b.record.to_csv().to_string());
  TabularPolicy target = pi;
  for (std::size_t t = 0; t < cfg.T; ++t) target = gibbs_sharpen(target, cfg.beta);
  EXPECT_NEAR((a.final_policy.probabilities() - target.probabilities()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(RunIterations, ErmFiniteFlagsMissingTarget) {
  const auto pi = random_policy(2, 4, 3);
  UpdateConfig cfg = UpdateConfig::with_default_beta(100, 1, UpdateMode::erm_finite);
  const TabularHypotheses cls = std::vector<TabularPolicy>{pi};
  EXPECT_FALSE(run_iterations(pi, PromptDistribution::uniform(2), cfg, cls, RandomStream(1)).record.realizable);
}

TEST(RunIterations, LinearExactGibbsSurfacesOutOfClass) {
  RandomStream rng(3);
  const auto pi = random_linear_policy(2, 3, 2, 2.0, 1.5, rng);
  UpdateConfig cfg = UpdateConfig::with_default_beta(10, 1, UpdateMode::exact_gibbs);
  cfg.beta = 1.0;
  EXPECT_THROW(run_iterations(pi, PromptDistribution::uniform(2), cfg, RandomStream(0)), OutOfClassError);
}

TEST(TrajectoryRecord, CsvRoundTrip) {
  const auto pi = random_policy(2, 3, 1);
  UpdateConfig cfg = UpdateConfig::with_default_beta(10, 3, UpdateMode::exact_gibbs);
  const auto run = run_iterations(pi, PromptDistribution::uniform(2), cfg, std::monostate{}, RandomStream(0));
  const std::string text = run.record.to_csv().to_string();
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,kappa,min_confidence,margin,failure_prob,dpo_train_loss");
  EXPECT_EQ(TrajectoryRecord::from_csv(CsvTable::parse(text)).to_csv().to_string(), text);
}

TEST(UpdateConfig, JsonDefaultsAndValidation) {
  const auto cfg = UpdateConfig::from_json({{"n", 400}, {"T", 3}, {"mode", "erm-finite"}});
  EXPECT_DOUBLE_EQ(cfg.beta, 0.05);
  EXPECT_EQ(cfg.delta, 0.5);
  EXPECT_EQ(cfg.mode, UpdateMode::erm_finite);
  EXPECT_THROW(UpdateConfig::from_json({{"n", 0}}), ConfigError);
  EXPECT_THROW(UpdateConfig::from_json({{"n", 4}, {"beta", -1.0}}), ConfigError);
  EXPECT_THROW(UpdateConfig::from_json({{"n", 4}, {"mode", "sgd"}}), ConfigError);
}
