#include "srlab/errors.hpp"
#include "srlab/harness/experiments.hpp"
#include "srlab/spectral.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

using namespace srlab;

TEST(Spectrum, SortsAndClamps) {
  const Spectrum s({0.5, -1e-12, 2.0});
  EXPECT_EQ(s.eigenvalues(), (std::vector<double>{2.0, 0.5, 0.0}));
  EXPECT_EQ(s.rank(), 2u);
  EXPECT_THROW(Spectrum({1.0, -1e-6}), ConstructionError);
}

TEST(Spectrum, ReadsOnePerLine) {
  std::istringstream in("# eigenvalues\n1.0\n\n0.25\n");
  EXPECT_EQ(read_spectrum(in).eigenvalues(), (std::vector<double>{1.0, 0.25}));
  std::istringstream bad("1.0\nabc\n");
  EXPECT_THROW(read_spectrum(bad), ConstructionError);
}

TEST(EffectiveDimension, Examples) {
  const Spectrum iso(std::vector<double>(7, 1.0));
  EXPECT_NEAR(effective_dimension(iso, 1e-12), 7.0, 1e-9);
  EXPECT_NEAR(effective_dimension(Spectrum({1.0, 0.5}), 0.5), 7.0 / 6.0, 1e-15);
  EXPECT_LT(effective_dimension(iso, 1e15), 1e-14);
  EXPECT_THROW(effective_dimension(iso, 0.0), PreconditionError);
}

TEST(EffectiveDimension, BasicBoundsOnRandomSpectra) {
  RandomStream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(12);
    for (double& x : v) x = rng.uniform() < 0.2 ? 0.0 : std::exp(3.0 * rng.normal());
    const Spectrum s(v);
    const double lambda = std::exp(2.0 * rng.normal());
    const double deff = effective_dimension(s, lambda);
    std::size_t above = 0;
    double tail = 0.0;
    for (double x : s.eigenvalues()) {
      if (x >= lambda) ++above; else tail += x;
    }
    EXPECT_GE(deff, 0.0);
    EXPECT_LE(deff, static_cast<double>(s.rank()) + 1e-12);
    EXPECT_LE(deff, std::min(above + tail / lambda, s.trace() / lambda) + 1e-12);
    if (s.rank() > 0) EXPECT_GT(deff, effective_dimension(s, lambda * 1.01));
  }
}

TEST(RegimeBound, Examples) {
  EXPECT_NEAR(regime_bound(SpikedRegime{3, 1.0, 0.01}, 0.01), 4.0, 1e-15);
  EXPECT_NEAR(regime_bound(ExponentialRegime{1.0, 1.0}, std::exp(-5.0)), 6.0, 1e-12);
  EXPECT_NEAR(regime_bound(PolynomialRegime{1.0, 2.0}, 0.01), 20.0, 1e-12);
}

TEST(RegimeBound, DominatesOnSpectraInsideTheRegime) {
  RandomStream rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int kind = trial % 3;
    SpectralRegime regime;
    if (kind == 0) regime = ExponentialRegime{0.1 + 5 * rng.uniform(), 0.05 + 2 * rng.uniform()};
    if (kind == 1) regime = PolynomialRegime{0.1 + 5 * rng.uniform(), 1.05 + 3 * rng.uniform()};
    if (kind == 2) regime = SpikedRegime{1 + rng.uniform_index(5), 0.1 + rng.uniform(), 0.001 + 0.1 * rng.uniform()};
    // Scale the boundary spectrum down entrywise: still inside the regime.
    std::vector<double> v = canonical_spectrum(regime, 80).eigenvalues();
    if (kind != 2) {
      for (double& x : v) x *= rng.uniform();
    }
    const Spectrum s(v);
    ASSERT_TRUE(satisfies(regime, s)) << regime_to_json(regime).dump();
    for (int k = 0; k < 10; ++k) {
      const double lambda = std::exp(-12.0 * rng.uniform() + 1.0);
      EXPECT_LE(effective_dimension(s, lambda), regime_bound(regime, lambda) + 1e-12) << regime_to_json(regime).dump();
    }
  }
}

TEST(RegimeJson, RoundTripAndValidation) {
  for (const SpectralRegime& r : {SpectralRegime{ExponentialRegime{2.0, 0.5}}, SpectralRegime{PolynomialRegime{1.0, 3.0}},
                                  SpectralRegime{SpikedRegime{2, 0.3, 0.05}}}) {
    EXPECT_EQ(regime_to_json(regime_from_json(regime_to_json(r))), regime_to_json(r));
  }
  EXPECT_THROW(regime_from_json({{"kind", "polynomial"}, {"C", 1.0}, {"p", 1.0}}), ConfigError);
  EXPECT_THROW(regime_from_json({{"kind", "cubic"}}), ConfigError);
}

TEST(EmpiricalSpectrum, OneHotFeaturesGiveJointProbabilities) {
  const std::size_t X = 2, Y = 3;
  RowMatrix rows = RowMatrix::Identity(X * Y, X * Y);
  auto features = std::make_shared<const FeatureTable>(X, Y, rows);
  const auto s = empirical_feature_spectrum(*features, TabularPolicy::uniform(X, Y), PromptDistribution::uniform(X));
  for (double v : s.eigenvalues()) EXPECT_NEAR(v, 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(s.trace(), 1.0, 1e-14);
}

TEST(EmpiricalSpectrum, ConstantFeatureIsRankOne) {
  RowMatrix rows(4, 3);
  rows.rowwise() = Eigen::RowVector3d(0.6, 0.0, 0.8);
  auto features = std::make_shared<const FeatureTable>(2, 2, rows);
  RandomStream rng(1);
  const auto s = empirical_feature_spectrum(*features, random_tabular_policy(2, 2, 1.0, rng), PromptDistribution({0.3, 0.7}));
  EXPECT_NEAR(s.eigenvalues()[0], 1.0, 1e-14);
  EXPECT_NEAR(s.eigenvalues()[1], 0.0, 1e-14);
  EXPECT_NEAR(s.eigenvalues()[2], 0.0, 1e-14);
}

TEST(EmpiricalSpectrum, TraceAtMostOne) {
  RandomStream rng(5);
  const auto pi = random_linear_policy(3, 4, 6, 5.0, 2.0, rng);
  const auto s = empirical_feature_spectrum(pi.features(), pi.tabulate(), PromptDistribution::uniform(3));
  EXPECT_LE(s.trace(), 1.0 + 1e-12);
}
