#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rigid/risk.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace rigid;
namespace tu = rigid::testing;

namespace {

Matrix corr(double rho) {
  Matrix s(2, 2);
  s << 1, rho, rho, 1;
  return s;
}

RiskSpec worked_example() {
  RiskSpec s;
  s.beta0 = Eigen::Vector2d(1, 1);
  s.sigma = 1.0;
  s.cov = corr(0.5);
  s.patterns = {MissingPattern::none(2), MissingPattern(2, {1})};
  s.probs = Eigen::Vector2d(0.5, 0.5);
  return s;
}

}  // namespace

TEST(RiskSpec, Validation) {
  auto s = worked_example();
  EXPECT_NO_THROW(s.validate());
  s.probs = Eigen::Vector2d(0.5, 0.6);
  EXPECT_THROW(s.validate(), Error);
  s = worked_example();
  s.patterns[1] = MissingPattern::none(2);
  EXPECT_THROW(s.validate(), Error);
  s = worked_example();
  s.cov = corr(1.0);
  EXPECT_THROW(s.validate(), Error);
  s = worked_example();
  s.probs = Eigen::Vector2d(1.0, 0.0);
  EXPECT_THROW(s.validate(), Error);
}

TEST(SigmaBarEmbedded, Examples) {
  EXPECT_EQ(sigma_bar_embedded(corr(0.3), MissingPattern::none(2)), Matrix(Matrix::Zero(2, 2)));
  Matrix s(2, 2);
  s << 2, 1, 1, 2;
  const Matrix e = sigma_bar_embedded(s, MissingPattern(2, {1}));
  EXPECT_EQ(e(0, 0), 0.0);
  EXPECT_EQ(e(0, 1), 0.0);
  EXPECT_NEAR(e(1, 1), 1.5, 1e-15);
  EXPECT_EQ(sigma_bar_embedded(s, MissingPattern::all(2)), s);
  EXPECT_THROW(sigma_bar_embedded(s, MissingPattern::none(3)), Error);
}

TEST(SigmaBarEmbedded, RemainderIsPsdForRandomSpecs) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto spec = tu::random_risk_spec(rng, 2 + t % 3, 1 + t % 3);
    for (const auto& pat : spec.patterns) {
      const Matrix e = sigma_bar_embedded(spec.cov, pat);
      EXPECT_GE(detail::min_eigenvalue(spec.cov - e), -1e-8);
      EXPECT_GE(detail::min_eigenvalue(e), -1e-12);
    }
  }
}

TEST(RobustRisk, SingleEmptyPattern) {
  RiskSpec s;
  s.beta0 = Eigen::Vector2d(1, -1);
  s.sigma = 0.7;
  s.cov = corr(0.2);
  s.patterns = {MissingPattern::none(2)};
  s.probs = Vector::Ones(1);
  const Vector beta = Eigen::Vector2d(0.3, 0.4);
  const Vector d = beta - s.beta0;
  EXPECT_NEAR(robust_risk(s, beta, 2.0), 0.49 + d.dot(s.cov * d), 1e-14);
}

TEST(RobustRisk, ZeroBetaTelescopes) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const auto s = tu::random_risk_spec(rng, 3, 3);
    EXPECT_NEAR(robust_risk(s, Vector::Zero(3), 5.0), s.sigma * s.sigma + s.beta0.dot(s.cov * s.beta0), 1e-12);
  }
}

TEST(RobustRisk, GammaZeroReduction) {
  const auto s = worked_example();
  const Vector beta = Eigen::Vector2d(0.8, 0.4);
  double expected = 1.0;
  for (std::size_t j = 0; j < 2; ++j) {
    const Matrix e = sigma_bar_embedded(s.cov, s.patterns[j]);
    const Vector d = beta - s.beta0;
    expected += s.probs(static_cast<Index>(j)) * (d.dot((s.cov - e) * d) + s.beta0.dot(e * s.beta0));
  }
  EXPECT_NEAR(robust_risk(s, beta, 0.0), expected, 1e-14);
}

TEST(RobustRisk, MonteCarloWorkedExample) {
  const auto s = worked_example();
  const Vector beta = Eigen::Vector2d(0.8, 0.4);
  const auto mc = tu::monte_carlo_risk(s, beta, 1.0, 1000000, 42);
  EXPECT_LE(std::abs(mc.mean() - robust_risk(s, beta, 1.0)), 3.0 * mc.std_error());
}

TEST(RobustRisk, MonteCarloRandomSpecs) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 3; ++t) {
    const auto s = tu::random_risk_spec(rng, 3, 3);
    const Vector beta = tu::random_vector(rng, 3);
    const double gamma = 0.5 * (t + 1);
    const auto mc = tu::monte_carlo_risk(s, beta, gamma, 300000, 100 + t);
    EXPECT_LE(std::abs(mc.mean() - robust_risk(s, beta, gamma)), 3.0 * mc.std_error()) << "spec " << t;
  }
}

TEST(RobustRisk, ConvexInBetaAndMonotoneInGamma) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 30; ++t) {
    const auto s = tu::random_risk_spec(rng, 3, 2);
    const double gamma = 3.0 * u(rng);
    const Vector a = tu::random_vector(rng, 3, 2.0), b = tu::random_vector(rng, 3, 2.0),
                 c = tu::random_vector(rng, 3, 2.0);
    Eigen::Vector3d w(u(rng), u(rng), u(rng));
    w /= w.sum();
    const Vector mix = w(0) * a + w(1) * b + w(2) * c;
    EXPECT_LE(robust_risk(s, mix, gamma),
              w(0) * robust_risk(s, a, gamma) + w(1) * robust_risk(s, b, gamma) + w(2) * robust_risk(s, c, gamma) +
                  1e-10);
    EXPECT_LE(robust_risk(s, a, gamma), robust_risk(s, a, gamma + 0.1) + 1e-12);
  }
}

TEST(EmpiricalRisk, Examples) {
  const Vector b0 = Eigen::Vector2d(1, 2);
  EXPECT_DOUBLE_EQ(empirical_risk(b0, b0, Vector::Ones(2), corr(0.3), 0.5), 0.25);
  EXPECT_DOUBLE_EQ(empirical_risk(Eigen::Vector2d(0, 2), b0, Vector::Zero(2), Matrix::Identity(2, 2), 0.5), 1.25);
  EXPECT_THROW(empirical_risk(Vector::Zero(3), b0, Vector::Zero(2), corr(0.3), 1.0), Error);
}

TEST(EmpiricalRisk, MonteCarlo) {
  std::mt19937_64 rng(5);
  const Index p = 3;
  const Matrix cov = tu::random_spd(rng, p);
  const Vector mean = tu::random_vector(rng, p), b0 = tu::random_vector(rng, p), beta = tu::random_vector(rng, p);
  const double sigma = 0.8;
  tu::GaussianSampler sampler(mean, cov);
  std::normal_distribution<double> noise(0.0, sigma);
  tu::RunningStats acc;
  for (int k = 0; k < 1000000; ++k) {
    const Vector x = sampler.draw(rng);
    const double r = x.dot(b0) + noise(rng) - x.dot(beta);
    acc.add(r * r);
  }
  EXPECT_LE(std::abs(acc.mean() - empirical_risk(beta, b0, mean, cov, sigma)), 3.0 * acc.std_error());
}

TEST(Uniqueness, Examples) {
  RiskSpec s;
  s.beta0 = Eigen::Vector2d(1, 1);
  s.sigma = 1.0;
  s.cov = corr(0.5);
  s.patterns = {MissingPattern::none(2)};
  s.probs = Vector::Ones(1);
  auto uc = gamma0_uniqueness_matrix(s);
  EXPECT_LE((uc.matrix - s.cov).norm(), 1e-15);
  EXPECT_NEAR(uc.min_eigenvalue, 0.5, 1e-12);

  s.patterns = {MissingPattern::all(2)};
  uc = gamma0_uniqueness_matrix(s);
  EXPECT_LE(uc.matrix.norm(), 1e-15);
  EXPECT_NEAR(uc.min_eigenvalue, 0.0, 1e-15);

  uc = gamma0_uniqueness_matrix(worked_example());
  Matrix expected = corr(0.5);
  expected(1, 1) -= 0.5 * 0.75;
  EXPECT_LE((uc.matrix - expected).norm(), 1e-14);
  EXPECT_GT(uc.min_eigenvalue, 0.0);
}

TEST(Gamma0Threshold, ScalarFullyMissingIsZero) {
  RiskSpec s;
  s.beta0 = Vector::Constant(1, 2.0);
  s.sigma = 1.0;
  s.cov = Matrix::Constant(1, 1, 1.5);
  s.patterns = {MissingPattern::all(1)};
  s.probs = Vector::Ones(1);
  EXPECT_EQ(gamma0_threshold(s), 0.0);
  for (double g : {0.01, 0.5, 3.0}) EXPECT_LE(std::abs(minimize_robust_risk(s, g).beta(0)), 1e-6) << g;
}

TEST(Gamma0Threshold, CoveringPatternsZeroTheMinimizer) {
  RiskSpec s;
  s.beta0 = Eigen::Vector2d(1, -0.5);
  s.sigma = 1.0;
  s.cov = corr(0.5);
  s.patterns = {MissingPattern(2, {0}), MissingPattern(2, {1})};
  s.probs = Eigen::Vector2d(0.4, 0.6);
  const double g0 = gamma0_threshold(s);
  ASSERT_TRUE(std::isfinite(g0));
  EXPECT_LE(minimize_robust_risk(s, 1.5 * g0).beta.norm(), 1e-5);
}

TEST(Gamma0Threshold, UncoveredFeatureIsAnError) {
  RiskSpec s;
  s.beta0 = Eigen::Vector2d(1, 1);
  s.sigma = 1.0;
  s.cov = corr(0.5);
  s.patterns = {MissingPattern(2, {0})};
  s.probs = Vector::Ones(1);
  try {
    gamma0_threshold(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PatternsDoNotCoverFeatures);
  }
}

TEST(Gamma0Threshold, MatchesDirectEvaluation) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    RiskSpec s;
    const Index p = 3;
    s.beta0 = tu::random_vector(rng, p);
    s.sigma = 0.5;
    s.cov = tu::random_spd(rng, p);
    s.patterns = {MissingPattern::none(p), MissingPattern(p, {0, 1}), MissingPattern(p, {2}),
                  MissingPattern(p, {1, 2})};
    s.probs = Eigen::Vector4d(0.1, 0.3, 0.4, 0.2);
    double kappa = std::numeric_limits<double>::infinity();
    Vector num = Vector::Zero(p);
    for (std::size_t j = 0; j < s.patterns.size(); ++j) {
      const Matrix e = sigma_bar_embedded(s.cov, s.patterns[j]);
      num += s.probs(static_cast<Index>(j)) * (s.cov - e) * s.beta0;
      if (s.patterns[j].empty()) continue;
      const double lam = detail::min_eigenvalue(pattern_stats(s.cov, Vector::Zero(p), s.patterns[j]).cond_cov);
      const double b0m = detail::subvector(s.beta0, s.patterns[j].missing()).norm();
      kappa = std::min(kappa, s.probs(static_cast<Index>(j)) * lam * (s.sigma + lam * b0m));
    }
    const double direct = (std::sqrt(std::numbers::pi) / kappa * num).norm();
    EXPECT_NEAR(gamma0_threshold(s), direct, 1e-12 * (1 + direct));
  }
}

TEST(SinglePattern, WorkedExample) {
  const auto th = single_pattern_threshold(worked_example());
  const double expected = std::sqrt(std::numbers::pi / 2.0) * 0.5 * std::sqrt(0.75) / (0.5 * std::sqrt(1.75));
  EXPECT_NEAR(th.gamma, expected, 1e-14);
  EXPECT_NEAR(th.gamma, 0.8205, 1e-4);
  EXPECT_NEAR(th.beta(0), 1.5, 1e-14);
  EXPECT_EQ(th.beta(1), 0.0);
}

TEST(SinglePattern, MinimizerMatchesClosedForm) {
  const auto spec = worked_example();
  const auto th = single_pattern_threshold(spec);
  const auto m = minimize_robust_risk(spec, 1.0);
  EXPECT_LE((m.beta - th.beta).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(SinglePattern, BelowThresholdMissingBlockSurvives) {
  const auto spec = worked_example();
  const auto th = single_pattern_threshold(spec);
  EXPECT_GT(std::abs(minimize_robust_risk(spec, 0.4).beta(1)), 1e-3);
  EXPECT_GT(std::abs(minimize_robust_risk(spec, 0.5 * th.gamma).beta(1)), 1e-3);
}

TEST(SinglePattern, LimitsInPi0) {
  auto s = worked_example();
  s.probs = Eigen::Vector2d(1 - 1e-9, 1e-9);
  EXPECT_GT(single_pattern_threshold(s).gamma, 1e6);
  s.probs = Eigen::Vector2d(1e-9, 1 - 1e-9);
  EXPECT_LT(single_pattern_threshold(s).gamma, 1e-6);
}

TEST(SinglePattern, StructureErrors) {
  auto s = worked_example();
  s.patterns = {MissingPattern(2, {0}), MissingPattern(2, {1})};
  try {
    single_pattern_threshold(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidPatternStructure);
  }
  s.patterns = {MissingPattern::none(2)};
  s.probs = Vector::Ones(1);
  EXPECT_THROW(single_pattern_threshold(s), Error);
}

TEST(Minimize, SmallGammaApproachesBeta0) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 5; ++t) {
    auto s = tu::random_risk_spec(rng, 3, 3);
    if (gamma0_uniqueness_matrix(s).min_eigenvalue <= 1e-6) continue;
    EXPECT_LE((minimize_robust_risk(s, 1e-4).beta - s.beta0).norm(), 1e-2);
  }
  EXPECT_LE((minimize_robust_risk(worked_example(), 1e-4).beta - worked_example().beta0).norm(), 1e-2);
}

TEST(Minimize, GammaZeroNeedsUniqueness) {
  RiskSpec s;
  s.beta0 = Eigen::Vector2d(1, 1);
  s.sigma = 1.0;
  s.cov = corr(0.5);
  s.patterns = {MissingPattern::all(2)};
  s.probs = Vector::Ones(1);
  try {
    minimize_robust_risk(s, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotStrictlyConvex);
  }
  EXPECT_LE((minimize_robust_risk(worked_example(), 0.0).beta - worked_example().beta0).norm(), 1e-8);
}

TEST(Minimize, CertifiedAndNotBeatenByPerturbations) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 1e-3);
  for (int t = 0; t < 10; ++t) {
    const auto s = tu::random_risk_spec(rng, 3, 3);
    const double gamma = 0.2 + 0.3 * t;
    const auto m = minimize_robust_risk(s, gamma);
    EXPECT_LE(m.certificate, 1e-6);
    const double base = robust_risk(s, m.beta, gamma);
    for (int k = 0; k < 20; ++k) {
      Vector b = m.beta;
      for (Index j = 0; j < 3; ++j) b(j) += noise(rng);
      EXPECT_LE(base, robust_risk(s, b, gamma) + 1e-12);
    }
  }
}

TEST(Minimize, Deterministic) {
  const auto a = minimize_robust_risk(worked_example(), 0.6);
  const auto b = minimize_robust_risk(worked_example(), 0.6);
  EXPECT_EQ(a.beta, b.beta);
  EXPECT_EQ(a.newton_steps, b.newton_steps);
}
