#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rigid/prox.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace rigid;
namespace tu = rigid::testing;

namespace {

// Composition through the prox of the extended-value envelope in ||z2||.
ProxResult envelope_oracle(double z1p, const Vector& z2p, double lambda, double gamma) {
  const double x = std::abs(z1p), w = z2p.norm();
  const double lg = lambda * gamma;
  double wstar;
  if (w >= (1 + lg * gamma) * x / lg) {
    wstar = w / (1 + lg * gamma);
  } else if (w >= lg * x / (lambda + 1)) {
    wstar = ((lambda + 1) * w - lg * x) / (1 + lambda + lg * gamma);
  } else {
    wstar = 0.0;
  }
  ProxResult r;
  r.z2 = w > 0 ? Vector(z2p * (wstar / w)) : Vector::Zero(z2p.size());
  r.z1 = prox_scalar(z1p, gamma * wstar, lambda);
  return r;
}

double grid_min_scalar(double zp, double c, double lambda) {
  double best = std::numeric_limits<double>::infinity(), arg = 0;
  for (int k = -200000; k <= 200000; ++k) {
    const double z = k * 1e-4;
    const double v = 0.5 * lambda * (std::abs(z) + c) * (std::abs(z) + c) + 0.5 * (z - zp) * (z - zp);
    if (v < best) {
      best = v;
      arg = z;
    }
  }
  return arg;
}

ProxInput random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 10.0);
  std::uniform_int_distribution<int> dim(0, 8);
  std::normal_distribution<double> normal(0.0, 3.0);
  ProxInput in;
  in.lambda = u01(rng);
  in.gamma = u01(rng);
  in.z1 = normal(rng);
  in.z2 = tu::random_vector(rng, dim(rng), 3.0);
  return in;
}

}  // namespace

TEST(ProxScalar, PureQuadraticShrink) { EXPECT_DOUBLE_EQ(prox_scalar(5.0, 0.0, 1.0), 2.5); }

TEST(ProxScalar, ThresholdedToZero) {
  EXPECT_EQ(prox_scalar(1.0, 2.0, 1.0), 0.0);
  EXPECT_NEAR(grid_min_scalar(1.0, 2.0, 1.0), 0.0, 1e-4);
}

TEST(ProxScalar, NegativeInput) {
  EXPECT_DOUBLE_EQ(prox_scalar(-4.0, 1.0, 1.0), -1.5);
  EXPECT_NEAR(grid_min_scalar(-4.0, 1.0, 1.0), -1.5, 1e-4);
}

TEST(ProxScalar, MatchesGridOnRandomInputs) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-8.0, 8.0), pos(0.0, 3.0);
  for (int k = 0; k < 20; ++k) {
    const double zp = u(rng), c = pos(rng), lambda = pos(rng);
    EXPECT_NEAR(prox_scalar(zp, c, lambda), grid_min_scalar(zp, c, lambda), 2e-4);
  }
}

TEST(ProxJoint, ZeroLambdaIsIdentity) {
  const auto out = prox_joint({1.5, Eigen::Vector2d(-2, 3), 0.0, 4.0});
  EXPECT_EQ(out.z1, 1.5);
  EXPECT_EQ(out.z2, Vector(Eigen::Vector2d(-2, 3)));
}

TEST(ProxJoint, ZeroGammaShrinksFirstCoordinateOnly) {
  const auto out = prox_joint({3.0, Eigen::Vector2d(1, 2), 2.0, 0.0});
  EXPECT_DOUBLE_EQ(out.z1, 1.0);
  EXPECT_EQ(out.z2, Vector(Eigen::Vector2d(1, 2)));
}

TEST(ProxJoint, EmptySecondBlock) {
  const auto out = prox_joint({3.0, Vector(0), 2.0, 5.0});
  EXPECT_DOUBLE_EQ(out.z1, 1.0);
  EXPECT_EQ(out.z2.size(), 0);
}

TEST(ProxJoint, FirstBranch) {
  const auto out = prox_joint({0.0, Eigen::Vector2d(3, 4), 1.0, 1.0});
  EXPECT_EQ(out.z1, 0.0);
  EXPECT_NEAR(out.z2(0), 1.5, 1e-15);
  EXPECT_NEAR(out.z2(1), 2.0, 1e-15);
}

TEST(ProxJoint, MiddleBranch) {
  const auto out = prox_joint({2.0, Eigen::Vector2d(2, 0), 1.0, 1.0});
  EXPECT_NEAR(out.z1, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(out.z2(0), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(out.z2(1), 0.0);
}

TEST(ProxJoint, ThirdBranch) {
  const auto out = prox_joint({10.0, Eigen::Vector2d(0.1, 0), 1.0, 1.0});
  EXPECT_DOUBLE_EQ(out.z1, 5.0);
  EXPECT_EQ(out.z2, Vector(Vector::Zero(2)));
}

TEST(ProxJoint, HandExamplesAgreeWithOracle) {
  const std::vector<ProxInput> cases = {{0.0, Eigen::Vector2d(3, 4), 1.0, 1.0},
                                        {2.0, Eigen::Vector2d(2, 0), 1.0, 1.0},
                                        {10.0, Eigen::Vector2d(0.1, 0), 1.0, 1.0}};
  for (const auto& in : cases) {
    const auto got = prox_joint(in);
    const auto ref = tu::prox_qp_oracle(in.z1, in.z2, in.lambda, in.gamma);
    EXPECT_NEAR(got.z1, ref.z1, 1e-12);
    EXPECT_LE((got.z2 - ref.z2).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ProxJoint, DegenerateZeroInputs) {
  auto out = prox_joint({0.0, Vector::Zero(3), 2.0, 1.0});
  EXPECT_EQ(out.z1, 0.0);
  EXPECT_EQ(out.z2, Vector(Vector::Zero(3)));
  out = prox_joint({4.0, Vector::Zero(3), 1.0, 1.0});
  EXPECT_DOUBLE_EQ(out.z1, 2.0);
  EXPECT_EQ(out.z2, Vector(Vector::Zero(3)));
}

TEST(ProxJoint, RejectsNegativeParameters) {
  EXPECT_THROW(prox_joint({1.0, Vector::Zero(1), -1.0, 1.0}), Error);
  EXPECT_THROW(prox_joint({1.0, Vector::Zero(1), 1.0, -1.0}), Error);
}

TEST(ProxJoint, OracleEquivalenceOnRandomInputs) {
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 10000; ++k) {
    const auto in = random_input(rng);
    const auto got = prox_joint(in);
    const auto ref = tu::prox_qp_oracle(in.z1, in.z2, in.lambda, in.gamma);
    ASSERT_NEAR(got.z1, ref.z1, 1e-7) << "case " << k;
    if (in.z2.size() > 0) {
      ASSERT_LE((got.z2 - ref.z2).cwiseAbs().maxCoeff(), 1e-7) << "case " << k;
    }
  }
}

TEST(ProxJoint, EnvelopeCompositionAgrees) {
  std::mt19937_64 rng(77);
  for (int k = 0; k < 2000; ++k) {
    auto in = random_input(rng);
    if (in.z2.size() == 0 || in.lambda == 0 || in.gamma == 0) continue;
    const auto got = prox_joint(in);
    const auto ref = envelope_oracle(in.z1, in.z2, in.lambda, in.gamma);
    EXPECT_NEAR(got.z1, ref.z1, 1e-9);
    EXPECT_LE((got.z2 - ref.z2).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(ProxJoint, NonExpansive) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int k = 0; k < 2000; ++k) {
    const double lambda = u(rng), gamma = u(rng);
    const Index d = k % 6;
    const ProxInput a{tu::random_vector(rng, 1, 3.0)(0), tu::random_vector(rng, d, 3.0), lambda, gamma};
    const ProxInput b{tu::random_vector(rng, 1, 3.0)(0), tu::random_vector(rng, d, 3.0), lambda, gamma};
    const auto pa = prox_joint(a), pb = prox_joint(b);
    const double out = std::hypot(pa.z1 - pb.z1, (pa.z2 - pb.z2).norm());
    const double in = std::hypot(a.z1 - b.z1, (a.z2 - b.z2).norm());
    EXPECT_LE(out, in + 1e-12);
  }
}

TEST(ProxJoint, ContinuousAcrossBranchBoundaries) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int k = 0; k < 500; ++k) {
    const double lambda = u(rng), gamma = u(rng), z1 = u(rng) * (k % 2 ? 1 : -1);
    const Vector dir = tu::random_vector(rng, 3).normalized();
    const double lg = lambda * gamma;
    for (double boundary : {(1 + lg * gamma) * std::abs(z1) / lg, lg * std::abs(z1) / (lambda + 1)}) {
      const auto lo = prox_joint({z1, dir * (boundary - 1e-9), lambda, gamma});
      const auto hi = prox_joint({z1, dir * (boundary + 1e-9), lambda, gamma});
      EXPECT_LE(std::abs(lo.z1 - hi.z1), 1e-6);
      EXPECT_LE((lo.z2 - hi.z2).norm(), 1e-6);
    }
  }
}

TEST(ProxJoint, SecondBlockIsNonnegativeMultiple) {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 2000; ++k) {
    const auto in = random_input(rng);
    if (in.z2.size() == 0 || in.z2.norm() == 0) continue;
    const auto out = prox_joint(in);
    const double c = out.z2.dot(in.z2) / in.z2.squaredNorm();
    EXPECT_GE(c, 0.0);
    EXPECT_LE((out.z2 - c * in.z2).norm(), 1e-10 * (1 + in.z2.norm()));
  }
}

TEST(ProxJoint, ObjectiveBeatsPerturbations) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> noise(0.0, 1e-3);
  for (int k = 0; k < 500; ++k) {
    const auto in = random_input(rng);
    const auto out = prox_joint(in);
    const double base = prox_objective(out.z1, out.z2, in.z1, in.z2, in.lambda, in.gamma);
    for (int j = 0; j < 10; ++j) {
      Vector z2 = out.z2;
      for (Index t = 0; t < z2.size(); ++t) z2(t) += noise(rng);
      const double v = prox_objective(out.z1 + noise(rng), z2, in.z1, in.z2, in.lambda, in.gamma);
      EXPECT_LE(base, v + 1e-12);
    }
  }
}
