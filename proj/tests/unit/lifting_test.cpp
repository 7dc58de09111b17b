// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "netsmpc/lifting.hpp"
#include "netsmpc/moments.hpp"
#include "oracles.hpp"

namespace netsmpc {
namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

TEST(StateLift, NilpotentScalar) {
  const auto lift = build_state_lift(scalar(0.0), scalar(1.0), 1);
  EXPECT_TRUE(lift.calA.isApprox((Matrix(2, 1) << 1, 0).finished()));
  EXPECT_TRUE(lift.calB.isApprox((Matrix(2, 1) << 0, 1).finished()));
  EXPECT_TRUE(lift.calD.isApprox((Matrix(2, 1) << 0, 1).finished()));
}

TEST(StateLift, ScalarPowersOfTwo) {
  const auto lift = build_state_lift(scalar(2.0), scalar(1.0), 2);
  Matrix calA(3, 1), calB(3, 2);
  calA << 1, 2, 4;
  calB << 0, 0,
          1, 0,
          2, 1;
  EXPECT_TRUE(lift.calA.isApprox(calA));
  EXPECT_TRUE(lift.calB.isApprox(calB));
  EXPECT_TRUE(lift.calD.isApprox(calB));
}

TEST(StateLift, ReferenceFirstInputColumn) {
  const LinearSystem sys = testing::reference_system();
  const auto lift = build_state_lift(sys, 4);
  ASSERT_EQ(lift.calB.rows(), 15);
  ASSERT_EQ(lift.calB.cols(), 4);
  Vector expected(15);
  expected << Vector::Zero(3), sys.B, sys.A * sys.B, sys.A * sys.A * sys.B, sys.A * sys.A * sys.A * sys.B;
  EXPECT_LT((lift.calB.col(0) - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_TRUE(lift.calA.topRows(3).isApprox(Matrix::Identity(3, 3)));
}

TEST(StateLift, StructureIsStrictlyLowerBlockTriangular) {
  const LinearSystem sys = testing::reference_system();
  const int N = 5;
  const auto lift = build_state_lift(sys, N);
  for (int row = 0; row <= N; ++row) {
    for (int col = 0; col < N; ++col) {
      const Matrix Bblk = lift.calB.block(3 * row, col, 3, 1);
      const Matrix Dblk = lift.calD.block(3 * row, 3 * col, 3, 3);
      if (col >= row) {
        EXPECT_EQ(Bblk.cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(Dblk.cwiseAbs().maxCoeff(), 0.0);
      }
      if (col == row - 1) {
        EXPECT_TRUE(Dblk.isApprox(Matrix::Identity(3, 3)));
      }
    }
  }
}

TEST(StateLift, MatchesStepByStepSimulation) {
  const LinearSystem sys = testing::reference_system();
  const int N = 6;
  const auto lift = build_state_lift(sys, N);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    Vector x(3), u(N), w(3 * N);
    for (auto* v : {&x, &u, &w})
      for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = 5.0 * n(rng);
    const Vector stacked = lift.calA * x + lift.calB * u + lift.calD * w;
    Vector xs = x;
    EXPECT_LT((stacked.head(3) - xs).cwiseAbs().maxCoeff(), 1e-9);
    for (int k = 0; k < N; ++k) {
      xs = sys.A * xs + sys.B * u.segment(k, 1) + w.segment(3 * k, 3);
      EXPECT_LT((stacked.segment(3 * (k + 1), 3) - xs).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(StateLift, RejectsBadHorizon) {
  EXPECT_THROW(build_state_lift(scalar(1.0), scalar(1.0), 0), ValidationError);
}

TEST(CostBlocks, IdentityBlocks) {
  const auto c = build_cost_blocks(scalar(1.0), scalar(1.0), scalar(1.0), 2);
  EXPECT_TRUE(c.calQ.isApprox(Matrix::Identity(3, 3)));
  EXPECT_TRUE(c.calR.isApprox(Matrix::Identity(2, 2)));
}

TEST(CostBlocks, ReferenceWeights) {
  const Matrix Qf = testing::reference_terminal_weight();
  const auto c = build_cost_blocks(Matrix::Identity(3, 3), Qf, scalar(2.0), 4);
  ASSERT_EQ(c.calQ.rows(), 15);
  EXPECT_TRUE(c.calQ.bottomRightCorner(3, 3).isApprox(Qf));
  EXPECT_TRUE(c.calQ.topLeftCorner(12, 12).isApprox(Matrix::Identity(12, 12)));
  EXPECT_EQ(c.calQ.topRightCorner(12, 3).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(c.calR.isApprox(2.0 * Matrix::Identity(4, 4)));
}

TEST(CostBlocks, RejectsInvalidWeights) {
  Matrix Q = Matrix::Identity(2, 2);
  Q(1, 1) = -1e-6;
  EXPECT_THROW(build_cost_blocks(Q, Matrix::Identity(2, 2), scalar(1.0), 2), ValidationError);
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 0.1;
  EXPECT_THROW(build_cost_blocks(asym, Matrix::Identity(2, 2), scalar(1.0), 2), ValidationError);
  EXPECT_THROW(build_cost_blocks(Matrix::Identity(2, 2), Matrix::Identity(2, 2), scalar(0.0), 2),
               ValidationError);
}

TEST(ConstantTerm, Examples) {
  const auto lift = build_state_lift(scalar(0.0), scalar(1.0), 1);
  const auto costs = build_cost_blocks(scalar(1.0), scalar(1.0), scalar(1.0), 1);
  EXPECT_EQ(constant_term(lift, costs, Vector::Zero(1), Matrix::Zero(1, 1)), 0.0);
  const double x = 1.7, s2 = 0.3;
  EXPECT_NEAR(constant_term(lift, costs, Vector::Constant(1, x), scalar(s2)), x * x + s2, 1e-14);
  const ConstantTerm cached(lift, costs, scalar(s2));
  EXPECT_NEAR(cached(Vector::Constant(1, x)), x * x + s2, 1e-14);
}

TEST(ConstantTerm, ReferenceMatchesUncontrolledMonteCarlo) {
  const LinearSystem sys = testing::reference_system();
  const int N = 4;
  const auto lift = build_state_lift(sys, N);
  const auto costs = build_cost_blocks(Matrix::Identity(3, 3), testing::reference_terminal_weight(), scalar(2.0), N);
  const NoiseModel noise{2.0 * Matrix::Identity(3, 3)};
  Vector x0(3);
  x0 << 10, 10, -10;
  const double c = constant_term(lift, costs, x0, stacked_noise_covariance(noise, N));
  EXPECT_GT(c, 0.0);
  EXPECT_TRUE(std::isfinite(c));

  // Uncontrolled rollouts with the same stage weights.
  NoiseSampler sampler(noise);
  Engine eng = make_engine(21, 0);
  const int samples = 100000;
  double sum = 0.0;
  for (int s = 0; s < samples; ++s) {
    Vector x = x0;
    double cost = 0.0;
    for (int k = 0; k < N; ++k) {
      cost += x.squaredNorm();
      x = sys.A * x + sampler.draw(eng);
    }
    cost += x.dot(costs.Q_f * x);
    sum += cost;
  }
  EXPECT_NEAR(sum / samples, c, 0.02 * c);
}

}  // namespace
}  // namespace netsmpc
