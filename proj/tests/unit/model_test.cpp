// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <complex>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <gtest/gtest.h>

#include "netsmpc/model.hpp"
#include "oracles.hpp"

namespace netsmpc {
namespace {

Matrix random_matrix(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> n;
  Matrix M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = n(rng);
  return M;
}

TEST(Decomposition, IdentityPasses) {
  LinearSystem sys{Matrix::Identity(3, 3), Matrix::Ones(3, 1), 1.0, 3, 0};
  const auto report = verify_decomposition(sys);
  EXPECT_TRUE(report.lyapunov_stable);
  EXPECT_EQ(report.orthogonality_residual, 0.0);
}

TEST(Decomposition, ReferencePlantIsOrthogonalWithUnitCircleSpectrum) {
  const LinearSystem sys = testing::reference_system();
  const auto report = verify_decomposition(sys);
  EXPECT_TRUE(report.lyapunov_stable) << report.message;
  EXPECT_LT(report.orthogonality_residual, 1e-12);

  Eigen::EigenSolver<Matrix> es(sys.A);
  std::vector<std::complex<double>> ev(es.eigenvalues().data(), es.eigenvalues().data() + 3);
  // Spectrum {-1, +i, -i}: order by imaginary part.
  std::sort(ev.begin(), ev.end(), [](auto a, auto b) { return a.imag() < b.imag(); });
  EXPECT_NEAR(ev[1].real(), -1.0, 1e-12);
  EXPECT_NEAR(ev[1].imag(), 0.0, 1e-12);
  EXPECT_NEAR(ev[0].imag(), -1.0, 1e-12);
  EXPECT_NEAR(ev[2].imag(), 1.0, 1e-12);
  EXPECT_NEAR(ev[0].real(), 0.0, 1e-12);
}

TEST(Decomposition, NonOrthogonalTopBlockFails) {
  Matrix A = Matrix::Zero(2, 2);
  A(0, 0) = 1.01;
  A(1, 1) = 0.5;
  LinearSystem sys{A, Matrix::Ones(2, 1), 1.0, 1, 1};
  EXPECT_FALSE(verify_decomposition(sys).lyapunov_stable);
}

TEST(Decomposition, SchurBlockMustBeStrictlyStable) {
  Matrix A = Matrix::Zero(2, 2);
  A(0, 0) = -1.0;
  A(1, 1) = 1.0 - 1e-12;
  LinearSystem sys{A, Matrix::Ones(2, 1), 1.0, 1, 1};
  EXPECT_FALSE(verify_decomposition(sys).lyapunov_stable);
  sys.A(1, 1) = 0.9;
  EXPECT_TRUE(verify_decomposition(sys).lyapunov_stable);
}

TEST(Decomposition, CouplingBetweenBlocksFails) {
  Matrix A = Matrix::Zero(2, 2);
  A(0, 0) = 1.0;
  A(1, 1) = 0.5;
  A(0, 1) = 0.1;
  LinearSystem sys{A, Matrix::Ones(2, 1), 1.0, 1, 1};
  EXPECT_FALSE(verify_decomposition(sys).lyapunov_stable);
}

TEST(Decomposition, DimensionMismatchNamesShapes) {
  LinearSystem sys{Matrix::Identity(3, 3), Matrix::Ones(2, 1), 1.0, 3, 0};
  try {
    verify_decomposition(sys);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("2x1"), std::string::npos) << e.what();
  }
  LinearSystem bad_split{Matrix::Identity(3, 3), Matrix::Ones(3, 1), 1.0, 2, 2};
  EXPECT_THROW(verify_decomposition(bad_split), DimensionError);
}

TEST(Decomposition, AcceptedOrthogonalBlocksPreserveNorm) {
  const LinearSystem sys = testing::reference_system();
  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) {
    const Vector x = random_matrix(rng, 3, 1);
    EXPECT_NEAR((sys.orthogonal_block() * x).norm(), x.norm(), 1e-9);
  }
}

TEST(Reachability, IdentityPowers) {
  Matrix expected(2, 4);
  expected << Matrix::Identity(2, 2), Matrix::Identity(2, 2);
  EXPECT_TRUE(reachability_matrix(Matrix::Identity(2, 2), Matrix::Identity(2, 2), 2).isApprox(expected));
}

TEST(Reachability, PlanarRotation) {
  Matrix Ao(2, 2);
  Ao << 0, -1, 1, 0;
  Matrix M(2, 1);
  M << 1, 0;
  Matrix expected(2, 2);
  // [A_o M | M]
  expected << 0, 1,
              1, 0;
  const Matrix R = reachability_matrix(Ao, M, 2);
  EXPECT_TRUE(R.isApprox(expected));
  EXPECT_EQ(numerical_rank(R), 2);
}

TEST(Reachability, ZeroStepsRejected) {
  EXPECT_THROW(reachability_matrix(Matrix::Identity(2, 2), Matrix::Identity(2, 2), 0), ValidationError);
}

TEST(Reachability, Indices) {
  EXPECT_EQ(reachability_index(Matrix::Identity(1, 1), Matrix::Ones(1, 1)), 1);
  EXPECT_EQ(reachability_index(Matrix::Identity(2, 2), Matrix::Identity(2, 2)), 1);
  const LinearSystem sys = testing::reference_system();
  EXPECT_EQ(reachability_index(sys.orthogonal_block(), sys.orthogonal_input()), 3);
  EXPECT_EQ(numerical_rank(reachability_matrix(sys.orthogonal_block(), sys.orthogonal_input(), 3)), 3);
  EXPECT_EQ(numerical_rank(reachability_matrix(sys.orthogonal_block(), sys.orthogonal_input(), 2)), 2);
}

TEST(Reachability, UnreachablePairRejected) {
  try {
    reachability_index(Matrix::Identity(2, 2), (Matrix(2, 1) << 1, 0).finished());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("pair not reachable"), std::string::npos);
  }
}

TEST(Reachability, DataSatisfiesPenroseIdentity) {
  const auto reach = compute_reachability(testing::reference_system());
  EXPECT_EQ(reach.kappa, 3);
  EXPECT_EQ(reach.R.rows(), 3);
  EXPECT_EQ(reach.R.cols(), 3);
  EXPECT_LT((reach.R * reach.R_pinv * reach.R - reach.R).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Reachability, IndexIsTightForRandomPairs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    // Random orthogonal A_o from a QR factorization.
    const int d = 2 + trial % 4;
    const int m = 1 + trial % 2;
    Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, d, d));
    const Matrix Ao = qr.householderQ();
    const Matrix Bo = random_matrix(rng, d, m);
    const int kappa = reachability_index(Ao, Bo);
    EXPECT_EQ(numerical_rank(reachability_matrix(Ao, Bo, kappa)), d);
    if (kappa > 1) {
      EXPECT_LT(numerical_rank(reachability_matrix(Ao, Bo, kappa - 1)), d);
    }
  }
}

TEST(PseudoInverse, Examples) {
  EXPECT_TRUE(pseudo_inverse(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3)));
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 2.0;
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 0.5;
  EXPECT_TRUE(pseudo_inverse(D).isApprox(expected));
  const Matrix Z = pseudo_inverse(Matrix::Zero(2, 3));
  EXPECT_EQ(Z.rows(), 3);
  EXPECT_EQ(Z.cols(), 2);
  EXPECT_EQ(Z.cwiseAbs().maxCoeff(), 0.0);
}

TEST(PseudoInverse, PenroseIdentitiesOnRandomMatrices) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int r = 1 + trial % 5;
    const int c = 1 + (trial * 3) % 6;
    Matrix M = random_matrix(rng, r, c);
    if (trial % 3 == 0 && r > 1) M.row(0) = M.row(1);  // rank deficient
    const Matrix X = pseudo_inverse(M);
    EXPECT_LT((M * X * M - M).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((X * M * X - X).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(((M * X).transpose() - M * X).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(((X * M).transpose() - X * M).cwiseAbs().maxCoeff(), 1e-8);
  }
  const Matrix M = random_matrix(rng, 3, 5);
  EXPECT_LT((M * pseudo_inverse(M) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MatrixPower, MatchesRepeatedProducts) {
  const Matrix A = testing::reference_system().A;
  Matrix P = Matrix::Identity(3, 3);
  for (int k = 0; k < 12; ++k) {
    EXPECT_LT((matrix_power(A, k) - P).cwiseAbs().maxCoeff(), 1e-12);
    P = A * P;
  }
}

TEST(NoiseSampler, EmpiricalCovariance) {
  Matrix C(2, 2);
  C << 2.0, 0.5, 0.5, 1.0;
  NoiseSampler sampler(NoiseModel{C});
  Engine eng = make_engine(9, 0);
  Matrix acc = Matrix::Zero(2, 2);
  Vector mean = Vector::Zero(2);
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const Vector w = sampler.draw(eng);
    acc += w * w.transpose();
    mean += w;
  }
  EXPECT_LT((acc / n - C).cwiseAbs().maxCoeff(), 0.03);
  EXPECT_LT((mean / n).cwiseAbs().maxCoeff(), 0.01);
}

TEST(NoiseSampler, ZeroCovarianceDrawsZero) {
  NoiseSampler sampler(NoiseModel{Matrix::Zero(3, 3)});
  Engine eng = make_engine(1, 0);
  EXPECT_EQ(sampler.draw(eng).cwiseAbs().maxCoeff(), 0.0);
}

TEST(NoiseSampler, RejectsIndefiniteCovariance) {
  Matrix C(2, 2);
  C << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(NoiseSampler(NoiseModel{C}), ValidationError);
}

}  // namespace
}  // namespace netsmpc
