// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "netsmpc/lifting.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

namespace netsmpc {

LiftedDynamics build_state_lift(const Matrix& A, const Matrix& B, int horizon) {
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  if (A.rows() != A.cols()) throw DimensionError("A must be square, got " + shape_of(A));
  if (B.rows() != A.rows()) throw DimensionError("B is " + shape_of(B) + " but A is " + shape_of(A));

  const auto d = A.rows();
  const auto m = B.cols();
  const int N = horizon;

  // powers[k] = A^k, k = 0..N
  std::vector<Matrix> powers(N + 1);
  powers[0] = Matrix::Identity(d, d);
  for (int k = 1; k <= N; ++k) powers[k] = A * powers[k - 1];

  LiftedDynamics lifted;
  lifted.horizon = N;
  lifted.calA.resize((N + 1) * d, d);
  lifted.calB = Matrix::Zero((N + 1) * d, N * m);
  lifted.calD = Matrix::Zero((N + 1) * d, N * d);
  for (int k = 0; k <= N; ++k) {
    lifted.calA.middleRows(k * d, d) = powers[k];
    for (int j = 0; j < k; ++j) {
      lifted.calB.block(k * d, j * m, d, m) = powers[k - 1 - j] * B;
      lifted.calD.block(k * d, j * d, d, d) = powers[k - 1 - j];
    }
  }
  return lifted;
}

namespace {

void require_symmetric(const Matrix& M, const char* name) {
  if (M.rows() != M.cols()) throw DimensionError(std::string(name) + " must be square, got " + shape_of(M));
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ValidationError(std::string(name) + " is not symmetric");
  }
}

double min_eigenvalue(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Matrix block_diagonal_repeat(const Matrix& block, int copies, const Matrix* last) {
  const auto b = block.rows();
  const auto total = copies * b + (last ? last->rows() : 0);
  Matrix out = Matrix::Zero(total, total);
  for (int k = 0; k < copies; ++k) out.block(k * b, k * b, b, b) = block;
  if (last) out.bottomRightCorner(last->rows(), last->cols()) = *last;
  return out;
}

}  // namespace

CostBlocks build_cost_blocks(const Matrix& Q, const Matrix& Q_f, const Matrix& R, int horizon) {
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  require_symmetric(Q, "Q");
  require_symmetric(Q_f, "Q_f");
  require_symmetric(R, "R");
  if (Q.rows() != Q_f.rows()) {
    throw DimensionError("Q is " + shape_of(Q) + " but Q_f is " + shape_of(Q_f));
  }
  // PSD with a relative slack for round-off only; a -1e-6 eigenvalue is a
  // genuine violation.
  const double q_slack = 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff());
  const double qf_slack = 1e-12 * std::max(1.0, Q_f.cwiseAbs().maxCoeff());
  if (min_eigenvalue(Q) < -q_slack) throw ValidationError("Q is not positive semidefinite");
  if (min_eigenvalue(Q_f) < -qf_slack) throw ValidationError("Q_f is not positive semidefinite");
  if (min_eigenvalue(R) < 1e-12) throw ValidationError("R is not positive definite");

  CostBlocks costs;
  costs.Q = Q;
  costs.Q_f = Q_f;
  costs.R = R;
  costs.calQ = block_diagonal_repeat(Q, horizon, &Q_f);
  costs.calR = block_diagonal_repeat(R, horizon, nullptr);
  return costs;
}

double constant_term(const LiftedDynamics& lifted, const CostBlocks& costs, const Vector& x,
                     const Matrix& Sigma_W) {
  return ConstantTerm(lifted, costs, Sigma_W)(x);
}

ConstantTerm::ConstantTerm(const LiftedDynamics& lifted, const CostBlocks& costs,
                           const Matrix& Sigma_W) {
  if (Sigma_W.rows() != lifted.calD.cols() || Sigma_W.cols() != lifted.calD.cols()) {
    throw DimensionError("Sigma_W is " + shape_of(Sigma_W) + ", expected " +
                         std::to_string(lifted.calD.cols()) + " square");
  }
  state_weight_ = lifted.calA.transpose() * costs.calQ * lifted.calA;
  noise_trace_ = (lifted.calD.transpose() * costs.calQ * lifted.calD * Sigma_W).trace();
}

}  // namespace netsmpc
