// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "netsmpc/model.hpp"

namespace netsmpc {

/// Stacked prediction x_{t:N+1} = calA x_t + calB u^a_{t:N} + calD w_{t:N}.
struct LiftedDynamics {
  Matrix calA;  // (N+1)d x d
  Matrix calB;  // (N+1)d x Nm
  Matrix calD;  // (N+1)d x Nd
  int horizon = 0;
};

LiftedDynamics build_state_lift(const Matrix& A, const Matrix& B, int horizon);
inline LiftedDynamics build_state_lift(const LinearSystem& sys, int horizon) {
  return build_state_lift(sys.A, sys.B, horizon);
}

/// calQ = blkdiag(Q, ..., Q, Q_f) and calR = blkdiag(R, ..., R).
struct CostBlocks {
  Matrix Q;
  Matrix Q_f;
  Matrix R;
  Matrix calQ;  // (N+1)d square
  Matrix calR;  // Nm square
};

/// Validates symmetry (1e-12), Q and Q_f PSD and R PD, then assembles.
CostBlocks build_cost_blocks(const Matrix& Q, const Matrix& Q_f, const Matrix& R, int horizon);

/// c_t = x^T calA^T calQ calA x + tr(calD^T calQ calD Sigma_W)
double constant_term(const LiftedDynamics& lifted, const CostBlocks& costs, const Vector& x,
                     const Matrix& Sigma_W);

/// Caches the state-independent parts of c_t.
class ConstantTerm {
 public:
  ConstantTerm(const LiftedDynamics& lifted, const CostBlocks& costs, const Matrix& Sigma_W);

  double operator()(const Vector& x) const { return x.dot(state_weight_ * x) + noise_trace_; }
  double noise_trace() const { return noise_trace_; }

 private:
  Matrix state_weight_;  // calA^T calQ calA
  double noise_trace_ = 0.0;
};

}  // namespace netsmpc
