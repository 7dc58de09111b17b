// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "netsmpc/types.hpp"

namespace netsmpc {

/// minimize 1/2 z^T P z + q^T z + constant  subject to  A z <= b
struct QuadraticProgram {
  Matrix P;
  Vector q;
  Matrix A;
  Vector b;
  double constant = 0.0;

  Eigen::Index num_vars() const { return q.size(); }
  Eigen::Index num_constraints() const { return b.size(); }
  double objective(const Vector& z) const { return 0.5 * z.dot(P * z) + q.dot(z) + constant; }
  /// max_i (A z - b)_i^+
  double max_violation(const Vector& z) const;
};

struct WarmStart {
  Vector z;
  Vector lambda;
  double rho = 0.0;  // step parameter to resume with; 0 keeps the setting
};

struct SolverSettings {
  int max_iterations = 20000;
  double tolerance = 1e-7;     // primal, dual and complementarity
  double rho = 1.0;            // initial step parameter
  bool adaptive_rho = true;
  double sigma = 1e-6;         // proximal regularization of the linear solve
  double alpha = 1.6;          // over-relaxation
  int check_interval = 10;
  int adapt_interval = 50;
  bool polish = true;
  double infeasibility_tolerance = 1e-6;
  bool record_merit = false;
  std::optional<WarmStart> warm_start;
};

enum class SolveStatus { Optimal, MaxIterations, Infeasible };

std::string_view to_string(SolveStatus status);

struct KktResiduals {
  double stationarity = 0.0;     // ||P z + q + A^T lambda||_inf
  double primal = 0.0;           // ||(A z - b)_+||_inf
  double complementarity = 0.0;  // |lambda^T (A z - b)|
};

KktResiduals check_kkt(const QuadraticProgram& qp, const Vector& z, const Vector& lambda);

struct Solution {
  Vector z;
  Vector lambda;
  double objective = 0.0;
  SolveStatus status = SolveStatus::MaxIterations;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  int iterations = 0;
  bool polished = false;
  double rho = 0.0;  // final step parameter
  /// Fixed-point residual per iteration, when requested.
  std::vector<double> merit;
  /// Iterations at which the step parameter changed.
  std::vector<int> rho_updates;
};

/// Operator-splitting (ADMM) solve: a regularized linear solve with a
/// cached factorization alternates with projection of the slack onto
/// {s <= b}. Converged iterates are polished on the guessed active set and
/// only reported Optimal when the KKT residuals certify it.
Solution solve(const QuadraticProgram& qp, const SolverSettings& settings = {});

/// Plain-text format: one header line "netsmpc-qp <n> <rows> <constant>"
/// followed by P (n lines), q (1 line), A (rows lines), b (1 line).
void write_qp(std::ostream& os, const QuadraticProgram& qp);
QuadraticProgram read_qp(std::istream& is);

}  // namespace netsmpc
