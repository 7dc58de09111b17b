// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "netsmpc/types.hpp"

namespace netsmpc {

/// Linear plant x+ = A x + B u + w with bounded inputs, supplied already in
/// the block form diag(A_o, A_s) where A_o is orthogonal (d_o x d_o) and
/// A_s is Schur stable (d_s x d_s).
struct LinearSystem {
  Matrix A;
  Matrix B;
  double u_max = 1.0;
  int d_o = 0;
  int d_s = 0;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }

  Matrix orthogonal_block() const { return A.topLeftCorner(d_o, d_o); }
  Matrix orthogonal_input() const { return B.topRows(d_o); }
  Matrix schur_block() const { return A.bottomRightCorner(d_s, d_s); }
};

/// Zero-mean Gaussian noise, drawn independently at every step.
struct NoiseModel {
  Matrix covariance;

  int dim() const { return static_cast<int>(covariance.rows()); }
};

/// Draws w ~ N(0, covariance). The square root is computed once.
class NoiseSampler {
 public:
  explicit NoiseSampler(const NoiseModel& noise);

  Vector draw(Engine& engine) const;
  void draw_into(Engine& engine, Eigen::Ref<Vector> out) const;
  int dim() const { return static_cast<int>(root_.rows()); }

 private:
  Matrix root_;
};

struct DecompositionReport {
  double orthogonality_residual = 0.0;  // ||A_o^T A_o - I||_inf
  double coupling_residual = 0.0;       // max |off-diagonal block entry|
  double schur_spectral_radius = 0.0;   // 0 when d_s == 0
  bool lyapunov_stable = false;
  std::string message;
};

struct Tolerances {
  double orthogonality = 1e-9;
  double schur_margin = 1e-9;
  double rank = 1e-9;
};

/// Checks the block structure of `sys`. Throws DimensionError on shape
/// mismatch; any other violation is reported through the verdict.
DecompositionReport verify_decomposition(const LinearSystem& sys, const Tolerances& tol = {});

/// [A_o^{k-1} M | A_o^{k-2} M | ... | M]
Matrix reachability_matrix(const Matrix& A_o, const Matrix& M, int k);

/// Numerical rank with singular values above rel_tol * sigma_max.
int numerical_rank(const Matrix& M, double rel_tol = 1e-9);

/// Smallest k <= d_o with rank(R_k) = d_o. Throws ValidationError
/// ("pair not reachable") otherwise. A 0 x 0 pair has index 1.
int reachability_index(const Matrix& A_o, const Matrix& B_o, double rel_tol = 1e-9);

/// Moore-Penrose pseudo-inverse through the SVD, singular values below
/// 1e-12 * sigma_max treated as zero.
Matrix pseudo_inverse(const Matrix& M, double rel_cutoff = 1e-12);

/// Largest singular value (0 for an empty matrix).
double max_singular_value(const Matrix& M);

struct ReachabilityData {
  int kappa = 1;
  Matrix R;       // d_o x (kappa m)
  Matrix R_pinv;  // (kappa m) x d_o
};

ReachabilityData compute_reachability(const LinearSystem& sys, double rel_tol = 1e-9);

/// A^k for a square matrix by repeated squaring.
Matrix matrix_power(const Matrix& A, long k);

}  // namespace netsmpc
