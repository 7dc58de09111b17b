// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "netsmpc/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace netsmpc {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Engine make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(substream),
                    static_cast<std::uint32_t>(substream >> 32)};
  return Engine(seq);
}

NoiseSampler::NoiseSampler(const NoiseModel& noise) {
  const Matrix& C = noise.covariance;
  if (C.rows() != C.cols()) {
    throw DimensionError("noise covariance must be square, got " + shape_of(C));
  }
  if ((C - C.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, C.cwiseAbs().maxCoeff())) {
    throw ValidationError("noise covariance is not symmetric");
  }
  // Eigen-decomposition root tolerates singular (including zero) covariances.
  Eigen::SelfAdjointEigenSolver<Matrix> es(C);
  const Vector& lambda = es.eigenvalues();
  if (lambda.size() > 0 && lambda.minCoeff() < -1e-12 * std::max(1.0, lambda.cwiseAbs().maxCoeff())) {
    throw ValidationError("noise covariance is not positive semidefinite");
  }
  root_ = es.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

void NoiseSampler::draw_into(Engine& engine, Eigen::Ref<Vector> out) const {
  std::normal_distribution<double> normal;
  Vector xi(root_.cols());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = normal(engine);
  out.noalias() = root_ * xi;
}

Vector NoiseSampler::draw(Engine& engine) const {
  Vector w(root_.rows());
  draw_into(engine, w);
  return w;
}

DecompositionReport verify_decomposition(const LinearSystem& sys, const Tolerances& tol) {
  const auto d = sys.A.rows();
  if (sys.A.cols() != d) {
    throw DimensionError("A must be square, got " + shape_of(sys.A));
  }
  if (sys.B.rows() != d) {
    throw DimensionError("B is " + shape_of(sys.B) + " but A is " + shape_of(sys.A));
  }
  if (sys.d_o < 0 || sys.d_s < 0 || sys.d_o + sys.d_s != d) {
    throw DimensionError("block sizes d_o=" + std::to_string(sys.d_o) +
                         " d_s=" + std::to_string(sys.d_s) + " do not add up to d=" +
                         std::to_string(d));
  }

  DecompositionReport report;
  const int d_o = sys.d_o;
  const int d_s = sys.d_s;

  if (d_o > 0) {
    const Matrix A_o = sys.orthogonal_block();
    const Matrix gram = A_o.transpose() * A_o - Matrix::Identity(d_o, d_o);
    report.orthogonality_residual = gram.cwiseAbs().rowwise().sum().maxCoeff();
  }
  if (d_o > 0 && d_s > 0) {
    report.coupling_residual = std::max(sys.A.topRightCorner(d_o, d_s).cwiseAbs().maxCoeff(),
                                        sys.A.bottomLeftCorner(d_s, d_o).cwiseAbs().maxCoeff());
  }
  if (d_s > 0) {
    Eigen::EigenSolver<Matrix> es(sys.schur_block(), /*computeEigenvectors=*/false);
    report.schur_spectral_radius = es.eigenvalues().cwiseAbs().maxCoeff();
  }

  std::ostringstream msg;
  bool ok = true;
  if (!(sys.u_max > 0.0)) {
    ok = false;
    msg << "u_max must be positive; ";
  }
  if (report.orthogonality_residual > tol.orthogonality) {
    ok = false;
    msg << "orthogonal block residual " << report.orthogonality_residual << " exceeds "
        << tol.orthogonality << "; ";
  }
  if (report.coupling_residual > tol.orthogonality) {
    ok = false;
    msg << "A is not block diagonal (coupling " << report.coupling_residual << "); ";
  }
  if (d_s > 0 && report.schur_spectral_radius >= 1.0 - tol.schur_margin) {
    ok = false;
    msg << "Schur block spectral radius " << report.schur_spectral_radius << " is not below 1; ";
  }
  report.lyapunov_stable = ok;
  report.message = ok ? "ok" : msg.str();
  return report;
}

Matrix matrix_power(const Matrix& A, long k) {
  if (A.rows() != A.cols()) throw DimensionError("matrix_power needs a square matrix, got " + shape_of(A));
  if (k < 0) throw ValidationError("matrix_power: negative exponent");
  Matrix result = Matrix::Identity(A.rows(), A.cols());
  Matrix base = A;
  while (k > 0) {
    if (k & 1) result = result * base;
    k >>= 1;
    if (k > 0) base = base * base;
  }
  return result;
}

Matrix reachability_matrix(const Matrix& A_o, const Matrix& M, int k) {
  if (k <= 0) throw ValidationError("reachability_matrix: k must be positive");
  if (A_o.rows() != A_o.cols()) throw DimensionError("A_o must be square, got " + shape_of(A_o));
  if (M.rows() != A_o.rows()) {
    throw DimensionError("M has " + std::to_string(M.rows()) + " rows, A_o is " + shape_of(A_o));
  }
  const auto cols = M.cols();
  Matrix R(A_o.rows(), k * cols);
  // The last block is M; walk backwards multiplying by A_o.
  Matrix block = M;
  for (int j = k - 1; j >= 0; --j) {
    R.middleCols(j * cols, cols) = block;
    if (j > 0) block = A_o * block;
  }
  return R;
}

int numerical_rank(const Matrix& M, double rel_tol) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++r;
  }
  return r;
}

int reachability_index(const Matrix& A_o, const Matrix& B_o, double rel_tol) {
  const int d_o = static_cast<int>(A_o.rows());
  if (d_o == 0) return 1;
  for (int k = 1; k <= d_o; ++k) {
    if (numerical_rank(reachability_matrix(A_o, B_o, k), rel_tol) == d_o) return k;
  }
  throw ValidationError("pair not reachable within " + std::to_string(d_o) + " steps");
}

Matrix pseudo_inverse(const Matrix& M, double rel_cutoff) {
  if (M.size() == 0) return Matrix::Zero(M.cols(), M.rows());
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rel_cutoff * s(0) : 0.0;
  Vector inv = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

double max_singular_value(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues()(0);
}

ReachabilityData compute_reachability(const LinearSystem& sys, double rel_tol) {
  ReachabilityData data;
  const Matrix A_o = sys.orthogonal_block();
  const Matrix B_o = sys.orthogonal_input();
  data.kappa = reachability_index(A_o, B_o, rel_tol);
  data.R = reachability_matrix(A_o, B_o, data.kappa);
  data.R_pinv = pseudo_inverse(data.R);
  return data;
}

}  // namespace netsmpc
