// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "netsmpc/program.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>

namespace netsmpc {

GainMask GainMask::strictly_lower(int horizon) {
  GainMask mask;
  mask.blocks.setConstant(horizon, std::max(0, horizon - 1), false);
  for (int l = 0; l < horizon; ++l) {
    for (int j = 0; j < l; ++j) mask.blocks(l, j) = true;
  }
  return mask;
}

GainMask GainMask::none(int horizon) {
  GainMask mask;
  mask.blocks.setConstant(horizon, std::max(0, horizon - 1), false);
  return mask;
}

PolicyLayout::PolicyLayout(int horizon, int m, int d)
    : PolicyLayout(horizon, m, d, GainMask::strictly_lower(horizon)) {}

PolicyLayout::PolicyLayout(int horizon, int m, int d, GainMask mask)
    : horizon_(horizon), m_(m), d_(d), mask_(std::move(mask)) {
  if (horizon < 1 || m < 1 || d < 1) throw ValidationError("layout dimensions must be positive");
  if (mask_.blocks.rows() != horizon || mask_.blocks.cols() != horizon - 1) {
    throw DimensionError("gain mask must be " + std::to_string(horizon) + "x" +
                         std::to_string(horizon - 1) + " blocks");
  }
  // Column-major over theta so the Hessian blocks line up with vec(theta).
  for (int j = 0; j < horizon - 1; ++j) {
    for (int l = j + 1; l < horizon; ++l) {
      if (!mask_.blocks(l, j)) continue;
      for (int c = 0; c < d; ++c) {
        for (int r = 0; r < m; ++r) entries_.push_back({l * m + r, j * d + c});
      }
    }
  }
  for (int l = 0; l < horizon; ++l) {
    for (int j = l; j < horizon - 1; ++j) {
      if (mask_.blocks(l, j)) throw ValidationError("gain mask frees a block on or above the diagonal");
    }
  }
}

Vector PolicyLayout::pack(const PolicyParams& policy) const {
  if (policy.eta.size() != num_eta() || policy.theta.rows() != num_eta() ||
      policy.theta.cols() != theta_cols()) {
    throw DimensionError("policy does not match layout");
  }
  Vector z(num_vars());
  for (int i = 0; i < num_eta(); ++i) {
    z(eta_index(i)) = policy.eta(i);
    z(eta_bound_index(i)) = std::abs(policy.eta(i));
  }
  for (int k = 0; k < num_theta(); ++k) {
    const double v = policy.theta(entries_[k].row, entries_[k].col);
    z(theta_index(k)) = v;
    z(theta_bound_index(k)) = std::abs(v);
  }
  return z;
}

PolicyParams PolicyLayout::unpack(const Vector& z) const {
  if (z.size() != num_vars() && z.size() != num_policy_vars()) {
    throw DimensionError("vector of length " + std::to_string(z.size()) + " does not match layout");
  }
  PolicyParams policy = zero_policy();
  policy.eta = z.head(num_eta());
  for (int k = 0; k < num_theta(); ++k) {
    policy.theta(entries_[k].row, entries_[k].col) = z(theta_index(k));
  }
  return policy;
}

PolicyParams PolicyLayout::zero_policy() const {
  return {Vector::Zero(num_eta()), Matrix::Zero(num_eta(), theta_cols())};
}

ObjectiveBuilder::ObjectiveBuilder(const PolicyLayout& layout, const LiftedDynamics& lifted,
                                   const CostBlocks& costs, const ProtocolMoments& pm,
                                   const NoiseMoments& nm)
    : constant_(lifted, costs, nm.Sigma_W), num_eta_(layout.num_eta()) {
  const int n_eta = layout.num_eta();
  const int n_theta = layout.num_theta();
  const int N = layout.horizon();
  const int d = layout.noise_dim();
  if (lifted.horizon != N || pm.Sigma.rows() != n_eta || pm.mu.rows() != n_eta) {
    throw DimensionError("protocol moments do not match a horizon of " + std::to_string(N));
  }
  if (nm.Sigma_e.rows() != (N - 1) * d || nm.Sigma_e_prime.rows() != N * d ||
      nm.Sigma_e_prime.cols() != (N - 1) * d) {
    throw DimensionError("noise moments do not match the layout (Sigma_e is " +
                         shape_of(nm.Sigma_e) + ")");
  }

  const Matrix BtQ = lifted.calB.transpose() * costs.calQ;

  P_ = Matrix::Zero(layout.num_vars(), layout.num_vars());
  P_.topLeftCorner(n_eta, n_eta) = 2.0 * pm.Sigma;
  const auto& entries = layout.theta_entries();
  for (int a = 0; a < n_theta; ++a) {
    for (int b = 0; b < n_theta; ++b) {
      P_(layout.theta_index(a), layout.theta_index(b)) =
          2.0 * pm.Sigma_S(entries[a].row, entries[b].row) * nm.Sigma_e(entries[a].col, entries[b].col);
    }
  }
  P_ = 0.5 * (P_ + P_.transpose()).eval();

  const double scale = std::max(1.0, P_.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Matrix> es(P_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-8 * scale) {
    throw ValidationError("assembled Hessian is not positive semidefinite (min eigenvalue " +
                          std::to_string(es.eigenvalues().minCoeff()) + ")");
  }

  eta_state_map_ = 2.0 * pm.mu.transpose() * BtQ * lifted.calA;

  theta_linear_ = Vector::Zero(n_theta);
  if (n_theta > 0) {
    const Matrix C = pm.mu_S.transpose() * BtQ * lifted.calD * nm.Sigma_e_prime;
    for (int k = 0; k < n_theta; ++k) theta_linear_(k) = 2.0 * C(entries[k].row, entries[k].col);
  }
}

QuadraticObjective ObjectiveBuilder::at(const Vector& x) const {
  QuadraticObjective obj;
  obj.P = P_;
  obj.q = Vector::Zero(P_.rows());
  obj.q.head(num_eta_) = eta_state_map_ * x;
  obj.q.segment(num_eta_, theta_linear_.size()) = theta_linear_;
  obj.constant = constant_(x);
  return obj;
}

QuadraticObjective build_objective(const Vector& x, const PolicyLayout& layout,
                                   const LiftedDynamics& lifted, const CostBlocks& costs,
                                   const ProtocolMoments& protocol_moments,
                                   const NoiseMoments& noise_moments) {
  return ObjectiveBuilder(layout, lifted, costs, protocol_moments, noise_moments).at(x);
}

LinearConstraints build_input_constraints(const PolicyLayout& layout, double phi_max, double u_max) {
  if (!(phi_max > 0.0) || !(u_max > 0.0)) throw ValidationError("phi_max and u_max must be positive");
  const int n = layout.num_vars();
  const int rows = 2 * layout.num_policy_vars() + layout.num_eta();
  LinearConstraints out{Matrix::Zero(rows, n), Vector::Zero(rows)};
  int r = 0;
  for (int i = 0; i < layout.num_eta(); ++i) {
    for (double sign : {1.0, -1.0}) {
      out.A(r, layout.eta_index(i)) = sign;
      out.A(r, layout.eta_bound_index(i)) = -1.0;
      ++r;
    }
  }
  const auto& entries = layout.theta_entries();
  for (int k = 0; k < layout.num_theta(); ++k) {
    for (double sign : {1.0, -1.0}) {
      out.A(r, layout.theta_index(k)) = sign;
      out.A(r, layout.theta_bound_index(k)) = -1.0;
      ++r;
    }
  }
  for (int i = 0; i < layout.num_eta(); ++i) {
    out.A(r, layout.eta_bound_index(i)) = 1.0;
    for (int k = 0; k < layout.num_theta(); ++k) {
      if (entries[k].row == i) out.A(r, layout.theta_bound_index(k)) = phi_max;
    }
    out.b(r) = u_max;
    ++r;
  }
  return out;
}

double zeta_upper_limit(const LinearSystem& sys, const ReachabilityData& reach) {
  if (sys.d_o == 0) return std::numeric_limits<double>::infinity();
  return sys.u_max / (std::sqrt(static_cast<double>(sys.d_o)) * max_singular_value(reach.R_pinv));
}

void validate_stability_config(const StabilityConfig& cfg, const LinearSystem& sys,
                               const ReachabilityData& reach) {
  if (!(cfg.r > 0.0)) throw ValidationError("stability radius r must be positive");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("stability margin epsilon must be positive");
  const double limit = zeta_upper_limit(sys, reach);
  if (!(cfg.zeta > 0.0 && cfg.zeta < limit)) {
    throw ValidationError("zeta = " + std::to_string(cfg.zeta) + " is outside ]0, " +
                          std::to_string(limit) + "[");
  }
}

Vector sat_inf(const Vector& z, double r, double zeta) {
  if (!(r > 0.0) || !(zeta > 0.0)) throw ValidationError("sat_inf needs r, zeta > 0");
  Vector out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (std::abs(z(i)) <= r) {
      out(i) = z(i) * zeta / r;
    } else {
      out(i) = z(i) > r ? zeta : -zeta;
    }
  }
  return out;
}

Matrix drift_rotation(const LinearSystem& sys, long t_abs, RotationMode mode) {
  if (mode == RotationMode::Literal || sys.d_o == 0) return Matrix::Identity(sys.d_o, sys.d_o);
  return matrix_power(sys.orthogonal_block().transpose(), t_abs);
}

namespace {

// W = rotation * (A_o^T)^kappa * R_kappa, the map from (eta)_{1:kappa m} to
// the expected drift of the rotated orthogonal state.
Matrix drift_map(const LinearSystem& sys, const ReachabilityData& reach, const Matrix& rotation) {
  const Matrix Ao_t_kappa = matrix_power(sys.orthogonal_block().transpose(), reach.kappa);
  return rotation * Ao_t_kappa * reach.R;
}

}  // namespace

LinearConstraints build_stability_constraints(const Vector& x, long t_abs, const LinearSystem& sys,
                                              const ReachabilityData& reach,
                                              const StabilityConfig& cfg) {
  if (t_abs % reach.kappa != 0) {
    throw ValidationError("stability rows are only defined at recalculation instants");
  }
  const int cols = reach.kappa * sys.input_dim();
  LinearConstraints out{Matrix::Zero(0, cols), Vector::Zero(0)};
  if (sys.d_o == 0) return out;
  const Matrix rotation = drift_rotation(sys, t_abs, cfg.rotation);
  const Vector y = rotation * x.head(sys.d_o);
  const Matrix W = drift_map(sys, reach, rotation);
  const double threshold = cfg.r + cfg.epsilon;
  std::vector<std::pair<int, double>> rows;
  for (int j = 0; j < sys.d_o; ++j) {
    if (y(j) >= threshold) rows.emplace_back(j, 1.0);
    else if (y(j) <= -threshold) rows.emplace_back(j, -1.0);
  }
  out.A.resize(static_cast<Eigen::Index>(rows.size()), cols);
  out.b.setConstant(static_cast<Eigen::Index>(rows.size()), -cfg.zeta);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.A.row(static_cast<Eigen::Index>(k)) = rows[k].second * W.row(rows[k].first);
  }
  return out;
}

PolicyParams fallback_policy(const Vector& x, long t_abs, const LinearSystem& sys,
                             const ReachabilityData& reach, const StabilityConfig& cfg,
                             const PolicyLayout& layout) {
  PolicyParams policy = layout.zero_policy();
  if (sys.d_o == 0) return policy;
  const Matrix rotation = drift_rotation(sys, t_abs, cfg.rotation);
  const Vector y = rotation * x.head(sys.d_o);
  const Matrix Ao_kappa = matrix_power(sys.orthogonal_block(), reach.kappa);
  // A_o^{kappa (tau + 1)} = A_o^kappa * rotation^T for the rotated mode.
  const Vector head = -reach.R_pinv * (Ao_kappa * (rotation.transpose() * sat_inf(y, cfg.r, cfg.zeta)));
  policy.eta.head(head.size()) = head;
  return policy;
}

QuadraticProgram assemble_qp(const QuadraticObjective& objective, const LinearConstraints& input,
                             const LinearConstraints& stability, const PolicyLayout& layout) {
  const int n = layout.num_vars();
  if (objective.P.rows() != n || objective.q.size() != n || input.A.cols() != n) {
    throw DimensionError("objective/constraints do not match the layout");
  }
  if (stability.size() > 0 && stability.A.cols() > layout.num_eta()) {
    throw DimensionError("stability rows span more than the offset vector");
  }
  QuadraticProgram qp;
  qp.P = objective.P;
  qp.q = objective.q;
  qp.constant = objective.constant;
  const auto rows = input.size() + stability.size();
  qp.A = Matrix::Zero(rows, n);
  qp.b.resize(rows);
  qp.A.topRows(input.size()) = input.A;
  qp.b.head(input.size()) = input.b;
  if (stability.size() > 0) {
    qp.A.bottomLeftCorner(stability.size(), stability.A.cols()) = stability.A;
    qp.b.tail(stability.size()) = stability.b;
  }
  return qp;
}

double worst_case_input(const PolicyParams& policy, double phi_max) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < policy.eta.size(); ++i) {
    worst = std::max(worst, std::abs(policy.eta(i)) + phi_max * policy.theta.row(i).lpNorm<1>());
  }
  return worst;
}

double restore_input_feasibility(PolicyParams& policy, double phi_max, double u_max, double margin) {
  const double target = u_max * (1.0 - margin);
  double reduction = 0.0;
  for (Eigen::Index i = 0; i < policy.eta.size(); ++i) {
    const double s = std::abs(policy.eta(i)) + phi_max * policy.theta.row(i).lpNorm<1>();
    if (s > target) {
      const double scale = target / s;
      policy.eta(i) *= scale;
      policy.theta.row(i) *= scale;
      reduction = std::max(reduction, 1.0 - scale);
    }
  }
  return reduction;
}

}  // namespace netsmpc
