// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "netsmpc/channel.hpp"
#include "netsmpc/lifting.hpp"
#include "netsmpc/model.hpp"
#include "netsmpc/moments.hpp"
#include "netsmpc/qp_solver.hpp"

namespace netsmpc {

/// Stacked affine policy u_{t:N} = eta + theta e(w_{t:N-1}).
struct PolicyParams {
  Vector eta;    // Nm
  Matrix theta;  // Nm x (N-1)d, strictly lower block triangular
};

/// Which m x d blocks of theta are decision variables. Block (l, j) may only
/// be free when j < l; everything else is a structural zero.
struct GainMask {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> blocks;  // N x (N-1)

  static GainMask strictly_lower(int horizon);
  static GainMask none(int horizon);
};

/// Vectorization of the free policy entries plus one bound variable per
/// entry for the l1 input-bound linearization:
///   z = [eta (Nm) | theta free entries | |eta| bounds | |theta| bounds]
class PolicyLayout {
 public:
  struct Entry {
    int row;
    int col;
  };

  PolicyLayout(int horizon, int m, int d);
  PolicyLayout(int horizon, int m, int d, GainMask mask);

  int horizon() const { return horizon_; }
  int input_dim() const { return m_; }
  int noise_dim() const { return d_; }
  int num_eta() const { return horizon_ * m_; }
  int num_theta() const { return static_cast<int>(entries_.size()); }
  int num_policy_vars() const { return num_eta() + num_theta(); }
  int num_vars() const { return 2 * num_policy_vars(); }
  int theta_cols() const { return (horizon_ - 1) * d_; }

  int eta_index(int i) const { return i; }
  int theta_index(int k) const { return num_eta() + k; }
  int eta_bound_index(int i) const { return num_policy_vars() + i; }
  int theta_bound_index(int k) const { return num_policy_vars() + num_eta() + k; }

  const std::vector<Entry>& theta_entries() const { return entries_; }
  const GainMask& mask() const { return mask_; }

  /// Bound variables are set to the absolute values of their entries.
  Vector pack(const PolicyParams& policy) const;
  PolicyParams unpack(const Vector& z) const;
  PolicyParams zero_policy() const;

 private:
  int horizon_;
  int m_;
  int d_;
  GainMask mask_;
  std::vector<Entry> entries_;
};

/// Objective 1/2 z^T P z + q^T z + constant over the layout's vector.
struct QuadraticObjective {
  Matrix P;
  Vector q;
  double constant = 0.0;

  double value(const Vector& z) const { return 0.5 * z.dot(P * z) + q.dot(z) + constant; }
};

/// Expected finite-horizon cost
///   tr(eta^T Sigma_X eta) + tr(theta^T Sigma_S theta Sigma_e)
///   + 2 x^T calA^T calQ calB mu_X eta
///   + 2 tr(theta^T mu_S^T calB^T calQ calD Sigma_e') + c_t
/// with X the protocol's selection operator. State-independent pieces are
/// built once; `at(x)` only forms the state-dependent linear term.
class ObjectiveBuilder {
 public:
  ObjectiveBuilder(const PolicyLayout& layout, const LiftedDynamics& lifted, const CostBlocks& costs,
                   const ProtocolMoments& protocol_moments, const NoiseMoments& noise_moments);

  QuadraticObjective at(const Vector& x) const;
  const Matrix& hessian() const { return P_; }

 private:
  Matrix P_;
  Matrix eta_state_map_;  // q_eta = eta_state_map_ * x
  Vector theta_linear_;
  ConstantTerm constant_;
  int num_eta_ = 0;
};

/// Throws ValidationError when the assembled Hessian has an eigenvalue below
/// -1e-8 (relative to its scale).
QuadraticObjective build_objective(const Vector& x, const PolicyLayout& layout,
                                   const LiftedDynamics& lifted, const CostBlocks& costs,
                                   const ProtocolMoments& protocol_moments,
                                   const NoiseMoments& noise_moments);

/// Rows a^T z <= b.
struct LinearConstraints {
  Matrix A;
  Vector b;

  Eigen::Index size() const { return b.size(); }
};

/// |eta_i| + phi_max ||theta_i||_1 <= u_max for every row i, through the
/// layout's bound variables.
LinearConstraints build_input_constraints(const PolicyLayout& layout, double phi_max, double u_max);

enum class RotationMode {
  /// Drift rows and thresholds in the rotated coordinates (A_o^T)^t x_o.
  ProofConsistent,
  /// Drift rows (A_o^kappa)^T R_kappa and thresholds on x_o itself.
  Literal,
};

struct StabilityConfig {
  double r = 1.0;
  double epsilon = 0.02;
  double zeta = 0.1;
  RotationMode rotation = RotationMode::ProofConsistent;
};

/// U_max / (sqrt(d_o) sigma_1(R_kappa^+)); zeta must lie strictly below.
double zeta_upper_limit(const LinearSystem& sys, const ReachabilityData& reach);

/// Throws ValidationError unless r, epsilon > 0 and zeta is inside the open
/// interval ]0, zeta_upper_limit[.
void validate_stability_config(const StabilityConfig& cfg, const LinearSystem& sys,
                               const ReachabilityData& reach);

/// Component-wise: z_i zeta / r inside [-r, r], +-zeta outside.
Vector sat_inf(const Vector& z, double r, double zeta);

/// Rotation applied to x_o at absolute time t: (A_o^T)^t or the identity.
Matrix drift_rotation(const LinearSystem& sys, long t_abs, RotationMode mode);

/// Drift rows over (eta)_{1:kappa m}: one row per component j of the rotated
/// orthogonal state whose magnitude reaches r + epsilon. The returned matrix
/// has kappa*m columns.
LinearConstraints build_stability_constraints(const Vector& x, long t_abs, const LinearSystem& sys,
                                              const ReachabilityData& reach,
                                              const StabilityConfig& cfg);

/// Offset-only policy that meets every drift row and the input bound.
PolicyParams fallback_policy(const Vector& x, long t_abs, const LinearSystem& sys,
                             const ReachabilityData& reach, const StabilityConfig& cfg,
                             const PolicyLayout& layout);

/// Combine objective and constraint blocks into a QP over the layout vector.
/// Stability rows are embedded on the first kappa*m eta coordinates.
QuadraticProgram assemble_qp(const QuadraticObjective& objective, const LinearConstraints& input,
                             const LinearConstraints& stability, const PolicyLayout& layout);

/// Scales any policy row whose worst-case input magnitude exceeds
/// u_max * (1 - margin) back onto that level. Returns the largest scale
/// reduction applied (0 when untouched).
double restore_input_feasibility(PolicyParams& policy, double phi_max, double u_max,
                                 double margin = 1e-12);

/// max_i (|eta_i| + phi_max ||theta_i||_1)
double worst_case_input(const PolicyParams& policy, double phi_max);

}  // namespace netsmpc
