// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "netsmpc/channel.hpp"
#include "netsmpc/lifting.hpp"
#include "netsmpc/model.hpp"
#include "netsmpc/moments.hpp"
#include "netsmpc/program.hpp"
#include "netsmpc/qp_solver.hpp"

namespace netsmpc {

/// Everything the controller side needs to pose the finite-horizon program.
struct ControllerConfig {
  LinearSystem sys;
  NoiseModel noise;
  Protocol protocol = Protocol::TP1;
  /// Success probability used to form the selection moments.
  double design_p = 1.0;
  int horizon = 4;
  Matrix Q;
  Matrix Q_f;
  Matrix R;
  StabilityConfig stability;
  bool stability_constraints = true;
  SaturationSpec saturation = SaturationSpec::sigmoid();
  long moment_samples = kDefaultMomentSamples;
  std::uint64_t moment_seed = 1;
  std::filesystem::path moment_cache;
  int workers = 1;
  SolverSettings solver;
  bool warm_start = true;
};

/// Pieces shared by controllers that only differ in protocol: the lift, the
/// cost blocks, reachability data and the noise moments.
struct ControllerModel {
  LiftedDynamics lifted;
  CostBlocks costs;
  ReachabilityData reach;
  NoiseMoments noise_moments;
};

/// Validates the configuration (decomposition, kappa <= N, zeta interval) and
/// estimates or loads the noise moments.
ControllerModel prepare_controller_model(const ControllerConfig& cfg);

struct PlanResult {
  PolicyParams policy;
  SolveStatus status = SolveStatus::Optimal;
  int iterations = 0;
  bool used_fallback = false;
  /// Largest constraint violation of the fallback point on this QP.
  double fallback_violation = 0.0;
  /// Largest row rescaling needed to make the returned policy meet the bound.
  double restored = 0.0;
  int stability_rows = 0;
  /// Iterations of a cold solve of the same QP, when requested.
  std::optional<int> cold_iterations;
};

class Controller {
 public:
  Controller(ControllerConfig cfg, ControllerModel model);
  explicit Controller(const ControllerConfig& cfg);

  /// Poses and solves the program at state x and absolute time t_abs (a
  /// multiple of kappa). Falls back to fallback_policy when the solver does
  /// not certify optimality.
  PlanResult plan(const Vector& x, long t_abs, bool compare_cold = false);

  /// The QP that plan() would solve at (x, t_abs).
  QuadraticProgram build_qp(const Vector& x, long t_abs) const;

  /// Forget the previous solution used for warm starting.
  void reset();

  const ControllerConfig& config() const { return cfg_; }
  const ControllerModel& model() const { return model_; }
  const PolicyLayout& layout() const { return layout_; }
  const ProtocolMoments& protocol_moments() const { return protocol_moments_; }
  const ObjectiveBuilder& objective() const { return objective_; }
  int kappa() const { return model_.reach.kappa; }

 private:
  ControllerConfig cfg_;
  ControllerModel model_;
  PolicyLayout layout_;
  ProtocolMoments protocol_moments_;
  ObjectiveBuilder objective_;
  LinearConstraints input_;
  std::optional<WarmStart> previous_;
};

}  // namespace netsmpc
