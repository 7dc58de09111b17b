// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "netsmpc/channel.hpp"
#include "netsmpc/controller.hpp"

namespace netsmpc {

struct SimConfig {
  ControllerConfig controller;
  ChannelModel channel = IidChannel{1.0};
  Vector x0;
  int steps = 60;  // T, a multiple of kappa
  int paths = 1;
  std::uint64_t seed = 1;
  int workers = 1;
  /// Keep per-interval policies and solver diagnostics in the records.
  bool keep_intervals = false;
  /// Also cold-solve every QP to compare iteration counts.
  bool compare_cold = false;
};

/// What the controller puts on the channel at one step of an interval.
struct Packet {
  Vector control;              // per-step value (m)
  std::optional<Vector> burst; // offset blocks for the interval, full Nm layout
};

/// Actuator-side memory; emptied at every recalculation instant.
struct ActuatorState {
  Vector buffer;
  bool filled = false;

  void clear();
};

/// Input the actuator applies at offset `ell` of an interval given what was
/// sent and whether it arrived.
///   TP1: nu * control
///   TP2: stored offset (burst at ell = 0) + nu * feedback
///   TP3: control when it arrives, else the buffered offset if a burst
///        arrived earlier in the interval
Vector actuator_step(Protocol protocol, ActuatorState& state, const Packet& sent, int ell, bool nu,
                     int m);

/// Packet the controller sends at offset `ell`, given the policy, the
/// saturated reconstructed noise so far and whether an earlier packet of the
/// interval was acknowledged.
Packet make_packet(Protocol protocol, const PolicyParams& policy, const Vector& e, int ell, int kappa,
                   int m, bool acknowledged);

struct IntervalLog {
  long t = 0;
  PolicyParams policy;
  SolveStatus status = SolveStatus::Optimal;
  int iterations = 0;
  std::optional<int> cold_iterations;
  bool used_fallback = false;
  double fallback_violation = 0.0;
  int stability_rows = 0;
};

struct SimulationRecord {
  Matrix states;    // (T+1) x d
  Matrix controls;  // T x m, applied inputs
  Matrix noise;     // T x d, true disturbances
  Matrix reconstructed;  // T x d, controller-side estimates
  std::vector<std::uint8_t> dropouts;  // T
  Vector stage_costs;  // T
  double energy = 0.0; // time average of |u^a|^2
  int fallbacks = 0;
  int solves = 0;
  long solver_iterations = 0;
  std::vector<IntervalLog> intervals;
};

struct Metrics {
  Vector avg_state_norm;  // T+1
  Vector mean_square_norm;  // T+1, mean over paths of |x_t|^2
  double actuator_energy = 0.0;
  double avg_cost_per_stage = 0.0;
  double empirical_msb = 0.0;
  double max_abs_input = 0.0;
  long fallbacks = 0;
  long solves = 0;
  long solver_iterations = 0;
};

/// Paths run independently with engines derived from (seed, path); the
/// result does not depend on `workers`.
std::vector<SimulationRecord> run_paths(const SimConfig& cfg);
/// Same, reusing an already prepared controller model.
std::vector<SimulationRecord> run_paths(const SimConfig& cfg, const ControllerModel& model);

SimulationRecord run_path(const SimConfig& cfg, const ControllerModel& model, int path);

Metrics compute_metrics(const std::vector<SimulationRecord>& records, const Matrix& Q, const Matrix& R);

/// Sum with pairwise splitting so the result depends only on the ordering
/// of `values`.
double pairwise_sum(const double* values, std::size_t count);

void write_trajectories_csv(const std::filesystem::path& file, const std::vector<SimulationRecord>& records);
void write_metrics_csv(const std::filesystem::path& file, const Metrics& metrics);
void write_norm_series_csv(const std::filesystem::path& file, const Metrics& metrics);

}  // namespace netsmpc
