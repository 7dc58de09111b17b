// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "netsmpc/simulator.hpp"
#include "oracles.hpp"

namespace netsmpc {
namespace {

SimConfig small_sim(Protocol protocol, double p, int paths = 3, int steps = 30) {
  SimConfig cfg;
  cfg.controller = testing::reference_controller(protocol, p, 20000);
  cfg.channel = IidChannel{p};
  cfg.x0 = (Vector(3) << 10, 10, -10).finished();
  cfg.steps = steps;
  cfg.paths = paths;
  cfg.seed = 31;
  return cfg;
}

const ControllerModel& shared_model() {
  static const ControllerModel model = prepare_controller_model(small_sim(Protocol::TP1, 0.8).controller);
  return model;
}

PolicyParams toy_policy() {
  // N = 3, m = 1, d = 1: offsets 1, 2, 3 and feedback rows (0 0), (10 0), (20 30).
  PolicyParams policy;
  policy.eta = (Vector(3) << 1, 2, 3).finished();
  policy.theta = Matrix::Zero(3, 2);
  policy.theta(1, 0) = 10;
  policy.theta(2, 0) = 20;
  policy.theta(2, 1) = 30;
  return policy;
}

std::vector<double> run_toy(Protocol protocol, std::vector<int> nu, const Vector& e) {
  const PolicyParams policy = toy_policy();
  ActuatorState state;
  bool acknowledged = false;
  std::vector<double> out;
  for (int ell = 0; ell < static_cast<int>(nu.size()); ++ell) {
    const Packet pkt = make_packet(protocol, policy, e, ell, 3, 1, acknowledged);
    out.push_back(actuator_step(protocol, state, pkt, ell, nu[ell] != 0, 1)(0));
    if (nu[ell]) acknowledged = true;
  }
  return out;
}

TEST(Actuator, PerStepTransmission) {
  const Vector e = (Vector(2) << 0.1, 0.2).finished();
  EXPECT_EQ(run_toy(Protocol::TP1, {1, 0, 1}, e), (std::vector<double>{1.0, 0.0, 3.0 + 2.0 + 6.0}));
}

TEST(Actuator, BurstLostAtFirstStep) {
  const Vector e = (Vector(2) << 0.1, 0.2).finished();
  // Burst dropped: only feedback reaches the actuator.
  EXPECT_EQ(run_toy(Protocol::TP2, {0, 1, 1}, e), (std::vector<double>{0.0, 1.0, 8.0}));
  // Burst delivered: offsets play out even through drops.
  EXPECT_EQ(run_toy(Protocol::TP2, {1, 0, 1}, e), (std::vector<double>{1.0, 2.0, 3.0 + 8.0}));
}

TEST(Actuator, RepeatedOffsetsFillTheBuffer) {
  const Vector e = (Vector(2) << 0.1, 0.2).finished();
  EXPECT_EQ(run_toy(Protocol::TP3, {1, 0, 0}, e), (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_EQ(run_toy(Protocol::TP3, {0, 1, 0}, e), (std::vector<double>{0.0, 3.0, 3.0}));
  EXPECT_EQ(run_toy(Protocol::TP3, {0, 0, 1}, e), (std::vector<double>{0.0, 0.0, 11.0}));
  EXPECT_EQ(run_toy(Protocol::TP3, {0, 0, 0}, e), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Actuator, MemoryClearsAtRecalculation) {
  const PolicyParams policy = toy_policy();
  ActuatorState state;
  const Vector e = Vector::Zero(2);
  actuator_step(Protocol::TP3, state, make_packet(Protocol::TP3, policy, e, 0, 3, 1, false), 0, true, 1);
  EXPECT_TRUE(state.filled);
  const Vector u = actuator_step(Protocol::TP3, state, make_packet(Protocol::TP3, policy, e, 0, 3, 1, false),
                                 0, false, 1);
  EXPECT_FALSE(state.filled);
  EXPECT_EQ(u(0), 0.0);
}

TEST(Simulation, QuietPlantStaysAtOrigin) {
  SimConfig cfg = small_sim(Protocol::TP3, 1.0, 2, 12);
  cfg.controller.noise.covariance = Matrix::Zero(3, 3);
  cfg.x0 = Vector::Zero(3);
  const auto records = run_paths(cfg);
  for (const auto& rec : records) {
    EXPECT_LE(rec.states.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE(rec.controls.cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Simulation, PerfectChannelMakesProtocolsIdentical) {
  std::vector<std::vector<SimulationRecord>> runs;
  for (Protocol pr : kAllProtocols) {
    SimConfig cfg = small_sim(pr, 1.0, 2, 24);
    runs.push_back(run_paths(cfg, shared_model()));
  }
  for (int k = 1; k < 3; ++k) {
    for (int path = 0; path < 2; ++path) {
      EXPECT_EQ((runs[k][path].states - runs[0][path].states).cwiseAbs().maxCoeff(), 0.0);
      EXPECT_EQ((runs[k][path].controls - runs[0][path].controls).cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

class PerProtocol : public ::testing::TestWithParam<Protocol> {};

TEST_P(PerProtocol, ReplayAndSelectionConsistency) {
  SimConfig cfg = small_sim(GetParam(), 0.6, 3, 30);
  cfg.keep_intervals = true;
  const auto records = run_paths(cfg, shared_model());
  const LinearSystem& sys = cfg.controller.sys;
  const int N = cfg.controller.horizon, kappa = 3, d = 3;
  for (const auto& rec : records) {
    ASSERT_EQ(static_cast<int>(rec.intervals.size()), cfg.steps / kappa);
    // Plant replay from recorded inputs and disturbances.
    Vector x = cfg.x0;
    for (int t = 0; t < cfg.steps; ++t) {
      x = sys.A * x + sys.B * rec.controls.row(t).transpose() + rec.noise.row(t).transpose();
      ASSERT_LE((x - rec.states.row(t + 1).transpose()).cwiseAbs().maxCoeff(), 1e-9);
    }
    // Noise reconstruction from consecutive measurements.
    EXPECT_LE((rec.reconstructed - rec.noise).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + rec.states.cwiseAbs().maxCoeff()));
    // Applied inputs equal X eta + S theta e with the protocol's selections.
    for (const auto& iv : rec.intervals) {
      const std::vector<std::uint8_t> window(rec.dropouts.begin() + iv.t, rec.dropouts.begin() + iv.t + kappa);
      const Vector X = selection_diagonal(GetParam(), window, N, 1);
      const Vector S = selection_diagonal(Protocol::TP1, window, N, 1);
      Vector e = Vector::Zero((N - 1) * d);
      for (int ell = 0; ell < kappa; ++ell) {
        const double expected = X(ell) * iv.policy.eta(ell) + S(ell) * iv.policy.theta.row(ell).dot(e);
        EXPECT_NEAR(rec.controls(iv.t + ell, 0), expected, 1e-9);
        e.segment(ell * d, d) = saturate(cfg.controller.saturation, rec.reconstructed.row(iv.t + ell).transpose());
      }
    }
    EXPECT_LE(rec.controls.cwiseAbs().maxCoeff(), sys.u_max);
    EXPECT_EQ(rec.fallbacks, 0);
  }
}

TEST_P(PerProtocol, WorkerCountDoesNotChangeResults) {
  SimConfig cfg = small_sim(GetParam(), 0.5, 4, 15);
  const auto one = run_paths(cfg, shared_model());
  cfg.workers = 3;
  const auto three = run_paths(cfg, shared_model());
  ASSERT_EQ(one.size(), three.size());
  for (std::size_t p = 0; p < one.size(); ++p) {
    EXPECT_EQ((one[p].states - three[p].states).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(one[p].dropouts, three[p].dropouts);
  }
}

INSTANTIATE_TEST_SUITE_P(AllProtocols, PerProtocol, ::testing::ValuesIn(kAllProtocols),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Simulation, ChannelStreamsAreSharedAcrossProtocols) {
  const auto a = run_paths(small_sim(Protocol::TP1, 0.5, 2, 15), shared_model());
  const auto b = run_paths(small_sim(Protocol::TP3, 0.5, 2, 15), shared_model());
  for (int p = 0; p < 2; ++p) {
    EXPECT_EQ(a[p].dropouts, b[p].dropouts);
    EXPECT_EQ((a[p].noise - b[p].noise).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Metrics, HandComputedExamples) {
  std::vector<SimulationRecord> recs(2);
  for (int p = 0; p < 2; ++p) {
    recs[p].states = Matrix::Zero(2, 1);
    recs[p].controls = Matrix::Zero(1, 1);
  }
  recs[0].states << 1.0, 0.0;
  recs[1].states << -3.0, 0.0;
  recs[0].controls << 2.0;
  recs[1].controls << -4.0;
  const auto m = compute_metrics(recs, Matrix::Identity(1, 1), 2.0 * Matrix::Identity(1, 1));
  EXPECT_DOUBLE_EQ(m.avg_state_norm(0), 2.0);
  EXPECT_DOUBLE_EQ(m.mean_square_norm(0), 5.0);
  EXPECT_DOUBLE_EQ(m.empirical_msb, 5.0);
  EXPECT_DOUBLE_EQ(m.actuator_energy, 10.0);
  EXPECT_DOUBLE_EQ(m.avg_cost_per_stage, (1.0 + 8.0 + 9.0 + 32.0) / 2.0);
  EXPECT_DOUBLE_EQ(m.max_abs_input, 4.0);

  for (auto& r : recs) {
    r.states.setZero();
    r.controls.setZero();
  }
  const auto z = compute_metrics(recs, Matrix::Identity(1, 1), Matrix::Identity(1, 1));
  EXPECT_EQ(z.empirical_msb, 0.0);
  EXPECT_EQ(z.avg_cost_per_stage, 0.0);
  EXPECT_THROW(compute_metrics({}, Matrix::Identity(1, 1), Matrix::Identity(1, 1)), ValidationError);
}

TEST(Metrics, PairwiseSum) {
  const std::vector<double> v{1e16, 1.0, -1e16, 1.0};
  EXPECT_EQ(pairwise_sum(v.data(), 0), 0.0);
  EXPECT_EQ(pairwise_sum(v.data(), 1), 1e16);
  std::vector<double> ones(1001, 0.1);
  EXPECT_NEAR(pairwise_sum(ones.data(), ones.size()), 100.1, 1e-12);
}

}  // namespace
}  // namespace netsmpc
