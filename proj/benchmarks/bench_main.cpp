// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "netsmpc/controller.hpp"

namespace {

using namespace netsmpc;

ControllerConfig reference_config(Protocol protocol) {
  ControllerConfig cfg;
  cfg.sys.A.resize(3, 3);
  cfg.sys.A << 0.0, -0.8, -0.6, 0.8, -0.36, 0.48, 0.6, 0.48, -0.64;
  cfg.sys.B = (Matrix(3, 1) << 0.16, 0.12, 0.14).finished();
  cfg.sys.u_max = 15.0;
  cfg.sys.d_o = 3;
  cfg.noise.covariance = 2.0 * Matrix::Identity(3, 3);
  cfg.protocol = protocol;
  cfg.design_p = 0.8;
  cfg.Q = Matrix::Identity(3, 3);
  cfg.Q_f = (Matrix(3, 3) << 12, -0.1, -0.4, -0.1, 19, -0.2, -0.4, -0.2, 2).finished();
  cfg.R = 2.0 * Matrix::Identity(1, 1);
  cfg.stability = {0.4729, 0.02, 0.4729, RotationMode::ProofConsistent};
  cfg.moment_samples = 50000;
  return cfg;
}

void BM_ColdSolve(benchmark::State& state) {
  Controller ctrl(reference_config(Protocol::TP3));
  const Vector x = (Vector(3) << 10, 10, -10).finished();
  const QuadraticProgram qp = ctrl.build_qp(x, 0);
  for (auto _ : state) {
    auto sol = solve(qp, ctrl.config().solver);
    benchmark::DoNotOptimize(sol.z.data());
  }
}
BENCHMARK(BM_ColdSolve)->Unit(benchmark::kMicrosecond);

void BM_PlanAlongTrajectory(benchmark::State& state) {
  Controller ctrl(reference_config(Protocol::TP3));
  Vector x = (Vector(3) << 10, 10, -10).finished();
  long t = 0;
  for (auto _ : state) {
    auto plan = ctrl.plan(x, t);
    x = ctrl.config().sys.A * x + ctrl.config().sys.B * plan.policy.eta.head(1);
    t += 3;
  }
}
BENCHMARK(BM_PlanAlongTrajectory)->Unit(benchmark::kMicrosecond);

void BM_NoiseMoments(benchmark::State& state) {
  const NoiseModel noise{2.0 * Matrix::Identity(3, 3)};
  for (auto _ : state) {
    auto nm = estimate_noise_moments(noise, SaturationSpec::sigmoid(), 4, state.range(0), 1);
    benchmark::DoNotOptimize(nm.Sigma_e.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NoiseMoments)->Arg(1 << 14)->Arg(1 << 18)->Unit(benchmark::kMillisecond);

void BM_ExactProtocolMoments(benchmark::State& state) {
  const Matrix M = Matrix::Identity(8, 8);
  const int kappa = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto pm = exact_protocol_moments(Protocol::TP3, 0.8, M, 8, 1, kappa);
    benchmark::DoNotOptimize(pm.Sigma.data());
  }
}
BENCHMARK(BM_ExactProtocolMoments)->Arg(3)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
