// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "netsmpc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>
#include <thread>

namespace netsmpc {

void ActuatorState::clear() {
  buffer.resize(0);
  filled = false;
}

Vector actuator_step(Protocol protocol, ActuatorState& state, const Packet& sent, int ell, bool nu,
                     int m) {
  if (ell == 0) state.clear();
  auto stored = [&]() -> Vector {
    if (!state.filled) return Vector::Zero(m);
    return state.buffer.segment(static_cast<Eigen::Index>(ell) * m, m);
  };
  switch (protocol) {
    case Protocol::TP1:
      return nu ? sent.control : Vector::Zero(m);
    case Protocol::TP2: {
      if (ell == 0 && nu && sent.burst) {
        state.buffer = *sent.burst;
        state.filled = true;
      }
      Vector u = stored();
      if (nu) u += sent.control;
      return u;
    }
    case Protocol::TP3: {
      if (nu) {
        if (sent.burst && !state.filled) {
          state.buffer = *sent.burst;
          state.filled = true;
        }
        return sent.control;
      }
      return stored();
    }
  }
  throw std::logic_error("unknown protocol");
}

Packet make_packet(Protocol protocol, const PolicyParams& policy, const Vector& e, int ell, int kappa,
                   int m, bool acknowledged) {
  const Eigen::Index row = static_cast<Eigen::Index>(ell) * m;
  const Vector feedback = policy.theta.middleRows(row, m) * e;
  Packet pkt;
  switch (protocol) {
    case Protocol::TP1:
      pkt.control = policy.eta.segment(row, m) + feedback;
      break;
    case Protocol::TP2:
      pkt.control = feedback;
      if (ell == 0) {
        Vector burst = Vector::Zero(policy.eta.size());
        burst.head(static_cast<Eigen::Index>(kappa) * m) = policy.eta.head(static_cast<Eigen::Index>(kappa) * m);
        pkt.burst = std::move(burst);
      }
      break;
    case Protocol::TP3:
      pkt.control = policy.eta.segment(row, m) + feedback;
      // Remaining offsets ride along until one packet of the interval is
      // acknowledged; the last step of an interval has nothing left to send.
      if (!acknowledged && ell <= kappa - 2) {
        Vector burst = Vector::Zero(policy.eta.size());
        const Eigen::Index from = row + m;
        const Eigen::Index to = static_cast<Eigen::Index>(kappa) * m;
        burst.segment(from, to - from) = policy.eta.segment(from, to - from);
        pkt.burst = std::move(burst);
      }
      break;
  }
  return pkt;
}

SimulationRecord run_path(const SimConfig& cfg, const ControllerModel& model, int path) {
  const ControllerConfig& cc = cfg.controller;
  const LinearSystem& sys = cc.sys;
  const int d = sys.state_dim();
  const int m = sys.input_dim();
  const int N = cc.horizon;
  const int T = cfg.steps;

  Controller controller(cc, model);
  const int kappa = controller.kappa();
  NoiseSampler sampler(cc.noise);
  DropoutProcess dropouts(cfg.channel);
  Engine noise_engine = make_engine(cfg.seed, static_cast<std::uint64_t>(path), 0);
  Engine channel_engine = make_engine(cfg.seed, static_cast<std::uint64_t>(path), 1);

  SimulationRecord rec;
  rec.states.resize(T + 1, d);
  rec.controls.resize(T, m);
  rec.noise.resize(T, d);
  rec.reconstructed.resize(T, d);
  rec.dropouts.resize(T);
  rec.stage_costs.resize(T);

  Vector x = cfg.x0;
  rec.states.row(0) = x.transpose();
  PolicyParams policy;
  Vector e = Vector::Zero(static_cast<Eigen::Index>(N - 1) * d);
  ActuatorState actuator;
  bool acknowledged = false;
  Vector w(d);

  for (int t = 0; t < T; ++t) {
    const int ell = t % kappa;
    if (ell == 0) {
      PlanResult plan = controller.plan(x, t, cfg.compare_cold);
      policy = std::move(plan.policy);
      if (plan.used_fallback) ++rec.fallbacks;
      ++rec.solves;
      rec.solver_iterations += plan.iterations;
      if (cfg.keep_intervals) {
        rec.intervals.push_back({t, policy, plan.status, plan.iterations, plan.cold_iterations,
                                 plan.used_fallback, plan.fallback_violation, plan.stability_rows});
      }
      e.setZero();
      acknowledged = false;
    }
    const bool nu = dropouts.next(channel_engine) != 0;
    const Packet pkt = make_packet(cc.protocol, policy, e, ell, kappa, m, acknowledged);
    const Vector u = actuator_step(cc.protocol, actuator, pkt, ell, nu, m);
    sampler.draw_into(noise_engine, w);

    const Vector drift = sys.A * x + sys.B * u;
    const Vector x_next = drift + w;

    // Acknowledgements tell the controller which input was applied, so the
    // disturbance follows from consecutive state measurements.
    const Vector w_hat = x_next - drift;
    if (ell < N - 1) e.segment(static_cast<Eigen::Index>(ell) * d, d) = saturate(cc.saturation, w_hat);
    if (nu) acknowledged = true;

    rec.controls.row(t) = u.transpose();
    rec.noise.row(t) = w.transpose();
    rec.reconstructed.row(t) = w_hat.transpose();
    rec.dropouts[t] = nu ? 1 : 0;
    rec.stage_costs(t) = x.dot(cc.Q * x) + u.dot(cc.R * u);
    x = x_next;
    rec.states.row(t + 1) = x.transpose();
  }
  rec.energy = T > 0 ? rec.controls.rowwise().squaredNorm().sum() / T : 0.0;
  return rec;
}

std::vector<SimulationRecord> run_paths(const SimConfig& cfg, const ControllerModel& model) {
  if (cfg.paths < 1) throw ValidationError("paths must be positive");
  if (cfg.steps < 0) throw ValidationError("steps must be nonnegative");
  if (cfg.x0.size() != cfg.controller.sys.state_dim()) {
    throw DimensionError("initial state has length " + std::to_string(cfg.x0.size()));
  }
  if (cfg.steps % model.reach.kappa != 0) {
    throw ValidationError("steps T = " + std::to_string(cfg.steps) + " is not a multiple of kappa = " +
                          std::to_string(model.reach.kappa));
  }
  validate_channel(cfg.channel);

  std::vector<SimulationRecord> records(cfg.paths);
  const int workers = std::clamp(cfg.workers, 1, cfg.paths);
  if (workers == 1) {
    for (int p = 0; p < cfg.paths; ++p) records[p] = run_path(cfg, model, p);
    return records;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (int wkr = 0; wkr < workers; ++wkr) {
    pool.emplace_back([&, wkr]() {
      try {
        for (int p = wkr; p < cfg.paths; p += workers) records[p] = run_path(cfg, model, p);
      } catch (...) {
        errors[wkr] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return records;
}

std::vector<SimulationRecord> run_paths(const SimConfig& cfg) {
  return run_paths(cfg, prepare_controller_model(cfg.controller));
}

double pairwise_sum(const double* values, std::size_t count) {
  if (count <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += values[i];
    return s;
  }
  const std::size_t half = count / 2;
  return pairwise_sum(values, half) + pairwise_sum(values + half, count - half);
}

namespace {

double pairwise_mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : pairwise_sum(v.data(), v.size()) / static_cast<double>(v.size());
}

}  // namespace

Metrics compute_metrics(const std::vector<SimulationRecord>& records, const Matrix& Q, const Matrix& R) {
  if (records.empty()) throw ValidationError("no simulation records");
  const Eigen::Index T1 = records.front().states.rows();
  const std::size_t paths = records.size();
  Metrics out;
  out.avg_state_norm.resize(T1);
  out.mean_square_norm.resize(T1);
  std::vector<double> buf(paths);
  for (Eigen::Index t = 0; t < T1; ++t) {
    for (std::size_t p = 0; p < paths; ++p) buf[p] = records[p].states.row(t).norm();
    out.avg_state_norm(t) = pairwise_mean(buf);
    for (std::size_t p = 0; p < paths; ++p) buf[p] = records[p].states.row(t).squaredNorm();
    out.mean_square_norm(t) = pairwise_mean(buf);
  }
  out.empirical_msb = T1 > 0 ? out.mean_square_norm.maxCoeff() : 0.0;

  std::vector<double> energy, cost;
  for (const auto& rec : records) {
    for (Eigen::Index t = 0; t < rec.controls.rows(); ++t) {
      const Vector x = rec.states.row(t).transpose();
      const Vector u = rec.controls.row(t).transpose();
      energy.push_back(u.squaredNorm());
      cost.push_back(x.dot(Q * x) + u.dot(R * u));
      out.max_abs_input = std::max(out.max_abs_input, u.size() ? u.cwiseAbs().maxCoeff() : 0.0);
    }
    out.fallbacks += rec.fallbacks;
    out.solver_iterations += rec.solver_iterations;
    out.solves += rec.solves;
  }
  out.actuator_energy = pairwise_mean(energy);
  out.avg_cost_per_stage = pairwise_mean(cost);
  return out;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << std::setprecision(17);
  return os;
}

}  // namespace

void write_trajectories_csv(const std::filesystem::path& file, const std::vector<SimulationRecord>& records) {
  std::ofstream os = open_csv(file);
  if (records.empty()) return;
  const Eigen::Index d = records.front().states.cols();
  const Eigen::Index m = records.front().controls.cols();
  os << "path,t";
  for (Eigen::Index i = 0; i < d; ++i) os << ",x" << i + 1;
  for (Eigen::Index i = 0; i < m; ++i) os << ",u" << i + 1;
  os << ",nu\n";
  for (std::size_t p = 0; p < records.size(); ++p) {
    const auto& rec = records[p];
    const Eigen::Index T = rec.controls.rows();
    for (Eigen::Index t = 0; t <= T; ++t) {
      os << p << ',' << t;
      for (Eigen::Index i = 0; i < d; ++i) os << ',' << rec.states(t, i);
      for (Eigen::Index i = 0; i < m; ++i) {
        os << ',';
        if (t < T) os << rec.controls(t, i);
      }
      os << ',';
      if (t < T) os << static_cast<int>(rec.dropouts[t]);
      os << '\n';
    }
  }
}

void write_metrics_csv(const std::filesystem::path& file, const Metrics& metrics) {
  std::ofstream os = open_csv(file);
  os << "metric,value\n";
  os << "avg_cost_per_stage," << metrics.avg_cost_per_stage << '\n';
  os << "actuator_energy," << metrics.actuator_energy << '\n';
  os << "empirical_msb," << metrics.empirical_msb << '\n';
  os << "max_abs_input," << metrics.max_abs_input << '\n';
  os << "fallbacks," << metrics.fallbacks << '\n';
}

void write_norm_series_csv(const std::filesystem::path& file, const Metrics& metrics) {
  std::ofstream os = open_csv(file);
  os << "t,avg_norm\n";
  for (Eigen::Index t = 0; t < metrics.avg_state_norm.size(); ++t) {
    os << t << ',' << metrics.avg_state_norm(t) << '\n';
  }
}

}  // namespace netsmpc
