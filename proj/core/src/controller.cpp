// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "netsmpc/controller.hpp"

#include <string>
#include <utility>

namespace netsmpc {

namespace {

ProtocolMoments make_protocol_moments(const ControllerConfig& cfg, const ControllerModel& model) {
  const Matrix M = model.lifted.calB.transpose() * model.costs.calQ * model.lifted.calB + model.costs.calR;
  return exact_protocol_moments(cfg.protocol, cfg.design_p, M, cfg.horizon, cfg.sys.input_dim(),
                                model.reach.kappa);
}

}  // namespace

ControllerModel prepare_controller_model(const ControllerConfig& cfg) {
  const DecompositionReport report = verify_decomposition(cfg.sys);
  if (!report.lyapunov_stable) throw ValidationError("plant decomposition rejected: " + report.message);
  if (cfg.noise.dim() != cfg.sys.state_dim()) {
    throw DimensionError("noise covariance is " + shape_of(cfg.noise.covariance) + " for a state of dimension " +
                         std::to_string(cfg.sys.state_dim()));
  }
  if (!(cfg.design_p > 0.0 && cfg.design_p <= 1.0)) throw ValidationError("design p must lie in ]0, 1]");
  if (cfg.horizon < 1) throw ValidationError("horizon N must be positive");
  if (!(cfg.sys.u_max > 0.0)) throw ValidationError("u_max must be positive");
  if (cfg.saturation.phi_max <= 0.0) throw ValidationError("phi_max must be positive");

  ControllerModel model;
  model.reach = compute_reachability(cfg.sys);
  if (model.reach.kappa > cfg.horizon) {
    throw ValidationError("reachability index " + std::to_string(model.reach.kappa) +
                          " exceeds the horizon N = " + std::to_string(cfg.horizon));
  }
  if (cfg.stability_constraints) validate_stability_config(cfg.stability, cfg.sys, model.reach);
  model.lifted = build_state_lift(cfg.sys, cfg.horizon);
  model.costs = build_cost_blocks(cfg.Q, cfg.Q_f, cfg.R, cfg.horizon);
  model.noise_moments = cached_noise_moments(cfg.moment_cache, cfg.noise, cfg.saturation, cfg.horizon,
                                             cfg.moment_samples, cfg.moment_seed, cfg.workers);
  return model;
}

Controller::Controller(ControllerConfig cfg, ControllerModel model)
    : cfg_(std::move(cfg)),
      model_(std::move(model)),
      layout_(cfg_.horizon, cfg_.sys.input_dim(), cfg_.sys.state_dim()),
      protocol_moments_(make_protocol_moments(cfg_, model_)),
      objective_(layout_, model_.lifted, model_.costs, protocol_moments_, model_.noise_moments),
      input_(build_input_constraints(layout_, cfg_.saturation.phi_max, cfg_.sys.u_max)) {}

Controller::Controller(const ControllerConfig& cfg) : Controller(cfg, prepare_controller_model(cfg)) {}

void Controller::reset() { previous_.reset(); }

QuadraticProgram Controller::build_qp(const Vector& x, long t_abs) const {
  LinearConstraints stability{Matrix::Zero(0, layout_.num_eta()), Vector::Zero(0)};
  if (cfg_.stability_constraints) {
    stability = build_stability_constraints(x, t_abs, cfg_.sys, model_.reach, cfg_.stability);
  }
  return assemble_qp(objective_.at(x), input_, stability, layout_);
}

PlanResult Controller::plan(const Vector& x, long t_abs, bool compare_cold) {
  const QuadraticProgram qp = build_qp(x, t_abs);
  PlanResult out;
  out.stability_rows = static_cast<int>(qp.num_constraints() - input_.size());

  const PolicyParams fallback = fallback_policy(x, t_abs, cfg_.sys, model_.reach, cfg_.stability, layout_);
  out.fallback_violation = qp.max_violation(layout_.pack(fallback));

  SolverSettings settings = cfg_.solver;
  if (cfg_.warm_start && previous_) {
    WarmStart ws;
    ws.z = previous_->z;
    ws.lambda = Vector::Zero(qp.num_constraints());
    ws.lambda.head(input_.size()) = previous_->lambda.head(input_.size());
    ws.rho = previous_->rho;
    settings.warm_start = std::move(ws);
  }
  const Solution sol = solve(qp, settings);
  out.status = sol.status;
  out.iterations = sol.iterations;
  if (compare_cold) {
    SolverSettings cold = cfg_.solver;
    cold.warm_start.reset();
    out.cold_iterations = solve(qp, cold).iterations;
  }

  if (sol.status == SolveStatus::Optimal) {
    out.policy = layout_.unpack(sol.z);
    previous_ = WarmStart{sol.z, sol.lambda, sol.rho};
  } else {
    out.policy = fallback;
    out.used_fallback = true;
    previous_.reset();
  }
  out.restored = restore_input_feasibility(out.policy, cfg_.saturation.phi_max, cfg_.sys.u_max);
  return out;
}

}  // namespace netsmpc
