// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "netsmpc/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace netsmpc {

double QuadraticProgram::max_violation(const Vector& z) const {
  if (b.size() == 0) return 0.0;
  return std::max(0.0, (A * z - b).maxCoeff());
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIterations: return "max_iterations";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

KktResiduals check_kkt(const QuadraticProgram& qp, const Vector& z, const Vector& lambda) {
  KktResiduals res;
  Vector grad = qp.P * z + qp.q;
  if (qp.b.size() > 0) {
    grad += qp.A.transpose() * lambda;
    const Vector slack = qp.A * z - qp.b;
    res.primal = std::max(0.0, slack.maxCoeff());
    res.complementarity = std::abs(lambda.dot(slack));
  }
  res.stationarity = grad.size() > 0 ? grad.lpNorm<Eigen::Infinity>() : 0.0;
  return res;
}

namespace {

double inf_norm(const Vector& v) { return v.size() > 0 ? v.lpNorm<Eigen::Infinity>() : 0.0; }

void validate(const QuadraticProgram& qp) {
  const auto n = qp.q.size();
  if (qp.P.rows() != n || qp.P.cols() != n) {
    throw DimensionError("P is " + shape_of(qp.P) + " but q has length " + std::to_string(n));
  }
  if (qp.A.rows() != qp.b.size() || (qp.b.size() > 0 && qp.A.cols() != n)) {
    throw DimensionError("A is " + shape_of(qp.A) + " with " + std::to_string(qp.b.size()) +
                         " bounds over " + std::to_string(n) + " variables");
  }
  if (!qp.P.allFinite() || !qp.q.allFinite() || !qp.A.allFinite() || !qp.b.allFinite()) {
    throw ValidationError("QP data contains non-finite values");
  }
}

// Ruiz equilibration of the KKT matrix: P_s = c D P D, A_s = E A D.
struct Scaling {
  Vector D;
  Vector E;
  double c = 1.0;
};

Scaling equilibrate(const QuadraticProgram& qp, int passes = 15) {
  const auto n = qp.q.size();
  const auto m = qp.b.size();
  Scaling s{Vector::Ones(n), Vector::Ones(m), 1.0};
  Matrix P = qp.P;
  Matrix A = qp.A;
  auto clip = [](double v) { return v < 1e-4 ? 1.0 : std::min(v, 1e4); };
  for (int pass = 0; pass < passes; ++pass) {
    Vector dn(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double col = P.col(j).lpNorm<Eigen::Infinity>();
      if (m > 0) col = std::max(col, A.col(j).lpNorm<Eigen::Infinity>());
      dn(j) = 1.0 / std::sqrt(clip(col));
    }
    Vector em(m);
    for (Eigen::Index i = 0; i < m; ++i) em(i) = 1.0 / std::sqrt(clip(A.row(i).lpNorm<Eigen::Infinity>()));
    P = dn.asDiagonal() * P * dn.asDiagonal();
    if (m > 0) A = em.asDiagonal() * A * dn.asDiagonal();
    s.D = s.D.cwiseProduct(dn);
    s.E = s.E.cwiseProduct(em);
  }
  // Cost scaling keeps the gradient on the order of one.
  double mean_col = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) mean_col += P.col(j).lpNorm<Eigen::Infinity>();
  mean_col = n > 0 ? mean_col / static_cast<double>(n) : 1.0;
  const double qn = inf_norm(s.D.cwiseProduct(qp.q));
  s.c = 1.0 / clip(std::max(mean_col, qn));
  return s;
}

struct Tolerances {
  double primal;
  double dual;
  double comp;
};

Tolerances kkt_thresholds(const QuadraticProgram& qp, const Vector& z, const Vector& lambda, double tol) {
  const double pz = inf_norm(qp.P * z);
  const double atl = qp.b.size() > 0 ? inf_norm(qp.A.transpose() * lambda) : 0.0;
  const double az = qp.b.size() > 0 ? inf_norm(qp.A * z) : 0.0;
  const double dual_scale = 1.0 + std::max({pz, atl, inf_norm(qp.q)});
  const double primal_scale = 1.0 + std::max(az, inf_norm(qp.b));
  return {tol * primal_scale, tol * dual_scale, tol * dual_scale * primal_scale};
}

bool certified(const QuadraticProgram& qp, const Vector& z, const Vector& lambda, double tol,
               KktResiduals* out) {
  if (lambda.size() > 0 && lambda.minCoeff() < 0.0) return false;
  const KktResiduals r = check_kkt(qp, z, lambda);
  if (out) *out = r;
  const Tolerances t = kkt_thresholds(qp, z, lambda, tol);
  return r.stationarity <= t.dual && r.primal <= t.primal && r.complementarity <= t.comp;
}

// Equality-constrained solve on a guessed active set; regularized KKT with
// iterative refinement against the exact system.
bool polish(const QuadraticProgram& qp, const Vector& lambda_guess, const Vector& slack_guess,
            Vector& z_out, Vector& lambda_out) {
  const auto n = qp.q.size();
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < qp.b.size(); ++i) {
    if (slack_guess(i) > -lambda_guess(i)) active.push_back(i);
  }
  const auto k = static_cast<Eigen::Index>(active.size());
  Matrix Aact(k, n);
  Vector bact(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    Aact.row(r) = qp.A.row(active[r]);
    bact(r) = qp.b(active[r]);
  }
  const double delta = 1e-9 * std::max(1.0, qp.P.cwiseAbs().maxCoeff());
  Matrix K = Matrix::Zero(n + k, n + k);
  K.topLeftCorner(n, n) = qp.P;
  K.topRightCorner(n, k) = Aact.transpose();
  K.bottomLeftCorner(k, n) = Aact;
  Matrix Kreg = K;
  Kreg.topLeftCorner(n, n).diagonal().array() += delta;
  Kreg.bottomRightCorner(k, k).diagonal().array() -= delta;
  Eigen::PartialPivLU<Matrix> lu(Kreg);
  Vector rhs(n + k);
  rhs << -qp.q, bact;
  Vector sol = lu.solve(rhs);
  for (int it = 0; it < 5; ++it) sol += lu.solve(rhs - K * sol);
  if (!sol.allFinite()) return false;
  z_out = sol.head(n);
  lambda_out = Vector::Zero(qp.b.size());
  for (Eigen::Index r = 0; r < k; ++r) lambda_out(active[r]) = std::max(0.0, sol(n + r));
  return true;
}

}  // namespace

Solution solve(const QuadraticProgram& qp, const SolverSettings& settings) {
  validate(qp);
  if (!(settings.tolerance > 0.0) || !(settings.rho > 0.0) || !(settings.sigma > 0.0) ||
      !(settings.alpha > 0.0 && settings.alpha < 2.0) || settings.check_interval < 1) {
    throw ValidationError("invalid solver settings");
  }
  const auto n = qp.q.size();
  const auto m = qp.b.size();
  Solution sol;

  const Scaling sc = equilibrate(qp);
  const Matrix Ps = sc.c * (sc.D.asDiagonal() * qp.P * sc.D.asDiagonal());
  const Vector qs = sc.c * sc.D.cwiseProduct(qp.q);
  const Matrix As = m > 0 ? Matrix(sc.E.asDiagonal() * qp.A * sc.D.asDiagonal()) : Matrix(0, n);
  const Vector bs = sc.E.cwiseProduct(qp.b);
  const Matrix AtA = As.transpose() * As;

  Vector x = Vector::Zero(n);
  Vector y = Vector::Zero(m);
  if (settings.warm_start) {
    const auto& ws = *settings.warm_start;
    if (ws.z.size() == n) x = ws.z.cwiseQuotient(sc.D);
    if (ws.lambda.size() == m) y = sc.c * ws.lambda.cwiseQuotient(sc.E);
  }
  Vector z = m > 0 ? Vector((As * x).cwiseMin(bs)) : Vector(0);

  double rho = settings.rho;
  if (settings.warm_start && settings.warm_start->rho > 0.0) rho = settings.warm_start->rho;
  const double sigma = settings.sigma;
  const double alpha = settings.alpha;
  Eigen::LLT<Matrix> llt;
  auto factor = [&]() {
    Matrix K = Ps + rho * AtA;
    K.diagonal().array() += sigma;
    llt.compute(K);
    if (llt.info() != Eigen::Success) throw std::runtime_error("QP linear system factorization failed");
  };
  factor();

  auto unscale_x = [&](const Vector& v) { return Vector(sc.D.cwiseProduct(v)); };
  auto unscale_y = [&](const Vector& v) { return Vector(sc.E.cwiseProduct(v) / sc.c); };

  bool converged = false;
  Vector x_prev, z_prev, y_prev;
  int iter = 0;
  for (iter = 1; iter <= settings.max_iterations; ++iter) {
    x_prev = x;
    z_prev = z;
    y_prev = y;
    Vector rhs = sigma * x - qs;
    if (m > 0) rhs += As.transpose() * (rho * z - y);
    const Vector xt = llt.solve(rhs);
    x = alpha * xt + (1.0 - alpha) * x_prev;
    if (m > 0) {
      const Vector zt = As * xt;
      const Vector zr = alpha * zt + (1.0 - alpha) * z_prev;
      z = (zr + y / rho).cwiseMin(bs);
      y = y + rho * (zr - z);
    }
    if (settings.record_merit) {
      const double dx = (x - x_prev).squaredNorm();
      const double dz = m > 0 ? (z - z_prev).squaredNorm() : 0.0;
      const double dy = m > 0 ? (y - y_prev).squaredNorm() : 0.0;
      sol.merit.push_back(std::sqrt(sigma * dx + rho * dz + dy / rho));
    }
    const bool check = iter % settings.check_interval == 0 || iter == settings.max_iterations;
    if (!check) continue;

    // Termination is judged on the original problem so that convergence
    // implies the certificate below; rho adapts on the scaled residuals.
    const Vector Ax = m > 0 ? Vector(As * x) : Vector(0);
    const Vector Px = Ps * x;
    const Vector Aty = m > 0 ? Vector(As.transpose() * y) : Vector::Zero(n);
    const double r_prim = m > 0 ? inf_norm(Ax - z) : 0.0;
    const double r_dual = inf_norm(Px + qs + Aty);
    const double prim_scale = std::max(inf_norm(Ax), inf_norm(z));
    const double dual_scale = std::max({inf_norm(Px), inf_norm(Aty), inf_norm(qs)});
    {
      const Vector xu = unscale_x(x);
      const Vector yu = m > 0 ? unscale_y(y) : Vector(0);
      const Tolerances t = kkt_thresholds(qp, xu, yu, settings.tolerance);
      const KktResiduals r = check_kkt(qp, xu, yu);
      const double gap = m > 0 ? inf_norm((qp.A * xu) - z.cwiseQuotient(sc.E)) : 0.0;
      if (gap <= t.primal && r.stationarity <= t.dual && r.complementarity <= t.comp) {
        converged = true;
        break;
      }
    }

    if (m > 0) {
      const Vector dy = sc.E.cwiseProduct(y - y_prev);
      const double dy_norm = inf_norm(dy);
      if (dy_norm > 0.0 && dy.minCoeff() >= -settings.infeasibility_tolerance * dy_norm) {
        const double atdy = inf_norm(qp.A.transpose() * dy);
        const double bdy = qp.b.dot(dy);
        if (atdy <= settings.infeasibility_tolerance * dy_norm &&
            bdy < -settings.infeasibility_tolerance * dy_norm) {
          sol.status = SolveStatus::Infeasible;
          sol.iterations = iter;
          sol.z = unscale_x(x);
          sol.lambda = dy / dy_norm;
          sol.objective = qp.objective(sol.z);
          return sol;
        }
      }
    }

    if (settings.adaptive_rho && m > 0 && iter % settings.adapt_interval == 0) {
      const double num = r_prim / std::max(prim_scale, 1e-30);
      const double den = r_dual / std::max(dual_scale, 1e-30);
      if (num > 0.0 && den > 0.0) {
        const double rho_new = std::clamp(rho * std::sqrt(num / den), 1e-6, 1e6);
        if (rho_new > 5.0 * rho || rho_new < 0.2 * rho) {
          rho = rho_new;
          factor();
          sol.rho_updates.push_back(iter);
        }
      }
    }
  }
  sol.iterations = std::min(iter, settings.max_iterations);
  sol.rho = rho;

  Vector z_admm = unscale_x(x);
  Vector lambda_admm = m > 0 ? Vector(unscale_y(y).cwiseMax(0.0)) : Vector(0);

  KktResiduals res;
  if (settings.polish) {
    Vector zp, lp;
    // Slack z - b in original units: active when b - z < y.
    const Vector slack = (z - bs).cwiseQuotient(sc.E);
    if (polish(qp, unscale_y(y), slack, zp, lp) && certified(qp, zp, lp, settings.tolerance, &res)) {
      sol.z = zp;
      sol.lambda = lp;
      sol.polished = true;
      sol.status = SolveStatus::Optimal;
    }
  }
  if (!sol.polished) {
    sol.z = z_admm;
    sol.lambda = lambda_admm;
    const bool ok = certified(qp, z_admm, lambda_admm, settings.tolerance, &res);
    if (!ok) res = check_kkt(qp, z_admm, lambda_admm);
    sol.status = (converged && ok) ? SolveStatus::Optimal : SolveStatus::MaxIterations;
    if (m == 0 && converged) sol.status = SolveStatus::Optimal;
  }
  sol.primal_residual = res.primal;
  sol.dual_residual = res.stationarity;
  sol.complementarity = res.complementarity;
  sol.objective = qp.objective(sol.z);
  return sol;
}

void write_qp(std::ostream& os, const QuadraticProgram& qp) {
  validate(qp);
  const auto old_precision = os.precision();
  os << std::setprecision(17);
  os << "netsmpc-qp " << qp.num_vars() << ' ' << qp.num_constraints() << ' ' << qp.constant << '\n';
  auto write_row = [&os](const auto& row) {
    for (Eigen::Index j = 0; j < row.size(); ++j) os << (j ? " " : "") << row(j);
    os << '\n';
  };
  for (Eigen::Index i = 0; i < qp.P.rows(); ++i) write_row(qp.P.row(i));
  write_row(qp.q);
  for (Eigen::Index i = 0; i < qp.A.rows(); ++i) write_row(qp.A.row(i));
  write_row(qp.b);
  os.precision(old_precision);
}

QuadraticProgram read_qp(std::istream& is) {
  std::string tag;
  long n = -1, rows = -1;
  QuadraticProgram qp;
  if (!(is >> tag >> n >> rows >> qp.constant) || tag != "netsmpc-qp" || n < 0 || rows < 0) {
    throw ValidationError("not a netsmpc-qp stream");
  }
  auto read = [&is](double& v, const char* what) {
    if (!(is >> v)) throw ValidationError(std::string("truncated QP stream while reading ") + what);
  };
  qp.P.resize(n, n);
  qp.q.resize(n);
  qp.A.resize(rows, n);
  qp.b.resize(rows);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) read(qp.P(i, j), "P");
  for (long i = 0; i < n; ++i) read(qp.q(i), "q");
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < n; ++j) read(qp.A(i, j), "A");
  for (long i = 0; i < rows; ++i) read(qp.b(i), "b");
  validate(qp);
  return qp;
}

}  // namespace netsmpc
