// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "netsmpc/channel.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

namespace netsmpc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_probability(double p, const char* what) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ValidationError(std::string(what) + " must lie in ]0,1], got " + std::to_string(p));
  }
}

int draw_state(const Vector& distribution, Engine& engine) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(engine);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < distribution.size(); ++i) {
    acc += distribution(i);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(distribution.size() - 1);
}

void check_window(DropoutWindow nu, int horizon, int m) {
  if (horizon < 1 || m < 1) throw ValidationError("horizon and m must be positive");
  if (nu.empty() || static_cast<int>(nu.size()) > horizon) {
    throw DimensionError("dropout window of length " + std::to_string(nu.size()) +
                         " does not fit a horizon of " + std::to_string(horizon));
  }
}

Vector expand_blocks(const std::vector<double>& block_values, int horizon, int m) {
  Vector diag = Vector::Ones(static_cast<Eigen::Index>(horizon) * m);
  for (std::size_t i = 0; i < block_values.size(); ++i) {
    diag.segment(static_cast<Eigen::Index>(i) * m, m).setConstant(block_values[i]);
  }
  return diag;
}

}  // namespace

void validate_channel(const ChannelModel& channel) {
  std::visit(overloaded{
                 [](const IidChannel& c) { check_probability(c.p, "success probability p"); },
                 [](const MarkovChannel& c) {
                   const auto n = static_cast<Eigen::Index>(c.success.size());
                   if (n == 0) throw ValidationError("Markov channel needs at least one state");
                   if (c.transition.rows() != n || c.transition.cols() != n) {
                     throw DimensionError("transition matrix is " + shape_of(c.transition) +
                                          " for " + std::to_string(n) + " network states");
                   }
                   for (double p : c.success) check_probability(p, "per-state success probability");
                   for (Eigen::Index i = 0; i < n; ++i) {
                     if (c.transition.row(i).minCoeff() < 0.0 ||
                         std::abs(c.transition.row(i).sum() - 1.0) > 1e-12) {
                       throw ValidationError("transition row " + std::to_string(i) +
                                             " is not a probability vector");
                     }
                   }
                   if (c.initial_state < 0 || c.initial_state >= n) {
                     throw ValidationError("initial network state out of range");
                   }
                 }},
             channel);
}

Vector stationary_distribution(const Matrix& transition) {
  // Solve pi (P - I) = 0 with sum(pi) = 1 as a least-squares system.
  const auto n = transition.rows();
  Matrix system(n + 1, n);
  system.topRows(n) = (transition - Matrix::Identity(n, n)).transpose();
  system.row(n).setOnes();
  Vector rhs = Vector::Zero(n + 1);
  rhs(n) = 1.0;
  Vector pi = system.colPivHouseholderQr().solve(rhs);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

double mean_success_rate(const ChannelModel& channel) {
  return std::visit(overloaded{[](const IidChannel& c) { return c.p; },
                               [](const MarkovChannel& c) {
                                 const Vector pi = stationary_distribution(c.transition);
                                 double rate = 0.0;
                                 for (std::size_t i = 0; i < c.success.size(); ++i) {
                                   rate += pi(static_cast<Eigen::Index>(i)) * c.success[i];
                                 }
                                 return rate;
                               }},
                    channel);
}

DropoutProcess::DropoutProcess(ChannelModel channel) : channel_(std::move(channel)) {
  validate_channel(channel_);
  reset();
}

void DropoutProcess::reset() {
  state_ = std::holds_alternative<MarkovChannel>(channel_)
               ? std::get<MarkovChannel>(channel_).initial_state
               : 0;
}

void DropoutProcess::reset_stationary(Engine& engine) {
  if (const auto* markov = std::get_if<MarkovChannel>(&channel_)) {
    state_ = draw_state(stationary_distribution(markov->transition), engine);
  }
}

std::uint8_t DropoutProcess::next(Engine& engine) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (const auto* iid = std::get_if<IidChannel>(&channel_)) {
    return unif(engine) < iid->p ? 1 : 0;
  }
  const auto& markov = std::get<MarkovChannel>(channel_);
  const std::uint8_t nu = unif(engine) < markov.success[static_cast<std::size_t>(state_)] ? 1 : 0;
  state_ = draw_state(markov.transition.row(state_).transpose(), engine);
  return nu;
}

std::vector<std::uint8_t> sample_dropouts(const ChannelModel& channel, int horizon, Engine& engine) {
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  DropoutProcess process(channel);
  std::vector<std::uint8_t> nu(static_cast<std::size_t>(horizon));
  for (auto& v : nu) v = process.next(engine);
  return nu;
}

std::string_view to_string(Protocol protocol) {
  switch (protocol) {
    case Protocol::TP1: return "TP1";
    case Protocol::TP2: return "TP2";
    case Protocol::TP3: return "TP3";
  }
  return "?";
}

Protocol protocol_from_string(std::string_view name) {
  if (name == "TP1" || name == "tp1") return Protocol::TP1;
  if (name == "TP2" || name == "tp2") return Protocol::TP2;
  if (name == "TP3" || name == "tp3") return Protocol::TP3;
  throw ValidationError("unknown protocol '" + std::string(name) + "'");
}

std::vector<std::uint8_t> first_success_indicators(DropoutWindow nu) {
  std::vector<std::uint8_t> rho(nu.size());
  std::uint8_t seen = 0;
  for (std::size_t l = 0; l < nu.size(); ++l) {
    seen = seen | nu[l];
    rho[l] = seen;
  }
  return rho;
}

Vector selection_diagonal(Protocol protocol, DropoutWindow nu, int horizon, int m) {
  check_window(nu, horizon, m);
  std::vector<double> blocks(nu.size());
  switch (protocol) {
    case Protocol::TP1:
      for (std::size_t i = 0; i < nu.size(); ++i) blocks[i] = nu[i];
      break;
    case Protocol::TP2:
      for (auto& b : blocks) b = nu[0];
      break;
    case Protocol::TP3: {
      const auto rho = first_success_indicators(nu);
      for (std::size_t i = 0; i < nu.size(); ++i) blocks[i] = rho[i];
      break;
    }
  }
  return expand_blocks(blocks, horizon, m);
}

Matrix build_selection(Protocol protocol, DropoutWindow nu, int horizon, int m) {
  return selection_diagonal(protocol, nu, horizon, m).asDiagonal();
}

Matrix build_selection_S(DropoutWindow nu, int horizon, int m) {
  return build_selection(Protocol::TP1, nu, horizon, m);
}
Matrix build_selection_K(DropoutWindow nu, int horizon, int m) {
  return build_selection(Protocol::TP2, nu, horizon, m);
}
Matrix build_selection_G(DropoutWindow nu, int horizon, int m) {
  return build_selection(Protocol::TP3, nu, horizon, m);
}

namespace {

void check_moment_inputs(const Matrix& M, int horizon, int m, int kappa) {
  const auto n = static_cast<Eigen::Index>(horizon) * m;
  if (M.rows() != n || M.cols() != n) {
    throw DimensionError("M is " + shape_of(M) + ", expected " + std::to_string(n) + " square");
  }
  if (kappa < 1 || kappa > horizon) throw ValidationError("kappa must lie in [1, N]");
}

// Moments of the kappa scalar block multipliers of a diagonal selection.
struct BlockMoments {
  Vector mean_x, mean_s;
  Matrix second_x, second_s;

  explicit BlockMoments(int kappa)
      : mean_x(Vector::Zero(kappa)),
        mean_s(Vector::Zero(kappa)),
        second_x(Matrix::Zero(kappa, kappa)),
        second_s(Matrix::Zero(kappa, kappa)) {}

  void add(double weight, const Vector& xb, const Vector& sb) {
    mean_x += weight * xb;
    mean_s += weight * sb;
    second_x.noalias() += weight * xb * xb.transpose();
    second_s.noalias() += weight * sb * sb.transpose();
  }
};

void fill_block_pattern(Protocol protocol, DropoutWindow nu, Vector& xb, Vector& sb) {
  const auto rho = first_success_indicators(nu);
  for (std::size_t i = 0; i < nu.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    sb(ii) = nu[i];
    switch (protocol) {
      case Protocol::TP1: xb(ii) = nu[i]; break;
      case Protocol::TP2: xb(ii) = nu[0]; break;
      case Protocol::TP3: xb(ii) = rho[i]; break;
    }
  }
}

// Blocks past kappa are deterministic ones. Since every selection is
// diagonal, X^T M X = M .* (x x^T).
void expand(const Vector& mean_b, const Matrix& second_b, int horizon, int m, Vector& mean,
            Matrix& second) {
  const auto kappa = mean_b.size();
  Vector mean_blocks = Vector::Ones(horizon);
  mean_blocks.head(kappa) = mean_b;
  Matrix second_blocks = mean_blocks * mean_blocks.transpose();
  second_blocks.topLeftCorner(kappa, kappa) = second_b;
  const auto n = static_cast<Eigen::Index>(horizon) * m;
  mean.resize(n);
  second.resize(n, n);
  for (int i = 0; i < horizon; ++i) {
    mean.segment(i * m, m).setConstant(mean_blocks(i));
    for (int j = 0; j < horizon; ++j) {
      second.block(i * m, j * m, m, m).setConstant(second_blocks(i, j));
    }
  }
}

ProtocolMoments finish(const BlockMoments& b, const Matrix& M, int horizon, int m) {
  Vector mean_x, mean_s;
  Matrix second_x, second_s;
  expand(b.mean_x, b.second_x, horizon, m, mean_x, second_x);
  expand(b.mean_s, b.second_s, horizon, m, mean_s, second_s);
  ProtocolMoments out;
  out.mu = mean_x.asDiagonal();
  out.Sigma = M.cwiseProduct(second_x);
  out.mu_S = mean_s.asDiagonal();
  out.Sigma_S = M.cwiseProduct(second_s);
  return out;
}

}  // namespace

ProtocolMoments exact_protocol_moments(Protocol protocol, double p, const Matrix& M, int horizon,
                                       int m, int kappa) {
  check_moment_inputs(M, horizon, m, kappa);
  check_probability(p, "success probability p");
  if (kappa > kMaxEnumerationWindow) {
    throw ValidationError("kappa = " + std::to_string(kappa) +
                          " is too large for exact enumeration; use mc_protocol_moments");
  }
  BlockMoments acc(kappa);
  std::vector<std::uint8_t> nu(static_cast<std::size_t>(kappa));
  Vector xb(kappa), sb(kappa);
  const unsigned long patterns = 1UL << kappa;
  for (unsigned long code = 0; code < patterns; ++code) {
    double prob = 1.0;
    for (int i = 0; i < kappa; ++i) {
      const auto bit = static_cast<std::uint8_t>((code >> i) & 1UL);
      nu[static_cast<std::size_t>(i)] = bit;
      prob *= bit ? p : (1.0 - p);
    }
    if (prob == 0.0) continue;
    fill_block_pattern(protocol, nu, xb, sb);
    acc.add(prob, xb, sb);
  }
  return finish(acc, M, horizon, m);
}

ProtocolMoments mc_protocol_moments(Protocol protocol, const ChannelModel& channel, const Matrix& M,
                                    int horizon, int m, int kappa, long samples, std::uint64_t seed) {
  check_moment_inputs(M, horizon, m, kappa);
  if (samples < 1) throw ValidationError("samples must be at least 1");
  DropoutProcess process(channel);
  Engine engine = make_engine(seed, 0x636861);

  BlockMoments acc(kappa);
  std::vector<std::uint8_t> nu(static_cast<std::size_t>(kappa));
  Vector xb(kappa), sb(kappa);
  for (long k = 0; k < samples; ++k) {
    process.reset_stationary(engine);
    for (auto& v : nu) v = process.next(engine);
    fill_block_pattern(protocol, nu, xb, sb);
    acc.add(1.0, xb, sb);
  }
  const double inv = 1.0 / static_cast<double>(samples);
  acc.mean_x *= inv;
  acc.mean_s *= inv;
  acc.second_x *= inv;
  acc.second_s *= inv;
  return finish(acc, M, horizon, m);
}

}  // namespace netsmpc
