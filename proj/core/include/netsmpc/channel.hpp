// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "netsmpc/types.hpp"

namespace netsmpc {

/// Independent Bernoulli(p) successes.
struct IidChannel {
  double p = 1.0;
};

/// Network-state process: a finite Markov chain whose state selects the
/// per-step success probability.
struct MarkovChannel {
  std::vector<double> success;  // p_i per network state
  Matrix transition;            // row-stochastic, P(i, j) = Pr{next = j | now = i}
  int initial_state = 0;
};

using ChannelModel = std::variant<IidChannel, MarkovChannel>;

/// Throws ValidationError unless probabilities are in ]0, 1] and rows of the
/// transition matrix sum to one (1e-12).
void validate_channel(const ChannelModel& channel);

/// Stationary distribution of a row-stochastic matrix.
Vector stationary_distribution(const Matrix& transition);

/// Long-run success rate of the channel.
double mean_success_rate(const ChannelModel& channel);

/// Step-by-step dropout generator. For the Markov model, nu_t is drawn from
/// the current network state, then the state advances.
class DropoutProcess {
 public:
  explicit DropoutProcess(ChannelModel channel);

  std::uint8_t next(Engine& engine);
  void reset();
  /// Starts the network state from a draw of the stationary distribution.
  void reset_stationary(Engine& engine);

 private:
  ChannelModel channel_;
  int state_ = 0;
};

std::vector<std::uint8_t> sample_dropouts(const ChannelModel& channel, int horizon, Engine& engine);

enum class Protocol { TP1, TP2, TP3 };

inline constexpr Protocol kAllProtocols[] = {Protocol::TP1, Protocol::TP2, Protocol::TP3};

std::string_view to_string(Protocol protocol);
Protocol protocol_from_string(std::string_view name);

using DropoutWindow = std::span<const std::uint8_t>;

// All three selection operators are diagonal with scalar x I_m blocks. The
// *_diagonal helpers return that diagonal; the build_* forms return the
// dense Nm x Nm matrix. `nu` holds nu_t .. nu_{t+kappa-1}, kappa <= N.

/// Per-step transmission: blocks i < kappa are nu_{t+i} I_m, the rest I_m.
Matrix build_selection_S(DropoutWindow nu, int horizon, int m);
/// Burst transmission: the first kappa blocks all share nu_t.
Matrix build_selection_K(DropoutWindow nu, int horizon, int m);
/// Repeated offset transmission: block l < kappa is rho_{t+l} I_m with
/// rho = 1 once any nu_{t+s}, s <= l, succeeded.
Matrix build_selection_G(DropoutWindow nu, int horizon, int m);

Vector selection_diagonal(Protocol protocol, DropoutWindow nu, int horizon, int m);
Matrix build_selection(Protocol protocol, DropoutWindow nu, int horizon, int m);

/// rho_{t}, ..., rho_{t+kappa-1}
std::vector<std::uint8_t> first_success_indicators(DropoutWindow nu);

/// mu = E[X], Sigma = E[X^T M X] for the protocol's selection X, and the
/// per-step pair (mu_S, Sigma_S) used by the feedback terms.
struct ProtocolMoments {
  Matrix mu;
  Matrix Sigma;
  Matrix mu_S;
  Matrix Sigma_S;
};

inline constexpr int kMaxEnumerationWindow = 24;

/// Exact moments under an IID channel by enumerating the 2^kappa dropout
/// patterns. Refuses kappa > 24 (use mc_protocol_moments instead).
ProtocolMoments exact_protocol_moments(Protocol protocol, double p, const Matrix& M, int horizon,
                                       int m, int kappa);

/// Sampled moments; deterministic given the seed. Markov windows start from
/// the stationary network-state distribution.
ProtocolMoments mc_protocol_moments(Protocol protocol, const ChannelModel& channel, const Matrix& M,
                                    int horizon, int m, int kappa, long samples, std::uint64_t seed);

}  // namespace netsmpc
