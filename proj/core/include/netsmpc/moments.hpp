// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "netsmpc/model.hpp"

namespace netsmpc {

enum class SaturationKind { Sigmoid, Clamp };

/// Component-wise bounded odd map applied to measured noise before it enters
/// the feedback term. Sigmoid: (1 - e^{-x}) / (1 + e^{-x}), bounded by 1.
/// Clamp: projection onto [-phi_max, phi_max].
struct SaturationSpec {
  SaturationKind kind = SaturationKind::Sigmoid;
  double phi_max = 1.0;

  static SaturationSpec sigmoid() { return {SaturationKind::Sigmoid, 1.0}; }
  static SaturationSpec clamp(double phi_max) { return {SaturationKind::Clamp, phi_max}; }

  double apply(double x) const;
  std::string describe() const;
};

Vector saturate(const SaturationSpec& spec, const Vector& w);

/// Second moments of the stacked noise and its saturation over a horizon:
///   Sigma_e       = E[e(w_{0:N-1}) e(w_{0:N-1})^T]      (N-1)d square
///   Sigma_e_prime = E[w_{0:N} e(w_{0:N-1})^T]           Nd x (N-1)d
///   Sigma_W       = E[w_{0:N} w_{0:N}^T]                Nd square, exact
struct NoiseMoments {
  Matrix Sigma_e;
  Matrix Sigma_e_prime;
  Matrix Sigma_W;
  long samples = 0;
  std::uint64_t seed = 0;
};

inline constexpr long kDefaultMomentSamples = 1'000'000;
inline constexpr long kMomentChunk = 1L << 14;

/// Monte Carlo estimate. Samples are split into fixed chunks with their own
/// derived streams, so the result does not depend on `workers`.
NoiseMoments estimate_noise_moments(const NoiseModel& noise, const SaturationSpec& spec, int horizon,
                                    long samples = kDefaultMomentSamples, std::uint64_t seed = 1,
                                    int workers = 1);

/// blkdiag of `horizon` copies of the per-step covariance.
Matrix stacked_noise_covariance(const NoiseModel& noise, int horizon);

std::string noise_moments_key(const NoiseModel& noise, const SaturationSpec& spec, int horizon,
                              long samples, std::uint64_t seed);

void save_noise_moments(const std::filesystem::path& file, const std::string& key,
                        const NoiseMoments& moments);
/// Empty when the file is missing, unreadable, or stores a different key.
std::optional<NoiseMoments> load_noise_moments(const std::filesystem::path& file,
                                               const std::string& key);

/// Estimate, or reuse `cache_dir`/<hash>.bin when it holds the same key.
/// An empty cache_dir disables caching.
NoiseMoments cached_noise_moments(const std::filesystem::path& cache_dir, const NoiseModel& noise,
                                  const SaturationSpec& spec, int horizon, long samples,
                                  std::uint64_t seed, int workers = 1);

}  // namespace netsmpc
