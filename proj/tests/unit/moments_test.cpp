// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "netsmpc/moments.hpp"

namespace netsmpc {
namespace {

TEST(Saturation, Examples) {
  const SaturationSpec sig = SaturationSpec::sigmoid();
  EXPECT_EQ(sig.apply(0.0), 0.0);
  EXPECT_GT(sig.apply(10.0), 0.9999);
  EXPECT_NEAR(sig.apply(10.0), (1.0 - std::exp(-10.0)) / (1.0 + std::exp(-10.0)), 1e-15);
  EXPECT_EQ(sig.apply(1e300), 1.0);
  EXPECT_EQ(sig.apply(-1e300), -1.0);
  const SaturationSpec clamp = SaturationSpec::clamp(2.0);
  const Vector out = saturate(clamp, (Vector(2) << 3.0, -0.5).finished());
  EXPECT_EQ(out(0), 2.0);
  EXPECT_EQ(out(1), -0.5);
}

TEST(Saturation, OddAndBounded) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 5.0);
  for (const auto& spec : {SaturationSpec::sigmoid(), SaturationSpec::clamp(0.7)}) {
    for (int i = 0; i < 10000; ++i) {
      const double x = n(rng);
      EXPECT_EQ(spec.apply(-x), -spec.apply(x));
      EXPECT_LE(std::abs(spec.apply(x)), spec.phi_max);
    }
  }
}

TEST(Saturation, ZeroMeanUnderSymmetricNoise) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.5);
  const SaturationSpec sig = SaturationSpec::sigmoid();
  const int samples = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double v = sig.apply(n(rng));
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / samples;
  const double se = std::sqrt((sum_sq / samples - mean * mean) / samples);
  EXPECT_LT(std::abs(mean), 3.0 * se);
}

TEST(NoiseMoments, ZeroCovariance) {
  const auto nm = estimate_noise_moments(NoiseModel{Matrix::Zero(2, 2)}, SaturationSpec::sigmoid(), 3, 20000, 1);
  EXPECT_EQ(nm.Sigma_e.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(nm.Sigma_e_prime.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(nm.Sigma_W.cwiseAbs().maxCoeff(), 0.0);
}

TEST(NoiseMoments, ScalarGaussianAgainstIndependentOracle) {
  const long samples = 400000;
  const auto nm = estimate_noise_moments(NoiseModel{Matrix::Identity(1, 1)}, SaturationSpec::sigmoid(), 2, samples, 3);
  ASSERT_EQ(nm.Sigma_e.rows(), 1);
  ASSERT_EQ(nm.Sigma_e_prime.rows(), 2);
  // Independent estimate with a different generator.
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> n;
  double ee = 0.0, xe = 0.0;
  for (long i = 0; i < samples; ++i) {
    const double x = n(rng);
    const double e = std::tanh(0.5 * x);
    ee += e * e;
    xe += x * e;
  }
  ee /= samples;
  xe /= samples;
  const double tol = 3.0 / std::sqrt(static_cast<double>(samples));
  EXPECT_NEAR(nm.Sigma_e(0, 0), ee, tol);
  EXPECT_NEAR(nm.Sigma_e_prime(0, 0), xe, tol);
  EXPECT_GT(nm.Sigma_e_prime(0, 0), 0.0);
  EXPECT_NEAR(nm.Sigma_e_prime(1, 0), 0.0, tol);
  EXPECT_EQ(nm.Sigma_W(0, 0), 1.0);
}

TEST(NoiseMoments, TemporalIndependenceForReferenceNoise) {
  const long samples = 200000;
  const int N = 4, d = 3;
  const auto nm = estimate_noise_moments(NoiseModel{2.0 * Matrix::Identity(3, 3)}, SaturationSpec::sigmoid(), N, samples, 5);
  const double tol = 5.0 / std::sqrt(static_cast<double>(samples));
  for (int i = 0; i < N - 1; ++i) {
    for (int j = 0; j < N - 1; ++j) {
      if (i != j) {
        EXPECT_LT(nm.Sigma_e.block(d * i, d * j, d, d).norm(), tol);
      }
    }
  }
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N - 1; ++j) {
      const Matrix blk = nm.Sigma_e_prime.block(d * i, d * j, d, d);
      if (i != j) {
        EXPECT_LT(blk.norm(), tol);
      } else {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (blk + blk.transpose()));
        EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
      }
    }
  }
  EXPECT_TRUE(nm.Sigma_W.isApprox(2.0 * Matrix::Identity(12, 12)));
  EXPECT_LT((nm.Sigma_e - nm.Sigma_e.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NoiseMoments, DeterministicAcrossWorkerCounts) {
  const NoiseModel noise{2.0 * Matrix::Identity(3, 3)};
  const auto a = estimate_noise_moments(noise, SaturationSpec::sigmoid(), 4, 100000, 9, 1);
  const auto b = estimate_noise_moments(noise, SaturationSpec::sigmoid(), 4, 100000, 9, 3);
  const auto c = estimate_noise_moments(noise, SaturationSpec::sigmoid(), 4, 100000, 9, 1);
  EXPECT_EQ((a.Sigma_e - b.Sigma_e).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.Sigma_e_prime - b.Sigma_e_prime).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.Sigma_e - c.Sigma_e).cwiseAbs().maxCoeff(), 0.0);
  const auto other = estimate_noise_moments(noise, SaturationSpec::sigmoid(), 4, 100000, 10, 1);
  EXPECT_GT((a.Sigma_e - other.Sigma_e).cwiseAbs().maxCoeff(), 0.0);
}

TEST(NoiseMoments, CacheRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "netsmpc_moment_cache_test";
  std::filesystem::remove_all(dir);
  const NoiseModel noise{Matrix::Identity(2, 2)};
  const auto spec = SaturationSpec::sigmoid();
  const auto first = cached_noise_moments(dir, noise, spec, 3, 20000, 4);
  ASSERT_TRUE(std::filesystem::exists(dir));
  const auto second = cached_noise_moments(dir, noise, spec, 3, 20000, 4);
  EXPECT_EQ((first.Sigma_e - second.Sigma_e).cwiseAbs().maxCoeff(), 0.0);
  const std::string key = noise_moments_key(noise, spec, 3, 20000, 4);
  EXPECT_FALSE(load_noise_moments(dir / "missing.bin", key).has_value());
  const auto file = dir / "copy.bin";
  save_noise_moments(file, key, first);
  EXPECT_TRUE(load_noise_moments(file, key).has_value());
  EXPECT_FALSE(load_noise_moments(file, noise_moments_key(noise, spec, 3, 20000, 5)).has_value());
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace netsmpc
