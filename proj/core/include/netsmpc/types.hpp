// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace netsmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when operand shapes are incompatible. The message names the
/// offending dimensions.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value violates a documented invariant (PSD-ness, ranges,
/// reachability, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_of(const Matrix& m);

using Engine = std::mt19937_64;

/// Deterministic engine for a (seed, stream, substream) triple. Streams
/// derived this way are independent of the order in which they are created.
Engine make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

}  // namespace netsmpc
