// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "netsmpc/simulator.hpp"

namespace netsmpc {

/// Configuration problem tied to a key and, when known, a source line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, int line, const std::string& message);

  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

/// Flat "key = value" document; '#' starts a comment. Line 0 marks an
/// override given on the command line.
class ConfigDocument {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static ConfigDocument parse(const std::string& text);
  static ConfigDocument load(const std::filesystem::path& file);

  /// Replace or add `key`; `assignment` is "key=value".
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const Entry* find(const std::string& key) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }

  /// Directory against which "@file" matrix references resolve.
  std::filesystem::path base_dir;

 private:
  std::map<std::string, Entry> entries_;
};

enum class Preset { Iid, Markov, MsbSweep, Custom };

std::string_view to_string(Preset preset);

/// Every setting of an experiment, after preset defaults, file entries and
/// overrides have been merged.
struct ExperimentConfig {
  Preset preset = Preset::Custom;
  std::vector<Protocol> protocols{Protocol::TP1, Protocol::TP2, Protocol::TP3};

  LinearSystem sys;
  Matrix noise_covariance;
  Matrix Q, Q_f, R;
  int horizon = 4;
  Vector x0;
  int steps = 60;
  int paths = 300;
  std::uint64_t seed = 1;
  int workers = 1;

  ChannelModel channel = IidChannel{0.8};
  std::optional<double> design_p;

  bool stability_enabled = true;
  double r = 0.4729;
  double epsilon = 0.02;
  std::optional<double> zeta;  // 0.99 of the admissible limit when unset
  RotationMode rotation = RotationMode::ProofConsistent;

  SaturationSpec saturation = SaturationSpec::sigmoid();
  long moment_samples = kDefaultMomentSamples;
  std::filesystem::path moment_cache;

  SolverSettings solver;
  bool warm_start = true;

  std::vector<double> sweep_p;
  std::vector<double> sweep_noise_variance;

  bool write_trajectories = true;
};

/// Documented defaults of each preset, before any file entry is applied.
ExperimentConfig preset_defaults(Preset preset);

/// Merge a document over its preset. Throws ConfigError naming the key and
/// line of the first offending entry; unknown keys are rejected.
ExperimentConfig build_config(const ConfigDocument& doc);

/// All keys the parser understands.
const std::vector<std::string>& known_keys();

/// Module-level checks without simulating: decomposition, kappa <= N, zeta
/// interval, T multiple of kappa, channel and probabilities. Returns one
/// message per violation.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

/// Success probability the controller designs for at channel `channel`.
double design_probability(const ExperimentConfig& cfg, const ChannelModel& channel);

/// Simulation set-up for one protocol at a given channel and noise level.
SimConfig make_sim_config(const ExperimentConfig& cfg, Protocol protocol, const ChannelModel& channel,
                          const Matrix& noise_covariance);

struct RunSummary {
  std::string name;
  Protocol protocol = Protocol::TP1;
  double p = 0.0;  // design probability
  double noise_variance = 0.0;  // sweep level, 0 when not sweeping
  Metrics metrics;
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  std::vector<RunSummary> runs;
  double wall_seconds = 0.0;
};

/// Runs the preset and writes CSV artifacts into `out_dir`.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// FNV-1a of a byte string, as 16 hex digits.
std::string content_hash(const std::string& bytes);

/// Parses "[a b; c d]" (commas allowed as separators), a bare row "a b c",
/// or "@file" holding whitespace-separated rows.
Matrix parse_matrix(const std::string& text, const std::filesystem::path& base_dir = {});

}  // namespace netsmpc
