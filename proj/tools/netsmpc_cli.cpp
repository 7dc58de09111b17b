// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

// Command line front end: `run` executes an experiment preset and writes CSV
// artifacts plus manifest.json; `validate` checks a configuration without
// simulating.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "netsmpc/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string read_file(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw netsmpc::ConfigError("", 0, "cannot read " + file.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

netsmpc::ConfigDocument load_document(const std::string& path, const std::vector<std::string>& overrides) {
  netsmpc::ConfigDocument doc = netsmpc::ConfigDocument::load(path);
  for (const auto& o : overrides) doc.apply_override(o);
  return doc;
}

nlohmann::json metrics_json(const netsmpc::Metrics& m) {
  return {{"avg_cost_per_stage", m.avg_cost_per_stage},
          {"actuator_energy", m.actuator_energy},
          {"empirical_msb", m.empirical_msb},
          {"max_abs_input", m.max_abs_input},
          {"fallbacks", m.fallbacks},
          {"solves", m.solves},
          {"solver_iterations", m.solver_iterations}};
}

int cmd_validate(const std::string& path, const std::vector<std::string>& overrides) {
  netsmpc::ExperimentConfig cfg;
  try {
    cfg = netsmpc::build_config(load_document(path, overrides));
  } catch (const netsmpc::ConfigError& ex) {
    std::cerr << path << ": " << ex.what() << '\n';
    return kExitConfig;
  }
  const auto issues = netsmpc::validate_config(cfg);
  if (!issues.empty()) {
    for (const auto& issue : issues) std::cerr << path << ": " << issue << '\n';
    return kExitConfig;
  }
  std::cout << path << ": valid (preset " << netsmpc::to_string(cfg.preset) << ")\n";
  return 0;
}

int cmd_run(const std::string& path, const std::string& out, const std::vector<std::string>& overrides) {
  netsmpc::ExperimentConfig cfg;
  std::string config_text;
  try {
    config_text = read_file(path);
    cfg = netsmpc::build_config(load_document(path, overrides));
  } catch (const netsmpc::ConfigError& ex) {
    std::cerr << path << ": " << ex.what() << '\n';
    return kExitConfig;
  }
  const auto issues = netsmpc::validate_config(cfg);
  if (!issues.empty()) {
    for (const auto& issue : issues) std::cerr << path << ": " << issue << '\n';
    return kExitConfig;
  }

  netsmpc::ExperimentResult result;
  try {
    result = netsmpc::run_experiment(cfg, out);
  } catch (const std::exception& ex) {
    std::cerr << "run failed: " << ex.what() << '\n';
    return kExitRuntime;
  }

  nlohmann::json manifest;
  manifest["tool"] = "netsmpc";
  manifest["version"] = NETSMPC_VERSION;
  manifest["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION);
  manifest["config"] = path;
  manifest["config_hash"] = netsmpc::content_hash(config_text);
  manifest["preset"] = std::string(netsmpc::to_string(cfg.preset));
  manifest["seed"] = cfg.seed;
  manifest["overrides"] = overrides;
  manifest["paths"] = cfg.paths;
  manifest["steps"] = cfg.steps;
  manifest["workers"] = cfg.workers;
  manifest["wall_seconds"] = result.wall_seconds;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : result.runs) {
    runs.push_back({{"name", run.name},
                    {"protocol", std::string(netsmpc::to_string(run.protocol))},
                    {"design_p", run.p},
                    {"noise_variance", run.noise_variance},
                    {"wall_seconds", run.wall_seconds},
                    {"metrics", metrics_json(run.metrics)}});
  }
  manifest["runs"] = runs;
  try {
    std::ofstream os(std::filesystem::path(out) / "manifest.json");
    if (!os) throw std::runtime_error("cannot write manifest.json");
    os << manifest.dump(2) << '\n';
  } catch (const std::exception& ex) {
    std::cerr << ex.what() << '\n';
    return kExitRuntime;
  }
  for (const auto& run : result.runs) {
    std::cout << run.name << ": cost/stage " << run.metrics.avg_cost_per_stage << ", energy "
              << run.metrics.actuator_energy << ", msb " << run.metrics.empirical_msb << " ("
              << run.wall_seconds << " s)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic predictive control over erasure channels"};
  app.set_version_flag("--version", NETSMPC_VERSION);
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::vector<std::string> overrides;

  auto* run = app.add_subcommand("run", "run an experiment and write CSV artifacts");
  run->add_option("config", config, "configuration file")->required();
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--set", overrides, "override a key, key=value (repeatable)")->take_all();

  auto* validate = app.add_subcommand("validate", "check a configuration without simulating");
  validate->add_option("config", config, "configuration file")->required();
  validate->add_option("--set", overrides, "override a key, key=value (repeatable)")->take_all();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (*run) return cmd_run(config, out, overrides);
  return cmd_validate(config, overrides);
}
