// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "netsmpc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace netsmpc {

ConfigError::ConfigError(std::string key, int line, const std::string& message)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (key.empty() ? std::string() : "'" + key + "': ") + message),
      key_(std::move(key)),
      line_(line) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigDocument ConfigDocument::parse(const std::string& text) {
  ConfigDocument doc;
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("", line, "expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError("", line, "empty key");
    if (doc.entries_.count(key)) {
      throw ConfigError(key, line, "duplicate key (first set on line " +
                                       std::to_string(doc.entries_[key].line) + ")");
    }
    doc.entries_[key] = {value, line};
  }
  return doc;
}

ConfigDocument ConfigDocument::load(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("", 0, "cannot read " + file.string());
  std::stringstream ss;
  ss << is.rdbuf();
  ConfigDocument doc = parse(ss.str());
  doc.base_dir = file.parent_path();
  return doc;
}

void ConfigDocument::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(assignment, 0, "override must look like key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("", 0, "override with an empty key");
  entries_[key] = {trim(assignment.substr(eq + 1)), 0};
}

const ConfigDocument::Entry* ConfigDocument::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string_view to_string(Preset preset) {
  switch (preset) {
    case Preset::Iid: return "iid";
    case Preset::Markov: return "markov";
    case Preset::MsbSweep: return "msb-sweep";
    case Preset::Custom: return "custom";
  }
  return "unknown";
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "preset",          "protocols",         "system.A",          "system.B",
      "system.u_max",    "system.d_o",        "noise.covariance",  "cost.Q",
      "cost.Q_f",        "cost.R",            "horizon",           "x0",
      "steps",           "paths",             "seed",              "workers",
      "channel.model",   "channel.p",         "channel.success",   "channel.transition",
      "channel.initial_state", "design.p",    "stability.enabled", "stability.r",
      "stability.epsilon", "stability.zeta",  "stability.rotation", "saturation.kind",
      "saturation.phi_max", "moments.samples", "moments.cache",    "solver.max_iterations",
      "solver.tolerance", "solver.rho",       "solver.warm_start", "sweep.p",
      "sweep.noise_variance", "output.trajectories"};
  return keys;
}

namespace {

void set_reference_plant(ExperimentConfig& cfg) {
  cfg.sys.A.resize(3, 3);
  cfg.sys.A << 0.0, -0.8, -0.6,
               0.8, -0.36, 0.48,
               0.6, 0.48, -0.64;
  cfg.sys.B.resize(3, 1);
  cfg.sys.B << 0.16, 0.12, 0.14;
  cfg.sys.u_max = 15.0;
  cfg.sys.d_o = 3;
  cfg.sys.d_s = 0;
  cfg.noise_covariance = 2.0 * Matrix::Identity(3, 3);
  cfg.Q = Matrix::Identity(3, 3);
  cfg.Q_f.resize(3, 3);
  cfg.Q_f << 12.0, -0.1, -0.4,
             -0.1, 19.0, -0.2,
             -0.4, -0.2, 2.0;
  cfg.R = 2.0 * Matrix::Identity(1, 1);
  cfg.horizon = 4;
  cfg.x0.resize(3);
  cfg.x0 << 10.0, 10.0, -10.0;
  cfg.r = 0.4729;
  cfg.epsilon = 0.02;
  cfg.zeta = 0.4729;
}

MarkovChannel reference_markov_channel() {
  MarkovChannel ch;
  ch.success = {0.8, 0.4};
  ch.transition.resize(2, 2);
  ch.transition << 0.7, 0.3,
                   0.9, 0.1;
  ch.initial_state = 0;
  return ch;
}

}  // namespace

ExperimentConfig preset_defaults(Preset preset) {
  ExperimentConfig cfg;
  cfg.preset = preset;
  cfg.seed = 2026;
  switch (preset) {
    case Preset::Iid:
      set_reference_plant(cfg);
      cfg.channel = IidChannel{0.8};
      cfg.steps = 300;
      cfg.paths = 300;
      break;
    case Preset::Markov:
      set_reference_plant(cfg);
      cfg.channel = reference_markov_channel();
      cfg.steps = 300;
      cfg.paths = 300;
      break;
    case Preset::MsbSweep:
      set_reference_plant(cfg);
      cfg.x0 = Vector::Zero(3);
      cfg.channel = IidChannel{1.0};
      cfg.steps = 60;
      cfg.paths = 100;
      for (int k = 1; k <= 10; ++k) cfg.sweep_p.push_back(k / 10.0);
      cfg.sweep_noise_variance = {0.1, 1.0, 10.0};
      cfg.write_trajectories = false;
      break;
    case Preset::Custom:
      break;
  }
  return cfg;
}

Matrix parse_matrix(const std::string& text, const std::filesystem::path& base_dir) {
  std::string body = trim(text);
  if (!body.empty() && body.front() == '@') {
    const std::filesystem::path file = base_dir / trim(body.substr(1));
    std::ifstream is(file);
    if (!is) throw std::invalid_argument("cannot read matrix file " + file.string());
    std::stringstream ss;
    std::string row;
    bool first = true;
    while (std::getline(is, row)) {
      if (trim(row).empty()) continue;
      ss << (first ? "" : ";") << row;
      first = false;
    }
    body = ss.str();
  } else if (!body.empty() && body.front() == '[') {
    if (body.back() != ']') throw std::invalid_argument("unterminated matrix literal");
    body = body.substr(1, body.size() - 2);
  }
  std::replace(body.begin(), body.end(), ',', ' ');
  std::vector<std::vector<double>> rows;
  std::stringstream rs(body);
  std::string row;
  while (std::getline(rs, row, ';')) {
    std::istringstream vs(row);
    std::vector<double> values;
    std::string tok;
    while (vs >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument("not a number: '" + tok + "'");
      values.push_back(v);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty() || rows.front().empty()) throw std::invalid_argument("empty matrix");
  const std::size_t cols = rows.front().size();
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw std::invalid_argument("ragged matrix rows");
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = rows[i][j];
  }
  return out;
}

namespace {

class Reader {
 public:
  explicit Reader(const ConfigDocument& doc) : doc_(doc) {}

  bool has(const std::string& key) const { return doc_.has(key); }

  template <class F>
  auto with(const std::string& key, F&& parse) const {
    const auto* e = doc_.find(key);
    try {
      return parse(e->value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ConfigError(key, e->line, ex.what());
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    const auto* e = doc_.find(key);
    throw ConfigError(key, e ? e->line : 0, message);
  }

  double real(const std::string& key) const {
    return with(key, [](const std::string& v) {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument("not a number: '" + v + "'");
      return x;
    });
  }

  long integer(const std::string& key) const {
    return with(key, [](const std::string& v) {
      std::size_t used = 0;
      const long x = std::stol(v, &used);
      if (used != v.size()) throw std::invalid_argument("not an integer: '" + v + "'");
      return x;
    });
  }

  bool boolean(const std::string& key) const {
    return with(key, [](const std::string& v) {
      if (v == "true" || v == "yes" || v == "1") return true;
      if (v == "false" || v == "no" || v == "0") return false;
      throw std::invalid_argument("expected true or false, got '" + v + "'");
    });
  }

  Matrix matrix(const std::string& key) const {
    return with(key, [this](const std::string& v) { return parse_matrix(v, doc_.base_dir); });
  }

  Vector vector(const std::string& key) const {
    const Matrix M = matrix(key);
    if (M.rows() != 1 && M.cols() != 1) fail(key, "expected a vector, got " + shape_of(M));
    return M.reshaped();
  }

  std::vector<double> list(const std::string& key) const {
    const Vector v = vector(key);
    return {v.data(), v.data() + v.size()};
  }

  std::string text(const std::string& key) const { return doc_.find(key)->value; }

 private:
  const ConfigDocument& doc_;
};

Preset parse_preset(const std::string& v) {
  if (v == "iid") return Preset::Iid;
  if (v == "markov") return Preset::Markov;
  if (v == "msb-sweep") return Preset::MsbSweep;
  if (v == "custom") return Preset::Custom;
  throw std::invalid_argument("unknown preset '" + v + "' (iid, markov, msb-sweep, custom)");
}

}  // namespace

ExperimentConfig build_config(const ConfigDocument& doc) {
  const auto& keys = known_keys();
  for (const auto& [key, entry] : doc.entries()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(key, entry.line, "unknown key");
    }
  }
  if (!doc.has("preset")) throw ConfigError("preset", 0, "missing preset");
  const Reader rd(doc);
  ExperimentConfig cfg = preset_defaults(rd.with("preset", parse_preset));

  if (cfg.preset == Preset::Custom) {
    for (const char* key : {"system.A", "system.B", "system.u_max", "noise.covariance", "cost.Q",
                            "cost.Q_f", "cost.R", "x0"}) {
      if (!doc.has(key)) throw ConfigError(key, 0, "required by the custom preset but missing");
    }
  }

  if (rd.has("protocols")) {
    cfg.protocols = rd.with("protocols", [](std::string v) {
      std::replace(v.begin(), v.end(), ',', ' ');
      std::istringstream is(v);
      std::vector<Protocol> out;
      std::string tok;
      while (is >> tok) out.push_back(protocol_from_string(tok));
      if (out.empty()) throw std::invalid_argument("no protocol listed");
      return out;
    });
  }
  if (rd.has("system.A")) {
    cfg.sys.A = rd.matrix("system.A");
    cfg.sys.d_o = static_cast<int>(cfg.sys.A.rows());
    cfg.sys.d_s = 0;
  }
  if (rd.has("system.B")) cfg.sys.B = rd.matrix("system.B");
  if (rd.has("system.u_max")) cfg.sys.u_max = rd.real("system.u_max");
  if (rd.has("system.d_o")) {
    const long d_o = rd.integer("system.d_o");
    if (d_o < 0 || d_o > cfg.sys.A.rows()) rd.fail("system.d_o", "must lie in [0, state dimension]");
    cfg.sys.d_o = static_cast<int>(d_o);
    cfg.sys.d_s = static_cast<int>(cfg.sys.A.rows() - d_o);
  }
  if (rd.has("noise.covariance")) cfg.noise_covariance = rd.matrix("noise.covariance");
  if (rd.has("cost.Q")) cfg.Q = rd.matrix("cost.Q");
  if (rd.has("cost.Q_f")) cfg.Q_f = rd.matrix("cost.Q_f");
  if (rd.has("cost.R")) cfg.R = rd.matrix("cost.R");
  if (rd.has("horizon")) cfg.horizon = static_cast<int>(rd.integer("horizon"));
  if (rd.has("x0")) cfg.x0 = rd.vector("x0");
  if (rd.has("steps")) cfg.steps = static_cast<int>(rd.integer("steps"));
  if (rd.has("paths")) cfg.paths = static_cast<int>(rd.integer("paths"));
  if (rd.has("seed")) {
    cfg.seed = rd.with("seed", [](const std::string& v) {
      std::size_t used = 0;
      const unsigned long long s = std::stoull(v, &used);
      if (used != v.size() || v.front() == '-') throw std::invalid_argument("seed must be a nonnegative integer");
      return static_cast<std::uint64_t>(s);
    });
  }
  if (rd.has("workers")) cfg.workers = static_cast<int>(rd.integer("workers"));

  const std::string model = rd.has("channel.model")
                                ? rd.text("channel.model")
                                : (std::holds_alternative<MarkovChannel>(cfg.channel) ? "markov" : "iid");
  if (model == "iid") {
    IidChannel ch = std::holds_alternative<IidChannel>(cfg.channel) ? std::get<IidChannel>(cfg.channel)
                                                                     : IidChannel{0.8};
    if (rd.has("channel.p")) {
      ch.p = rd.real("channel.p");
      if (!(ch.p >= 0.0 && ch.p <= 1.0)) rd.fail("channel.p", "must lie in [0, 1]");
    }
    for (const char* key : {"channel.success", "channel.transition", "channel.initial_state"}) {
      if (rd.has(key)) rd.fail(key, "only meaningful for channel.model = markov");
    }
    cfg.channel = ch;
  } else if (model == "markov") {
    MarkovChannel ch = std::holds_alternative<MarkovChannel>(cfg.channel)
                           ? std::get<MarkovChannel>(cfg.channel)
                           : reference_markov_channel();
    if (rd.has("channel.p")) rd.fail("channel.p", "not used by channel.model = markov (see channel.success)");
    if (rd.has("channel.success")) ch.success = rd.list("channel.success");
    if (rd.has("channel.transition")) ch.transition = rd.matrix("channel.transition");
    if (rd.has("channel.initial_state")) ch.initial_state = static_cast<int>(rd.integer("channel.initial_state"));
    cfg.channel = ch;
  } else {
    rd.fail("channel.model", "expected iid or markov, got '" + model + "'");
  }
  if (rd.has("design.p")) cfg.design_p = rd.real("design.p");

  if (rd.has("stability.enabled")) cfg.stability_enabled = rd.boolean("stability.enabled");
  if (rd.has("stability.r")) cfg.r = rd.real("stability.r");
  if (rd.has("stability.epsilon")) cfg.epsilon = rd.real("stability.epsilon");
  if (rd.has("stability.zeta")) {
    if (rd.text("stability.zeta") == "auto") cfg.zeta.reset();
    else cfg.zeta = rd.real("stability.zeta");
  }
  if (rd.has("stability.rotation")) {
    cfg.rotation = rd.with("stability.rotation", [](const std::string& v) {
      if (v == "proof-consistent") return RotationMode::ProofConsistent;
      if (v == "literal") return RotationMode::Literal;
      throw std::invalid_argument("expected proof-consistent or literal, got '" + v + "'");
    });
  }
  if (rd.has("saturation.kind")) {
    cfg.saturation.kind = rd.with("saturation.kind", [](const std::string& v) {
      if (v == "sigmoid") return SaturationKind::Sigmoid;
      if (v == "clamp") return SaturationKind::Clamp;
      throw std::invalid_argument("expected sigmoid or clamp, got '" + v + "'");
    });
  }
  if (rd.has("saturation.phi_max")) {
    if (cfg.saturation.kind == SaturationKind::Sigmoid) {
      rd.fail("saturation.phi_max", "the sigmoid map is fixed at phi_max = 1; use saturation.kind = clamp");
    }
    cfg.saturation.phi_max = rd.real("saturation.phi_max");
  } else if (cfg.saturation.kind == SaturationKind::Clamp && rd.has("saturation.kind")) {
    cfg.saturation.phi_max = 1.0;
  }
  if (rd.has("moments.samples")) cfg.moment_samples = rd.integer("moments.samples");
  if (rd.has("moments.cache")) cfg.moment_cache = rd.text("moments.cache");
  if (rd.has("solver.max_iterations")) cfg.solver.max_iterations = static_cast<int>(rd.integer("solver.max_iterations"));
  if (rd.has("solver.tolerance")) cfg.solver.tolerance = rd.real("solver.tolerance");
  if (rd.has("solver.rho")) cfg.solver.rho = rd.real("solver.rho");
  if (rd.has("solver.warm_start")) cfg.warm_start = rd.boolean("solver.warm_start");
  if (rd.has("sweep.p")) cfg.sweep_p = rd.list("sweep.p");
  if (rd.has("sweep.noise_variance")) cfg.sweep_noise_variance = rd.list("sweep.noise_variance");
  if (rd.has("output.trajectories")) cfg.write_trajectories = rd.boolean("output.trajectories");

  if (cfg.preset == Preset::MsbSweep && (cfg.sweep_p.empty() || cfg.sweep_noise_variance.empty())) {
    throw ConfigError("sweep.p", 0, "msb-sweep needs nonempty sweep.p and sweep.noise_variance");
  }
  return cfg;
}

std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> issues;
  auto check = [&issues](bool ok, const std::string& msg) {
    if (!ok) issues.push_back(msg);
  };
  const int d = static_cast<int>(cfg.sys.A.rows());
  check(cfg.sys.A.rows() == cfg.sys.A.cols() && d > 0, "system.A must be square and nonempty");
  check(cfg.sys.B.rows() == d && cfg.sys.B.cols() > 0, "system.B must have as many rows as system.A");
  check(cfg.sys.u_max > 0.0, "system.u_max must be positive");
  check(cfg.noise_covariance.rows() == d && cfg.noise_covariance.cols() == d,
        "noise.covariance must be " + std::to_string(d) + "x" + std::to_string(d));
  check(cfg.Q.rows() == d && cfg.Q.cols() == d, "cost.Q must match the state dimension");
  check(cfg.Q_f.rows() == d && cfg.Q_f.cols() == d, "cost.Q_f must match the state dimension");
  check(cfg.R.rows() == cfg.sys.B.cols() && cfg.R.cols() == cfg.sys.B.cols(), "cost.R must match the input dimension");
  check(cfg.x0.size() == d, "x0 must have the state dimension");
  check(cfg.horizon >= 1, "horizon must be at least 1");
  check(cfg.steps >= 0, "steps must be nonnegative");
  check(cfg.paths >= 1, "paths must be positive");
  check(cfg.workers >= 1, "workers must be positive");
  check(cfg.moment_samples >= 1000, "moments.samples must be at least 1000");
  check(cfg.solver.tolerance > 0.0, "solver.tolerance must be positive");
  check(cfg.solver.max_iterations >= 1, "solver.max_iterations must be positive");
  check(cfg.solver.rho > 0.0, "solver.rho must be positive");
  check(cfg.saturation.phi_max > 0.0, "saturation.phi_max must be positive");
  check(!cfg.protocols.empty(), "protocols must list at least one protocol");
  if (cfg.design_p) check(*cfg.design_p > 0.0 && *cfg.design_p <= 1.0, "design.p must lie in ]0, 1]");
  for (double p : cfg.sweep_p) check(p > 0.0 && p <= 1.0, "sweep.p values must lie in ]0, 1]");
  for (double v : cfg.sweep_noise_variance) check(v >= 0.0, "sweep.noise_variance values must be nonnegative");
  try {
    validate_channel(cfg.channel);
  } catch (const std::exception& ex) {
    issues.push_back(std::string("channel: ") + ex.what());
  }
  if (!issues.empty()) return issues;

  LinearSystem sys = cfg.sys;
  try {
    const DecompositionReport report = verify_decomposition(sys);
    check(report.lyapunov_stable, "decomposition: " + report.message);
    const ReachabilityData reach = compute_reachability(sys);
    check(reach.kappa <= cfg.horizon, "reachability index kappa = " + std::to_string(reach.kappa) +
                                          " exceeds horizon N = " + std::to_string(cfg.horizon));
    check(cfg.steps % reach.kappa == 0, "steps T = " + std::to_string(cfg.steps) +
                                            " is not a multiple of kappa = " + std::to_string(reach.kappa));
    if (cfg.stability_enabled) {
      StabilityConfig sc{cfg.r, cfg.epsilon, cfg.zeta.value_or(0.99 * zeta_upper_limit(sys, reach)), cfg.rotation};
      try {
        validate_stability_config(sc, sys, reach);
      } catch (const std::exception& ex) {
        issues.push_back(std::string("stability: ") + ex.what());
      }
    }
  } catch (const std::exception& ex) {
    issues.push_back(ex.what());
  }
  try {
    (void)build_cost_blocks(cfg.Q, cfg.Q_f, cfg.R, std::max(1, cfg.horizon));
  } catch (const std::exception& ex) {
    issues.push_back(std::string("costs: ") + ex.what());
  }
  try {
    NoiseSampler sampler(NoiseModel{cfg.noise_covariance});
  } catch (const std::exception& ex) {
    issues.push_back(std::string("noise: ") + ex.what());
  }
  return issues;
}

double design_probability(const ExperimentConfig& cfg, const ChannelModel& channel) {
  if (cfg.design_p) return *cfg.design_p;
  return mean_success_rate(channel);
}

SimConfig make_sim_config(const ExperimentConfig& cfg, Protocol protocol, const ChannelModel& channel,
                          const Matrix& noise_covariance) {
  SimConfig sim;
  ControllerConfig& cc = sim.controller;
  cc.sys = cfg.sys;
  cc.noise = NoiseModel{noise_covariance};
  cc.protocol = protocol;
  cc.design_p = design_probability(cfg, channel);
  cc.horizon = cfg.horizon;
  cc.Q = cfg.Q;
  cc.Q_f = cfg.Q_f;
  cc.R = cfg.R;
  cc.stability_constraints = cfg.stability_enabled;
  cc.stability.r = cfg.r;
  cc.stability.epsilon = cfg.epsilon;
  cc.stability.rotation = cfg.rotation;
  if (cfg.zeta) {
    cc.stability.zeta = *cfg.zeta;
  } else {
    cc.stability.zeta = 0.99 * zeta_upper_limit(cfg.sys, compute_reachability(cfg.sys));
  }
  cc.saturation = cfg.saturation;
  cc.moment_samples = cfg.moment_samples;
  cc.moment_seed = cfg.seed;
  cc.moment_cache = cfg.moment_cache;
  cc.workers = cfg.workers;
  cc.solver = cfg.solver;
  cc.warm_start = cfg.warm_start;
  sim.channel = channel;
  sim.x0 = cfg.x0;
  sim.steps = cfg.steps;
  sim.paths = cfg.paths;
  sim.seed = cfg.seed;
  sim.workers = cfg.workers;
  return sim;
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << std::setprecision(17);
  return os;
}

std::string format_level(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const auto issues = validate_config(cfg);
  if (!issues.empty()) throw ValidationError(issues.front());
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  ExperimentResult result;

  if (cfg.preset != Preset::MsbSweep) {
    const SimConfig base = make_sim_config(cfg, cfg.protocols.front(), cfg.channel, cfg.noise_covariance);
    const ControllerModel model = prepare_controller_model(base.controller);
    for (Protocol protocol : cfg.protocols) {
      const auto t0 = std::chrono::steady_clock::now();
      const SimConfig sim = make_sim_config(cfg, protocol, cfg.channel, cfg.noise_covariance);
      const auto records = run_paths(sim, model);
      RunSummary run;
      run.name = std::string(to_string(protocol));
      run.protocol = protocol;
      run.p = sim.controller.design_p;
      run.metrics = compute_metrics(records, cfg.Q, cfg.R);
      const auto dir = out_dir / run.name;
      std::filesystem::create_directories(dir);
      if (cfg.write_trajectories) write_trajectories_csv(dir / "trajectories.csv", records);
      write_metrics_csv(dir / "metrics.csv", run.metrics);
      write_norm_series_csv(dir / "norm_series.csv", run.metrics);
      run.wall_seconds = seconds_since(t0);
      result.runs.push_back(std::move(run));
    }
    std::ofstream os = open_out(out_dir / "metrics.csv");
    os << "protocol,avg_cost_per_stage,actuator_energy,empirical_msb,max_abs_input,fallbacks\n";
    for (const auto& run : result.runs) {
      os << run.name << ',' << run.metrics.avg_cost_per_stage << ',' << run.metrics.actuator_energy << ','
         << run.metrics.empirical_msb << ',' << run.metrics.max_abs_input << ',' << run.metrics.fallbacks << '\n';
    }
  } else {
    const int d = static_cast<int>(cfg.sys.A.rows());
    for (double variance : cfg.sweep_noise_variance) {
      const Matrix cov = variance * Matrix::Identity(d, d);
      const SimConfig base = make_sim_config(cfg, cfg.protocols.front(), IidChannel{1.0}, cov);
      const ControllerModel model = prepare_controller_model(base.controller);
      for (Protocol protocol : cfg.protocols) {
        for (double p : cfg.sweep_p) {
          const auto t0 = std::chrono::steady_clock::now();
          ExperimentConfig point = cfg;
          point.design_p.reset();
          const SimConfig sim = make_sim_config(point, protocol, IidChannel{p}, cov);
          const auto records = run_paths(sim, model);
          RunSummary run;
          run.name = std::string(to_string(protocol)) + "_noise" + format_level(variance) + "_p" + format_level(p);
          run.protocol = protocol;
          run.p = p;
          run.noise_variance = variance;
          run.metrics = compute_metrics(records, cfg.Q, cfg.R);
          run.wall_seconds = seconds_since(t0);
          result.runs.push_back(std::move(run));
        }
      }
    }
    std::ofstream os = open_out(out_dir / "msb_sweep.csv");
    os << "protocol,noise_variance,p,empirical_msb,avg_cost_per_stage,actuator_energy\n";
    for (const auto& run : result.runs) {
      os << to_string(run.protocol) << ',' << run.noise_variance << ',' << run.p << ','
         << run.metrics.empirical_msb << ',' << run.metrics.avg_cost_per_stage << ','
         << run.metrics.actuator_energy << '\n';
    }
  }
  result.wall_seconds = seconds_since(start);
  return result;
}

}  // namespace netsmpc
