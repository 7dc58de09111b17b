// Copyright 2026 The netsmpc Authors.
// SPDX-License-Identifier: Apache-2.0

#include "netsmpc/moments.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>
#include <vector>

namespace netsmpc {

double SaturationSpec::apply(double x) const {
  switch (kind) {
    case SaturationKind::Sigmoid:
      // (1 - e^{-x}) / (1 + e^{-x}) == tanh(x / 2), without overflow for x << 0.
      return std::tanh(0.5 * x);
    case SaturationKind::Clamp:
      return std::clamp(x, -phi_max, phi_max);
  }
  return x;
}

std::string SaturationSpec::describe() const {
  std::ostringstream os;
  os << (kind == SaturationKind::Sigmoid ? "sigmoid" : "clamp") << ":" << std::setprecision(17)
     << phi_max;
  return os.str();
}

Vector saturate(const SaturationSpec& spec, const Vector& w) {
  return w.unaryExpr([&spec](double x) { return spec.apply(x); });
}

Matrix stacked_noise_covariance(const NoiseModel& noise, int horizon) {
  const auto d = noise.covariance.rows();
  Matrix out = Matrix::Zero(horizon * d, horizon * d);
  for (int k = 0; k < horizon; ++k) out.block(k * d, k * d, d, d) = noise.covariance;
  return out;
}

namespace {

struct ChunkSums {
  Matrix ee;  // sum e e^T
  Matrix we;  // sum w e^T
};

ChunkSums run_chunk(const NoiseSampler& sampler, const SaturationSpec& spec, int horizon,
                    long count, std::uint64_t seed, long chunk) {
  const int d = sampler.dim();
  const auto nw = static_cast<Eigen::Index>(horizon) * d;
  const auto ne = static_cast<Eigen::Index>(horizon - 1) * d;
  Engine engine = make_engine(seed, 0x6e6f697365, static_cast<std::uint64_t>(chunk));
  Matrix W(nw, count);
  for (long s = 0; s < count; ++s) {
    for (int k = 0; k < horizon; ++k) sampler.draw_into(engine, W.col(s).segment(k * d, d));
  }
  const Matrix E = W.topRows(ne).unaryExpr([&spec](double x) { return spec.apply(x); });
  ChunkSums sums;
  sums.ee.noalias() = E * E.transpose();
  sums.we.noalias() = W * E.transpose();
  return sums;
}

}  // namespace

NoiseMoments estimate_noise_moments(const NoiseModel& noise, const SaturationSpec& spec, int horizon,
                                    long samples, std::uint64_t seed, int workers) {
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  if (samples < 1) throw ValidationError("samples must be at least 1");
  if (!(spec.phi_max > 0.0)) throw ValidationError("phi_max must be positive");
  const NoiseSampler sampler(noise);
  const int d = sampler.dim();
  const auto nw = static_cast<Eigen::Index>(horizon) * d;
  const auto ne = static_cast<Eigen::Index>(horizon - 1) * d;

  const long chunks = (samples + kMomentChunk - 1) / kMomentChunk;
  std::vector<ChunkSums> partial(static_cast<std::size_t>(chunks));
  auto work = [&](long first, long stride) {
    for (long c = first; c < chunks; c += stride) {
      const long count = std::min(kMomentChunk, samples - c * kMomentChunk);
      partial[static_cast<std::size_t>(c)] = run_chunk(sampler, spec, horizon, count, seed, c);
    }
  };
  workers = std::max(1, workers);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }

  Matrix ee = Matrix::Zero(ne, ne);
  Matrix we = Matrix::Zero(nw, ne);
  for (const auto& p : partial) {
    ee += p.ee;
    we += p.we;
  }
  NoiseMoments out;
  const double inv = 1.0 / static_cast<double>(samples);
  out.Sigma_e = 0.5 * (ee + ee.transpose()) * inv;
  out.Sigma_e_prime = we * inv;
  out.Sigma_W = stacked_noise_covariance(noise, horizon);
  out.samples = samples;
  out.seed = seed;
  return out;
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 14695981039346656037ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

constexpr char kMagic[8] = {'N', 'S', 'M', 'C', 'M', 'O', 'M', '1'};

void write_matrix(std::ostream& os, const Matrix& m) {
  const std::int64_t rows = m.rows(), cols = m.cols();
  os.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  os.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

bool read_matrix(std::istream& is, Matrix& m) {
  std::int64_t rows = 0, cols = 0;
  is.read(reinterpret_cast<char*>(&rows), sizeof rows);
  is.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!is || rows < 0 || cols < 0 || rows * cols > (1LL << 28)) return false;
  m.resize(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  return static_cast<bool>(is);
}

}  // namespace

std::string noise_moments_key(const NoiseModel& noise, const SaturationSpec& spec, int horizon,
                              long samples, std::uint64_t seed) {
  const Matrix& C = noise.covariance;
  std::uint64_t h = fnv1a(C.data(), sizeof(double) * static_cast<std::size_t>(C.size()));
  const std::int64_t dims[2] = {C.rows(), C.cols()};
  h = fnv1a(dims, sizeof dims, h);
  std::ostringstream os;
  os << "noise=" << std::hex << std::setw(16) << std::setfill('0') << h << std::dec
     << ";sat=" << spec.describe() << ";N=" << horizon << ";samples=" << samples
     << ";seed=" << seed << ";chunk=" << kMomentChunk;
  return os.str();
}

void save_noise_moments(const std::filesystem::path& file, const std::string& key,
                        const NoiseMoments& moments) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write moment cache " + file.string());
  os.write(kMagic, sizeof kMagic);
  const std::uint32_t len = static_cast<std::uint32_t>(key.size());
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(key.data(), len);
  const std::int64_t meta[2] = {moments.samples, static_cast<std::int64_t>(moments.seed)};
  os.write(reinterpret_cast<const char*>(meta), sizeof meta);
  write_matrix(os, moments.Sigma_e);
  write_matrix(os, moments.Sigma_e_prime);
  write_matrix(os, moments.Sigma_W);
}

std::optional<NoiseMoments> load_noise_moments(const std::filesystem::path& file,
                                               const std::string& key) {
  std::ifstream is(file, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[sizeof kMagic];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) return std::nullopt;
  std::uint32_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!is || len > 4096) return std::nullopt;
  std::string stored(len, '\0');
  is.read(stored.data(), len);
  if (!is || stored != key) return std::nullopt;
  std::int64_t meta[2];
  is.read(reinterpret_cast<char*>(meta), sizeof meta);
  NoiseMoments out;
  out.samples = meta[0];
  out.seed = static_cast<std::uint64_t>(meta[1]);
  if (!read_matrix(is, out.Sigma_e) || !read_matrix(is, out.Sigma_e_prime) ||
      !read_matrix(is, out.Sigma_W)) {
    return std::nullopt;
  }
  return out;
}

NoiseMoments cached_noise_moments(const std::filesystem::path& cache_dir, const NoiseModel& noise,
                                  const SaturationSpec& spec, int horizon, long samples,
                                  std::uint64_t seed, int workers) {
  if (cache_dir.empty()) return estimate_noise_moments(noise, spec, horizon, samples, seed, workers);
  const std::string key = noise_moments_key(noise, spec, horizon, samples, seed);
  std::ostringstream name;
  name << std::hex << std::setw(16) << std::setfill('0') << fnv1a(key.data(), key.size()) << ".bin";
  const auto file = cache_dir / name.str();
  if (auto hit = load_noise_moments(file, key)) return *hit;
  NoiseMoments fresh = estimate_noise_moments(noise, spec, horizon, samples, seed, workers);
  save_noise_moments(file, key, fresh);
  return fresh;
}

}  // namespace netsmpc
