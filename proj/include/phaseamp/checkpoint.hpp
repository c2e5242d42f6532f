#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phaseamp/adam.hpp"
#include "phaseamp/core.hpp"
#include "phaseamp/latent.hpp"
#include "phaseamp/neural.hpp"

// Binary container, little-endian throughout:
//   "PHASEAMP" u32 version
//   latent: u64 P, P x f64 omega, u64 A, A x f64 lambda, f64 dt
//   encoder, decoder: u64 layers, per layer u64 rows, u64 cols, weight (column-major), bias
//   u8 has_training; if set: i64 iteration, u64 seed, i64 adam step, moments m and v as networks

namespace phaseamp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Optimizer position needed to continue a run.
struct TrainingProgress {
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
  AdamState adam;

  bool operator==(const TrainingProgress&) const = default;
};

struct Checkpoint {
  ModelParams model;
  std::optional<TrainingProgress> progress;

  bool operator==(const Checkpoint&) const = default;
};

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os_.write(reinterpret_cast<const char*>(b), 8);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os_.write(reinterpret_cast<const char*>(b), 4);
  }
  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* s, std::size_t n) { os_.write(s, static_cast<std::streamsize>(n)); }

  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }

  void mlp(const MlpParams& net) {
    u64(net.layers.size());
    for (const auto& layer : net.layers) {
      matrix(layer.weight);
      matrix(Matrix(layer.bias));
    }
  }

  void network(const NetworkWeights& w) {
    mlp(w.encoder);
    mlp(w.decoder);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void bytes(unsigned char* b, std::size_t n) {
    is_.read(reinterpret_cast<char*>(b), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw InvalidArgument("checkpoint: truncated file");
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint8_t u8() {
    unsigned char b;
    bytes(&b, 1);
    return b;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  std::uint64_t count(std::uint64_t limit, const char* what) {
    const std::uint64_t n = u64();
    if (n > limit) throw InvalidArgument(std::string("checkpoint: implausible ") + what);
    return n;
  }

  Matrix matrix() {
    const auto r = static_cast<Index>(count(1u << 24, "row count"));
    const auto c = static_cast<Index>(count(1u << 24, "column count"));
    if (r * c > (Index{1} << 28)) throw InvalidArgument("checkpoint: implausible matrix size");
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }

  MlpParams mlp() {
    MlpParams net;
    const std::uint64_t layers = count(64, "layer count");
    for (std::uint64_t l = 0; l < layers; ++l) {
      Matrix w = matrix();
      Matrix b = matrix();
      if (b.cols() != 1) throw ShapeMismatch("checkpoint: bias must be a column");
      net.layers.push_back({std::move(w), b.col(0)});
    }
    return net;
  }

  NetworkWeights network() {
    NetworkWeights w;
    w.encoder = mlp();
    w.decoder = mlp();
    return w;
  }

 private:
  std::istream& is_;
};

inline void require_same_layout(const NetworkWeights& a, const NetworkWeights& b) {
  std::vector<std::pair<Index, Index>> sa, sb;
  a.visit([&sa](const auto& m) { sa.emplace_back(m.rows(), m.cols()); });
  b.visit([&sb](const auto& m) { sb.emplace_back(m.rows(), m.cols()); });
  require_shape(sa == sb, "checkpoint: optimizer moments do not match the weights");
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  ck.model.validate();
  detail::Writer w(os);
  w.raw("PHASEAMP", 8);
  w.u32(kCheckpointVersion);
  const LatentParams& lat = ck.model.latent;
  w.u64(static_cast<std::uint64_t>(lat.num_phases()));
  for (double v : lat.omega()) w.f64(v);
  w.u64(static_cast<std::uint64_t>(lat.num_amplitudes()));
  for (double v : lat.lambda()) w.f64(v);
  w.f64(lat.dt());
  w.network(ck.model.weights);
  w.u8(ck.progress ? 1 : 0);
  if (ck.progress) {
    w.u64(static_cast<std::uint64_t>(ck.progress->iteration));
    w.u64(ck.progress->seed);
    w.u64(static_cast<std::uint64_t>(ck.progress->adam.step));
    w.network(ck.progress->adam.m);
    w.network(ck.progress->adam.v);
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  detail::Reader r(is);
  unsigned char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, "PHASEAMP", 8) != 0) throw InvalidArgument("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw InvalidArgument("checkpoint: unsupported version " + std::to_string(version));
  std::vector<double> omega(r.count(1u << 16, "phase count")), lambda;
  for (double& v : omega) v = r.f64();
  lambda.resize(r.count(1u << 16, "amplitude count"));
  for (double& v : lambda) v = r.f64();
  const double dt = r.f64();
  Checkpoint ck;
  ck.model.latent = LatentParams(std::move(omega), std::move(lambda), dt);
  ck.model.weights = r.network();
  ck.model.validate();
  if (r.u8() != 0) {
    TrainingProgress p;
    p.iteration = static_cast<std::int64_t>(r.u64());
    p.seed = r.u64();
    p.adam.step = static_cast<std::int64_t>(r.u64());
    p.adam.m = r.network();
    p.adam.v = r.network();
    detail::require_same_layout(ck.model.weights, p.adam.m);
    detail::require_same_layout(ck.model.weights, p.adam.v);
    ck.progress = std::move(p);
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "checkpoint: cannot open " + path + " for writing");
  write_checkpoint(os, ck);
  require(static_cast<bool>(os), "checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "checkpoint: cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace phaseamp
