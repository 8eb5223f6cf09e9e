#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "edgespike/common.hpp"
#include "edgespike/network.hpp"
#include "edgespike/runtime.hpp"

namespace edgespike {

inline constexpr std::uint32_t kModelMagic = 0x4b505345u;  // "ESPK" little-endian
inline constexpr std::uint32_t kModelVersion = 1;

// Trained model artifact: float weights, fixed-point weights with scales,
// masks, neuron constants, and training metadata.
struct ModelContainer {
  ArchDescriptor descriptor;
  NetworkParams net;        // float parameters
  FixedNetwork fixed;       // quantized parameters
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

inline ModelContainer make_container(const NetworkParams& net, std::uint64_t seed,
                                     std::uint64_t config_hash) {
  ModelContainer c;
  c.descriptor = net.descriptor;
  c.net = net;
  c.fixed = quantize_weights(net);
  c.seed = seed;
  c.config_hash = config_hash;
  return c;
}

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i < size; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

class ByteWriter {
 public:
  std::vector<std::uint8_t> bytes;

  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const std::size_t n = bytes.size();
    bytes.resize(n + sizeof(T));
    std::memcpy(bytes.data() + n, &v, sizeof(T));
  }
  template <typename T>
  void put_vec(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    const std::size_t n = bytes.size();
    bytes.resize(n + v.size() * sizeof(T));
    if (!v.empty()) std::memcpy(bytes.data() + n, v.data(), v.size() * sizeof(T));
  }
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos_ + sizeof(T) > size_) throw IoError("model file truncated");
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <typename T>
  std::vector<T> get_vec() {
    const auto n = get<std::uint64_t>();
    if (pos_ + n * sizeof(T) > size_) throw IoError("model file truncated");
    std::vector<T> v(static_cast<std::size_t>(n));
    if (n) std::memcpy(v.data(), data_ + pos_, static_cast<std::size_t>(n) * sizeof(T));
    pos_ += static_cast<std::size_t>(n) * sizeof(T);
    return v;
  }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline void put_descriptor(ByteWriter& w, const ArchDescriptor& d) {
  w.put<std::int32_t>(d.depth);
  w.put<std::uint64_t>(d.widths.size());
  for (int v : d.widths) w.put<std::int32_t>(v);
  w.put<std::int32_t>(d.time_steps);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(d.decay_mode));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(d.connectivity));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(d.skip));
  w.put<std::int32_t>(d.input_dim);
  w.put<std::int32_t>(d.num_classes);
}

inline ArchDescriptor get_descriptor(ByteReader& r) {
  ArchDescriptor d;
  d.depth = r.get<std::int32_t>();
  const auto n = r.get<std::uint64_t>();
  d.widths.resize(static_cast<std::size_t>(n));
  for (auto& v : d.widths) v = r.get<std::int32_t>();
  d.time_steps = r.get<std::int32_t>();
  d.decay_mode = static_cast<DecayMode>(r.get<std::uint8_t>());
  d.connectivity = static_cast<Connectivity>(r.get<std::uint8_t>());
  d.skip = static_cast<SkipPattern>(r.get<std::uint8_t>());
  d.input_dim = r.get<std::int32_t>();
  d.num_classes = r.get<std::int32_t>();
  return d;
}

}  // namespace detail

inline void save_model(const std::filesystem::path& path, const ModelContainer& c) {
  detail::ByteWriter w;
  w.put<std::uint32_t>(kModelMagic);
  w.put<std::uint32_t>(kModelVersion);
  detail::put_descriptor(w, c.descriptor);
  w.put<std::uint64_t>(c.net.layers.size());
  for (const LifLayerParams& layer : c.net.layers) {
    w.put<std::int32_t>(layer.width);
    w.put<std::int32_t>(layer.fan_in);
    w.put<float>(layer.beta);
    w.put<float>(layer.theta);
    w.put<std::uint8_t>(layer.has_residual_skip ? 1 : 0);
    w.put_vec(layer.mask);
    w.put_vec(layer.weights);
  }
  for (const FixedWeights& fx : c.fixed.layers) {
    w.put<std::int32_t>(fx.scale);
    w.put_vec(fx.dense);
  }
  w.put<std::uint64_t>(c.seed);
  w.put<std::uint64_t>(c.config_hash);
  const std::uint32_t crc = detail::crc32(w.bytes.data(), w.bytes.size());
  w.put<std::uint32_t>(crc);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open model file for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(w.bytes.data()),
           static_cast<std::streamsize>(w.bytes.size()));
}

inline ModelContainer load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw IoError("model file truncated");

  const std::uint32_t stored_crc = [&] {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + bytes.size() - 4, 4);
    return v;
  }();
  // Magic and version are diagnosed before the checksum so a wrong-type or
  // future-version file gets a specific error.
  detail::ByteReader head(bytes.data(), bytes.size());
  if (head.get<std::uint32_t>() != kModelMagic) throw IoError("not a model file (bad magic)");
  const std::uint32_t version = head.get<std::uint32_t>();
  if (version != kModelVersion)
    throw IoError("unsupported model version: expected " + std::to_string(kModelVersion) +
                  ", found " + std::to_string(version));
  if (detail::crc32(bytes.data(), bytes.size() - 4) != stored_crc)
    throw IoError("model file checksum mismatch");

  detail::ByteReader r(bytes.data(), bytes.size() - 4);
  r.get<std::uint32_t>();  // magic
  r.get<std::uint32_t>();  // version
  ModelContainer c;
  c.descriptor = detail::get_descriptor(r);
  c.net.descriptor = c.descriptor;
  const auto layer_count = r.get<std::uint64_t>();
  c.net.layers.resize(static_cast<std::size_t>(layer_count));
  for (LifLayerParams& layer : c.net.layers) {
    layer.width = r.get<std::int32_t>();
    layer.fan_in = r.get<std::int32_t>();
    layer.beta = r.get<float>();
    layer.theta = r.get<float>();
    layer.has_residual_skip = r.get<std::uint8_t>() != 0;
    layer.mask = r.get_vec<std::uint8_t>();
    layer.weights = r.get_vec<float>();
  }
  // Fixed weights are rebuilt from scales + dense tensors to restore the
  // compacted rows; stored dense tensors are authoritative.
  c.fixed.descriptor = c.descriptor;
  c.fixed.layers.resize(static_cast<std::size_t>(layer_count));
  for (std::size_t l = 0; l < layer_count; ++l) {
    FixedWeights& fx = c.fixed.layers[l];
    const LifLayerParams& layer = c.net.layers[l];
    fx.width = layer.width;
    fx.fan_in = layer.fan_in;
    fx.has_residual_skip = layer.has_residual_skip;
    fx.scale = r.get<std::int32_t>();
    fx.dense = r.get_vec<std::int16_t>();
    if (fx.dense.size() != layer.weights.size()) throw IoError("fixed weight tensor size mismatch");
    fx.rows.resize(static_cast<std::size_t>(fx.fan_in));
    for (int pre = 0; pre < fx.fan_in; ++pre)
      for (int post = 0; post < fx.width; ++post)
        if (layer.m(post, pre)) {
          fx.rows[static_cast<std::size_t>(pre)].push_back({post, fx.dq(post, pre)});
          ++fx.nnz;
        }
    const double to_q = std::ldexp(1.0, kFracBits - fx.scale);
    fx.beta_q = static_cast<std::int32_t>(std::nearbyint(layer.beta * kFixedOne));
    fx.theta_q = static_cast<std::int32_t>(std::nearbyint(layer.theta * to_q));
    fx.one_q = static_cast<std::int32_t>(std::nearbyint(to_q));
  }
  c.seed = r.get<std::uint64_t>();
  c.config_hash = r.get<std::uint64_t>();
  return c;
}

}  // namespace edgespike
