#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "edgespike/common.hpp"
#include "edgespike/rng.hpp"

namespace edgespike {

enum class DecayMode : std::uint8_t { kFixed = 0, kLearnableShared = 1, kLearnablePerLayer = 2 };
enum class Connectivity : std::uint8_t { kDense = 0, kSparse50 = 1, kSparse25 = 2 };
enum class SkipPattern : std::uint8_t { kNone = 0, kResidual = 1, kDenseConnect = 2 };

inline double connectivity_density(Connectivity c) {
  switch (c) {
    case Connectivity::kDense: return 1.0;
    case Connectivity::kSparse50: return 0.5;
    case Connectivity::kSparse25: return 0.25;
  }
  throw ValidationError("unknown connectivity enum");
}

inline const char* to_string(DecayMode m) {
  switch (m) {
    case DecayMode::kFixed: return "fixed";
    case DecayMode::kLearnableShared: return "learnable-shared";
    case DecayMode::kLearnablePerLayer: return "learnable-per-layer";
  }
  throw ValidationError("unknown decay mode enum");
}

inline const char* to_string(Connectivity c) {
  switch (c) {
    case Connectivity::kDense: return "dense";
    case Connectivity::kSparse50: return "sparse50";
    case Connectivity::kSparse25: return "sparse25";
  }
  throw ValidationError("unknown connectivity enum");
}

inline const char* to_string(SkipPattern s) {
  switch (s) {
    case SkipPattern::kNone: return "none";
    case SkipPattern::kResidual: return "residual";
    case SkipPattern::kDenseConnect: return "dense-connect";
  }
  throw ValidationError("unknown skip enum");
}

inline DecayMode decay_mode_from_string(const std::string& s) {
  if (s == "fixed") return DecayMode::kFixed;
  if (s == "learnable-shared" || s == "shared") return DecayMode::kLearnableShared;
  if (s == "learnable-per-layer" || s == "per-layer") return DecayMode::kLearnablePerLayer;
  throw ValidationError("unknown decay mode: " + s);
}

inline Connectivity connectivity_from_string(const std::string& s) {
  if (s == "dense") return Connectivity::kDense;
  if (s == "sparse50") return Connectivity::kSparse50;
  if (s == "sparse25") return Connectivity::kSparse25;
  throw ValidationError("unknown connectivity: " + s);
}

inline SkipPattern skip_from_string(const std::string& s) {
  if (s == "none") return SkipPattern::kNone;
  if (s == "residual") return SkipPattern::kResidual;
  if (s == "dense-connect" || s == "dense") return SkipPattern::kDenseConnect;
  throw ValidationError("unknown skip pattern: " + s);
}

// One point in the architecture search space plus the task I/O dimensions.
struct ArchDescriptor {
  int depth = 2;
  std::vector<int> widths;  // per-layer neuron counts, size == depth
  int time_steps = 8;
  DecayMode decay_mode = DecayMode::kFixed;
  Connectivity connectivity = Connectivity::kDense;
  SkipPattern skip = SkipPattern::kNone;
  int input_dim = 1;
  int num_classes = 2;

  void validate() const {
    static constexpr std::array<int, 4> kDepths{2, 3, 4, 5};
    static constexpr std::array<int, 4> kWidths{64, 128, 256, 512};
    static constexpr std::array<int, 4> kSteps{4, 8, 16, 32};
    auto in = [](auto v, const auto& set) {
      for (auto x : set)
        if (x == v) return true;
      return false;
    };
    if (!in(depth, kDepths)) throw ValidationError("depth must be in {2,3,4,5}");
    if (static_cast<int>(widths.size()) != depth)
      throw ValidationError("widths size must equal depth");
    for (int w : widths)
      if (!in(w, kWidths)) throw ValidationError("layer width must be in {64,128,256,512}");
    if (!in(time_steps, kSteps)) throw ValidationError("time_steps must be in {4,8,16,32}");
    if (input_dim < 1) throw ValidationError("input_dim must be >= 1");
    if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
  }

  // Fan-in of hidden layer l (0-based).  Layer 0 reads the encoder output.
  // Dense-connect concatenates the input raster and all earlier layers'
  // spike frames into the fan-in.
  int fan_in(int layer) const {
    if (skip == SkipPattern::kDenseConnect) {
      int f = input_dim;
      for (int k = 0; k < layer; ++k) f += widths[k];
      return f;
    }
    return layer == 0 ? input_dim : widths[layer - 1];
  }

  // Width of the source feeding layer l directly (previous layer or input).
  int prev_width(int layer) const { return layer == 0 ? input_dim : widths[layer - 1]; }

  bool operator==(const ArchDescriptor&) const = default;

  std::uint64_t hash() const {
    std::uint64_t h = splitmix64(0x45534b50ULL);
    h = hash_combine(h, static_cast<std::uint64_t>(depth));
    for (int w : widths) h = hash_combine(h, static_cast<std::uint64_t>(w));
    h = hash_combine(h, static_cast<std::uint64_t>(time_steps));
    h = hash_combine(h, static_cast<std::uint64_t>(decay_mode));
    h = hash_combine(h, static_cast<std::uint64_t>(connectivity));
    h = hash_combine(h, static_cast<std::uint64_t>(skip));
    h = hash_combine(h, static_cast<std::uint64_t>(input_dim));
    h = hash_combine(h, static_cast<std::uint64_t>(num_classes));
    return h;
  }

  std::string label() const {
    std::string s = "D" + std::to_string(depth) + "_N";
    for (std::size_t i = 0; i < widths.size(); ++i)
      s += (i ? "x" : "") + std::to_string(widths[i]);
    s += "_T" + std::to_string(time_steps);
    s += std::string("_") + to_string(decay_mode);
    s += std::string("_") + to_string(connectivity);
    s += std::string("_") + to_string(skip);
    return s;
  }
};

inline ArchDescriptor make_descriptor(int depth, int width, int time_steps, DecayMode dm,
                                      Connectivity conn, SkipPattern skip, int input_dim,
                                      int num_classes) {
  ArchDescriptor d;
  d.depth = depth;
  d.widths.assign(static_cast<std::size_t>(depth), width);
  d.time_steps = time_steps;
  d.decay_mode = dm;
  d.connectivity = conn;
  d.skip = skip;
  d.input_dim = input_dim;
  d.num_classes = num_classes;
  return d;
}

}  // namespace edgespike
