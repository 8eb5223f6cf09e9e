#pragma once

#include <cmath>
#include <vector>

#include "edgespike/common.hpp"
#include "edgespike/network.hpp"

namespace edgespike {

enum class EncoderKind : std::uint8_t { kDeltaModulation = 0, kThresholdCrossing = 1 };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kDeltaModulation;
  double base_threshold = 0.1;
  double adapt_rate = 0.0;                    // in [0, 1]
  std::vector<double> per_channel_thresholds;  // threshold-crossing only

  void validate() const {
    if (base_threshold <= 0.0) throw ValidationError("encoder base_threshold must be > 0");
    if (adapt_rate < 0.0 || adapt_rate > 1.0) throw ValidationError("encoder adapt_rate must be in [0,1]");
  }
};

// Delta-modulation encoder: 2-channel (ON/OFF) raster of length T for a
// signal of length T+1.  The reference tracks the signal on any spike and
// the threshold adapts as base * (1 + adapt_rate * EMA|delta|), EMA decay
// 0.95.  At most one of ON/OFF fires per step.
inline SpikeRaster delta_encode(const std::vector<double>& signal, const EncoderConfig& config) {
  config.validate();
  if (config.kind != EncoderKind::kDeltaModulation)
    throw ValidationError("delta_encode: config.kind must be delta-modulation");
  if (signal.size() < 2) throw ValidationError("delta_encode: signal must have at least 2 samples");

  const int steps = static_cast<int>(signal.size()) - 1;
  SpikeRaster raster(steps, 2);
  double ref = signal[0];
  double ema = 0.0;
  for (int t = 0; t < steps; ++t) {
    const double x = signal[static_cast<std::size_t>(t) + 1];
    const double delta = x - ref;
    const double threshold = config.base_threshold * (1.0 + config.adapt_rate * ema);
    if (delta > threshold) {
      raster.at(t, 0) = 1;  // ON
      ref = x;
    } else if (-delta > threshold) {
      raster.at(t, 1) = 1;  // OFF
      ref = x;
    }
    ema = 0.95 * ema + 0.05 * std::abs(delta);
  }
  return raster;
}

// Threshold-crossing encoder: spike(t,c) = 1 iff features[t][c] >= thresholds[c].
inline SpikeRaster threshold_encode(const std::vector<std::vector<double>>& features,
                                    const std::vector<double>& thresholds) {
  if (features.empty()) throw ShapeError("threshold_encode: empty feature matrix");
  const int channels = static_cast<int>(thresholds.size());
  for (double th : thresholds)
    if (th <= 0.0) throw ValidationError("threshold_encode: thresholds must be strictly positive");
  SpikeRaster raster(static_cast<int>(features.size()), channels);
  for (int t = 0; t < raster.steps; ++t) {
    const auto& row = features[static_cast<std::size_t>(t)];
    if (static_cast<int>(row.size()) != channels)
      throw ShapeError("threshold_encode: feature row width does not match thresholds");
    for (int c = 0; c < channels; ++c)
      raster.at(t, c) = row[static_cast<std::size_t>(c)] >= thresholds[static_cast<std::size_t>(c)] ? 1 : 0;
  }
  return raster;
}

}  // namespace edgespike
