#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "edgespike/common.hpp"
#include "edgespike/network.hpp"
#include "edgespike/runtime.hpp"

namespace edgespike {

// Fixed scale of the int16 pending-delta accumulator.
inline constexpr int kDeltaFracBits = 16;
inline constexpr double kDeltaScale = 1.0 / 65536.0;  // 2^-16

struct PlasticityConfig {
  double eta = 1e-4;           // local learning rate
  double lambda_decay = 5e-4;  // weight decay toward zero
  double gamma = 0.9;          // EMA trace decay
  int flush_interval = 1000;   // inferences between weight commits
  int trace_group = 16;        // synapses per bookkeeping group

  void validate() const {
    if (eta <= 0.0 || lambda_decay < 0.0) throw ValidationError("plasticity rates out of range");
    if (gamma < 0.0 || gamma >= 1.0) throw ValidationError("trace gamma must be in [0,1)");
    if (flush_interval < 1 || trace_group < 1)
      throw ValidationError("flush interval and trace group must be >= 1");
  }
};

// Adaptation working-state budget: 8 bytes of trace/accumulator bookkeeping
// per synapse group.
inline std::uint64_t plasticity_state_bytes(std::uint64_t nnz, int group_size) {
  if (group_size < 1) throw ValidationError("plasticity_state_bytes: group size must be >= 1");
  return 8ull * ((nnz + static_cast<std::uint64_t>(group_size) - 1) / group_size);
}

// Exponential spike traces for one layer boundary.
struct TraceState {
  std::vector<float> pre, post;
  double gamma = 0.9;

  TraceState() = default;
  TraceState(int fan_in, int width, double g)
      : pre(static_cast<std::size_t>(fan_in), 0.0f), post(static_cast<std::size_t>(width), 0.0f), gamma(g) {}

  void update(const std::uint8_t* pre_frame, const std::uint8_t* post_frame) {
    const auto g = static_cast<float>(gamma);
    const auto c = static_cast<float>(1.0 - gamma);
    for (std::size_t j = 0; j < pre.size(); ++j) pre[j] = g * pre[j] + c * pre_frame[j];
    for (std::size_t i = 0; i < post.size(); ++i) post[i] = g * post[i] + c * post_frame[i];
  }

  void reset() {
    std::fill(pre.begin(), pre.end(), 0.0f);
    std::fill(post.begin(), post.end(), 0.0f);
  }
};

// Correlation-minus-decay local update for one synapse.
inline double hebbian_delta(double pre_trace, double post_trace, double weight,
                            const PlasticityConfig& cfg) {
  return cfg.eta * (pre_trace * post_trace - cfg.lambda_decay * weight);
}

// Saturating int16 accumulator holding uncommitted weight deltas at 2^-16.
struct DeltaAccumulator {
  std::vector<std::int16_t> q;
  bool saturated = false;

  explicit DeltaAccumulator(std::size_t size = 0) : q(size, 0) {}

  void accumulate(std::size_t idx, double delta) {
    const auto add = static_cast<std::int64_t>(std::llround(delta / kDeltaScale));
    const std::int64_t v = static_cast<std::int64_t>(q[idx]) + add;
    if (v > std::numeric_limits<std::int16_t>::max()) {
      q[idx] = std::numeric_limits<std::int16_t>::max();
      saturated = true;
    } else if (v < std::numeric_limits<std::int16_t>::min()) {
      q[idx] = std::numeric_limits<std::int16_t>::min();
      saturated = true;
    } else {
      q[idx] = static_cast<std::int16_t>(v);
    }
  }

  double dequantize(std::size_t idx) const { return static_cast<double>(q[idx]) * kDeltaScale; }
  void clear() {
    std::fill(q.begin(), q.end(), 0);
    saturated = false;
  }
};

struct FlushRecord {
  std::uint64_t flush_index = 0;
  std::uint64_t inference_count = 0;
  double max_abs_delta = 0.0;
  std::uint64_t changed_synapses = 0;
};

// First-layer-only local adaptation engine.  Traces are updated every time
// step of every observed inference; deltas accumulate in int16 and are
// committed to the float weights (with re-quantization of the fixed-point
// copy) every flush_interval inferences.  A failed persistence callback
// pauses adaptation with the pending deltas retained.
class PlasticityEngine {
 public:
  using PersistFn = std::function<bool(const FlushRecord&)>;

  PlasticityEngine(const PlasticityConfig& cfg, NetworkParams& net, FixedNetwork& fixed,
                   PersistFn persist = {})
      : cfg_(cfg),
        net_(net),
        fixed_(fixed),
        traces_(net.layers.front().fan_in, net.layers.front().width, cfg.gamma),
        acc_(net.layers.front().weights.size()),
        persist_(std::move(persist)) {
    cfg_.validate();
    if (net.layers.empty()) throw ValidationError("plasticity: network has no layers");
  }

  bool paused() const { return paused_; }
  std::uint64_t inference_count() const { return inferences_; }
  std::uint64_t flush_count() const { return flushes_; }
  const DeltaAccumulator& pending() const { return acc_; }

  std::uint64_t state_bytes() const {
    return plasticity_state_bytes(net_.layers.front().nnz(), cfg_.trace_group);
  }

  // Feeds one completed inference (input raster plus the first layer's
  // output raster) into the traces and the pending deltas.
  void observe(const SpikeRaster& input, const SpikeRaster& layer0_output) {
    LifLayerParams& layer = net_.layers.front();
    if (input.width != layer.fan_in || layer0_output.width != layer.width ||
        input.steps != layer0_output.steps)
      throw ShapeError("plasticity observe: raster shapes do not match first layer");
    if (paused_) {
      ++inferences_;
      return;
    }

    for (int t = 0; t < input.steps; ++t) {
      traces_.update(input.frame(t), layer0_output.frame(t));
      for (int i = 0; i < layer.width; ++i)
        for (int j = 0; j < layer.fan_in; ++j) {
          if (!layer.m(i, j)) continue;
          const double d = hebbian_delta(traces_.pre[static_cast<std::size_t>(j)],
                                         traces_.post[static_cast<std::size_t>(i)],
                                         layer.w(i, j), cfg_);
          acc_.accumulate(static_cast<std::size_t>(i) * layer.fan_in + j, d);
        }
    }

    ++inferences_;
    if (inferences_ % static_cast<std::uint64_t>(cfg_.flush_interval) == 0) flush();
  }

  // Commits pending deltas into the float weights and refreshes the
  // first layer's fixed-point copy.
  void flush() {
    LifLayerParams& layer = net_.layers.front();
    FlushRecord rec;
    rec.flush_index = flushes_;
    rec.inference_count = inferences_;
    for (std::size_t idx = 0; idx < acc_.q.size(); ++idx) {
      if (acc_.q[idx] == 0) continue;
      ++rec.changed_synapses;
      rec.max_abs_delta = std::max(rec.max_abs_delta, std::abs(acc_.dequantize(idx)));
    }

    if (persist_ && !persist_(rec)) {
      // Persistence failed: keep the deltas, stop adapting.
      paused_ = true;
      return;
    }

    for (std::size_t idx = 0; idx < acc_.q.size(); ++idx)
      layer.weights[idx] += static_cast<float>(acc_.dequantize(idx));
    acc_.clear();
    fixed_.layers.front() = quantize_layer(layer);
    ++flushes_;
  }

  void resume() { paused_ = false; }

 private:
  PlasticityConfig cfg_;
  NetworkParams& net_;
  FixedNetwork& fixed_;
  TraceState traces_;
  DeltaAccumulator acc_;
  PersistFn persist_;
  std::uint64_t inferences_ = 0;
  std::uint64_t flushes_ = 0;
  bool paused_ = false;
};

// Convenience wrapper: event-driven inference plus plasticity observation.
inline FixedInferenceResult step_inference(const FixedNetwork& fixed, const SpikeRaster& raster,
                                           PlasticityEngine& engine) {
  FixedInferenceResult res = infer_sparse(fixed, raster);
  engine.observe(raster, res.layer_rasters.front());
  return res;
}

}  // namespace edgespike
