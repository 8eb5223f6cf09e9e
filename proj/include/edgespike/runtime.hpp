#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "edgespike/common.hpp"
#include "edgespike/network.hpp"

namespace edgespike {

// Per-time-step sorted list of active input indices.
using EventList = std::vector<std::int32_t>;

inline EventList to_events(const std::vector<std::uint8_t>& frame) {
  EventList events;
  for (std::int32_t j = 0; j < static_cast<std::int32_t>(frame.size()); ++j)
    if (frame[static_cast<std::size_t>(j)]) events.push_back(j);
  return events;
}

inline std::vector<std::uint8_t> from_events(const EventList& events, int width) {
  std::vector<std::uint8_t> frame(static_cast<std::size_t>(width), 0);
  std::int32_t prev = -1;
  for (std::int32_t j : events) {
    if (j <= prev) throw ValidationError("from_events: indices must be strictly increasing");
    if (j < 0 || j >= width) throw ValidationError("from_events: index out of range");
    frame[static_cast<std::size_t>(j)] = 1;
    prev = j;
  }
  return frame;
}

// Q3.12 fixed-point constants.
inline constexpr int kFracBits = 12;
inline constexpr std::int32_t kFixedOne = 1 << kFracBits;  // 4096

struct WeightPair {
  std::int32_t post;
  std::int16_t weight;
};

// One layer's packed 16-bit weights: per pre-synaptic index the list of
// (post, weight) pairs covering exactly the nonzero mask entries, plus a
// dense copy for the reference path.  All layer quantities (weights, theta,
// membrane) share the per-layer scale exponent: value = q * 2^scale / 4096.
struct FixedWeights {
  int width = 0;
  int fan_in = 0;
  int scale = 0;  // power-of-two exponent, >= 0
  std::vector<std::vector<WeightPair>> rows;  // indexed by pre-synaptic index
  std::vector<std::int16_t> dense;            // width * fan_in, masked zeros
  std::int32_t beta_q = 0;   // Q3.12, scale-free multiplier
  std::int32_t theta_q = 0;  // in layer units
  std::int32_t one_q = 0;    // identity skip current (1.0) in layer units
  bool has_residual_skip = false;
  std::uint64_t nnz = 0;

  std::int16_t dq(int post, int pre) const {
    return dense[static_cast<std::size_t>(post) * fan_in + pre];
  }
  double dequantize(std::int16_t q) const { return static_cast<double>(q) * std::ldexp(1.0, scale - kFracBits); }
};

// Round-to-nearest-even quantization of one layer.  The scale exponent is
// the smallest power of two bringing every weight into Q3.12 range.
inline FixedWeights quantize_layer(const LifLayerParams& layer) {
  FixedWeights fx;
  fx.width = layer.width;
  fx.fan_in = layer.fan_in;
  fx.has_residual_skip = layer.has_residual_skip;

  float max_abs = 0.0f;
  for (float w : layer.weights) max_abs = std::max(max_abs, std::abs(w));
  int scale = 0;
  while (std::abs(std::nearbyint(std::ldexp(static_cast<double>(max_abs), kFracBits - scale))) > 32767.0)
    ++scale;
  fx.scale = scale;

  const double to_q = std::ldexp(1.0, kFracBits - scale);
  fx.dense.resize(layer.weights.size(), 0);
  fx.rows.resize(static_cast<std::size_t>(fx.fan_in));
  for (int pre = 0; pre < fx.fan_in; ++pre)
    for (int post = 0; post < fx.width; ++post)
      if (layer.m(post, pre)) {
        const auto q = static_cast<std::int16_t>(std::nearbyint(layer.w(post, pre) * to_q));
        fx.dense[static_cast<std::size_t>(post) * fx.fan_in + pre] = q;
        fx.rows[static_cast<std::size_t>(pre)].push_back({post, q});
        ++fx.nnz;
      }

  fx.beta_q = static_cast<std::int32_t>(std::nearbyint(layer.beta * kFixedOne));
  fx.theta_q = static_cast<std::int32_t>(std::nearbyint(layer.theta * to_q));
  fx.one_q = static_cast<std::int32_t>(std::nearbyint(to_q));
  return fx;
}

struct FixedNetwork {
  ArchDescriptor descriptor;
  std::vector<FixedWeights> layers;
};

inline FixedNetwork quantize_weights(const NetworkParams& net) {
  FixedNetwork fx;
  fx.descriptor = net.descriptor;
  fx.layers.reserve(net.layers.size());
  for (const LifLayerParams& layer : net.layers) fx.layers.push_back(quantize_layer(layer));
  return fx;
}

struct OpCounter {
  std::uint64_t ac_count = 0;
  std::uint64_t neuron_updates = 0;
  std::uint64_t dense_equivalent_macs = 0;
  std::vector<std::uint64_t> ac_per_layer;
  bool overflow = false;
};

// Accumulates the weight rows of every active pre-index into acc, counting
// one AC per stored pair touched.  32-bit saturating on overflow.
inline void sparse_accumulate(const FixedWeights& weights, const EventList& events,
                              std::vector<std::int32_t>& acc, OpCounter& counter) {
  for (std::int32_t pre : events) {
    if (pre < 0 || pre >= weights.fan_in) throw ValidationError("sparse_accumulate: event index out of range");
    const auto& row = weights.rows[static_cast<std::size_t>(pre)];
    for (const WeightPair& p : row) {
      const std::int64_t v = static_cast<std::int64_t>(acc[static_cast<std::size_t>(p.post)]) + p.weight;
      if (v > std::numeric_limits<std::int32_t>::max()) {
        acc[static_cast<std::size_t>(p.post)] = std::numeric_limits<std::int32_t>::max();
        counter.overflow = true;
      } else if (v < std::numeric_limits<std::int32_t>::min()) {
        acc[static_cast<std::size_t>(p.post)] = std::numeric_limits<std::int32_t>::min();
        counter.overflow = true;
      } else {
        acc[static_cast<std::size_t>(p.post)] = static_cast<std::int32_t>(v);
      }
    }
    counter.ac_count += row.size();
  }
}

struct FixedInferenceResult {
  int prediction = 0;
  std::vector<int> class_counts;
  std::vector<SpikeRaster> layer_rasters;
  std::vector<double> layer_rates;       // output rate per layer
  std::vector<double> input_rates;       // input-event rate per layer (pre-synaptic rho)
  OpCounter counter;
};

namespace detail {

// Fixed-point LIF update shared by the sparse and dense reference paths;
// identical arithmetic keeps the two bit-exact.
inline void fixed_lif_update(const FixedWeights& fx, const std::vector<std::int32_t>& current,
                             std::vector<std::int32_t>& u, std::vector<std::uint8_t>& s_prev,
                             std::uint8_t* out_frame) {
  for (int i = 0; i < fx.width; ++i) {
    const std::int64_t reset = static_cast<std::int64_t>(u[static_cast<std::size_t>(i)]) -
                               (s_prev[static_cast<std::size_t>(i)] ? fx.theta_q : 0);
    const std::int64_t decayed = (static_cast<std::int64_t>(fx.beta_q) * reset) >> kFracBits;
    const std::int64_t next = decayed + current[static_cast<std::size_t>(i)];
    const auto clamped = static_cast<std::int32_t>(
        std::max<std::int64_t>(std::numeric_limits<std::int32_t>::min(),
                               std::min<std::int64_t>(std::numeric_limits<std::int32_t>::max(), next)));
    const std::uint8_t s = clamped >= fx.theta_q ? 1 : 0;
    u[static_cast<std::size_t>(i)] = clamped;
    s_prev[static_cast<std::size_t>(i)] = s;
    out_frame[i] = s;
  }
}

inline void finalize_result(const ArchDescriptor& desc, FixedInferenceResult& res,
                            const std::vector<std::uint64_t>& input_events_seen) {
  const int L = static_cast<int>(res.layer_rasters.size());
  res.layer_rates.resize(static_cast<std::size_t>(L));
  res.input_rates.resize(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    const SpikeRaster& r = res.layer_rasters[static_cast<std::size_t>(l)];
    std::uint64_t spikes = 0;
    for (std::uint8_t b : r.data) spikes += b;
    res.layer_rates[static_cast<std::size_t>(l)] =
        static_cast<double>(spikes) / (static_cast<double>(r.steps) * r.width);
  }
  res.class_counts.assign(static_cast<std::size_t>(desc.num_classes), 0);
  const SpikeRaster& out = res.layer_rasters.back();
  for (int t = 0; t < out.steps; ++t)
    for (int c = 0; c < desc.num_classes; ++c) res.class_counts[static_cast<std::size_t>(c)] += out.at(t, c);
  res.prediction = 0;
  for (int c = 1; c < desc.num_classes; ++c)
    if (res.class_counts[static_cast<std::size_t>(c)] > res.class_counts[static_cast<std::size_t>(res.prediction)])
      res.prediction = c;
  (void)input_events_seen;
}

}  // namespace detail

// Event-driven fixed-point inference.  Spike outputs are bit-identical to
// infer_dense_fixed; the OpCounter records exactly the accumulations done.
inline FixedInferenceResult infer_sparse(const FixedNetwork& net, const SpikeRaster& raster) {
  const ArchDescriptor& desc = net.descriptor;
  if (raster.steps != desc.time_steps || raster.width != desc.input_dim)
    throw ShapeError("infer_sparse: raster shape does not match descriptor");

  const int L = static_cast<int>(net.layers.size());
  FixedInferenceResult res;
  res.counter.ac_per_layer.assign(static_cast<std::size_t>(L), 0);
  std::vector<std::vector<std::int32_t>> u(static_cast<std::size_t>(L));
  std::vector<std::vector<std::uint8_t>> s_prev(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    u[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(net.layers[static_cast<std::size_t>(l)].width), 0);
    s_prev[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(net.layers[static_cast<std::size_t>(l)].width), 0);
    res.layer_rasters.emplace_back(desc.time_steps, net.layers[static_cast<std::size_t>(l)].width);
    res.counter.neuron_updates +=
        static_cast<std::uint64_t>(net.layers[static_cast<std::size_t>(l)].width) * desc.time_steps;
    res.counter.dense_equivalent_macs += net.layers[static_cast<std::size_t>(l)].nnz * desc.time_steps;
  }
  std::vector<std::uint64_t> input_events(static_cast<std::size_t>(L), 0);

  std::vector<std::int32_t> acc;
  for (int t = 0; t < desc.time_steps; ++t) {
    // Event lists of this step's already-computed frames; [0] is the input.
    std::vector<EventList> frame_events;
    frame_events.reserve(static_cast<std::size_t>(L) + 1);
    {
      EventList ev;
      const std::uint8_t* f = raster.frame(t);
      for (std::int32_t j = 0; j < desc.input_dim; ++j)
        if (f[j]) ev.push_back(j);
      frame_events.push_back(std::move(ev));
    }

    for (int l = 0; l < L; ++l) {
      const FixedWeights& fx = net.layers[static_cast<std::size_t>(l)];
      acc.assign(static_cast<std::size_t>(fx.width), 0);

      const std::uint64_t before = res.counter.ac_count;
      if (desc.skip == SkipPattern::kDenseConnect) {
        // Concatenated fan-in: offset each source's event indices.
        EventList ev;
        std::int32_t offset = 0;
        for (int src = 0; src <= l; ++src) {
          for (std::int32_t j : frame_events[static_cast<std::size_t>(src)]) ev.push_back(offset + j);
          offset += src == 0 ? desc.input_dim : net.layers[static_cast<std::size_t>(src - 1)].width;
        }
        input_events[static_cast<std::size_t>(l)] += ev.size();
        sparse_accumulate(fx, ev, acc, res.counter);
      } else {
        const EventList& ev = frame_events[static_cast<std::size_t>(l)];
        input_events[static_cast<std::size_t>(l)] += ev.size();
        sparse_accumulate(fx, ev, acc, res.counter);
        if (fx.has_residual_skip)
          for (std::int32_t j : ev) acc[static_cast<std::size_t>(j)] += fx.one_q;
      }
      res.counter.ac_per_layer[static_cast<std::size_t>(l)] += res.counter.ac_count - before;

      std::uint8_t* row = res.layer_rasters[static_cast<std::size_t>(l)].frame(t);
      detail::fixed_lif_update(fx, acc, u[static_cast<std::size_t>(l)], s_prev[static_cast<std::size_t>(l)], row);
      frame_events.push_back(to_events(std::vector<std::uint8_t>(row, row + fx.width)));
    }
  }

  if (res.counter.overflow) throw NumericError("infer_sparse: accumulator overflow");
  detail::finalize_result(desc, res, input_events);
  for (int l = 0; l < L; ++l) {
    const int fan = net.layers[static_cast<std::size_t>(l)].fan_in;
    res.input_rates[static_cast<std::size_t>(l)] =
        static_cast<double>(input_events[static_cast<std::size_t>(l)]) /
        (static_cast<double>(desc.time_steps) * fan);
  }
  return res;
}

// Dense fixed-point reference: identical arithmetic, full matrix traversal.
inline FixedInferenceResult infer_dense_fixed(const FixedNetwork& net, const SpikeRaster& raster) {
  const ArchDescriptor& desc = net.descriptor;
  if (raster.steps != desc.time_steps || raster.width != desc.input_dim)
    throw ShapeError("infer_dense_fixed: raster shape does not match descriptor");

  const int L = static_cast<int>(net.layers.size());
  FixedInferenceResult res;
  res.counter.ac_per_layer.assign(static_cast<std::size_t>(L), 0);
  std::vector<std::vector<std::int32_t>> u(static_cast<std::size_t>(L));
  std::vector<std::vector<std::uint8_t>> s_prev(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    const FixedWeights& fx = net.layers[static_cast<std::size_t>(l)];
    u[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(fx.width), 0);
    s_prev[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(fx.width), 0);
    res.layer_rasters.emplace_back(desc.time_steps, fx.width);
    res.counter.neuron_updates += static_cast<std::uint64_t>(fx.width) * desc.time_steps;
    res.counter.dense_equivalent_macs += fx.nnz * desc.time_steps;
  }
  std::vector<std::uint64_t> input_events(static_cast<std::size_t>(L), 0);

  std::vector<std::int32_t> acc;
  for (int t = 0; t < desc.time_steps; ++t) {
    std::vector<const std::uint8_t*> frames;
    std::vector<int> frame_widths;
    frames.push_back(raster.frame(t));
    frame_widths.push_back(desc.input_dim);

    for (int l = 0; l < L; ++l) {
      const FixedWeights& fx = net.layers[static_cast<std::size_t>(l)];
      acc.assign(static_cast<std::size_t>(fx.width), 0);

      if (desc.skip == SkipPattern::kDenseConnect) {
        int offset = 0;
        for (int src = 0; src <= l; ++src) {
          const std::uint8_t* f = frames[static_cast<std::size_t>(src)];
          for (int j = 0; j < frame_widths[static_cast<std::size_t>(src)]; ++j) {
            if (!f[j]) continue;
            const int pre = offset + j;
            for (int i = 0; i < fx.width; ++i)
              acc[static_cast<std::size_t>(i)] += fx.dq(i, pre);
          }
          offset += frame_widths[static_cast<std::size_t>(src)];
        }
      } else {
        const std::uint8_t* f = frames[static_cast<std::size_t>(l)];
        for (int j = 0; j < fx.fan_in; ++j) {
          if (!f[j]) continue;
          ++input_events[static_cast<std::size_t>(l)];
          for (int i = 0; i < fx.width; ++i)
            acc[static_cast<std::size_t>(i)] += fx.dq(i, j);
          if (fx.has_residual_skip) acc[static_cast<std::size_t>(j)] += fx.one_q;
        }
      }

      std::uint8_t* row = res.layer_rasters[static_cast<std::size_t>(l)].frame(t);
      detail::fixed_lif_update(fx, acc, u[static_cast<std::size_t>(l)], s_prev[static_cast<std::size_t>(l)], row);
      frames.push_back(row);
      frame_widths.push_back(fx.width);
    }
  }

  detail::finalize_result(desc, res, input_events);
  for (int l = 0; l < L; ++l) {
    const int fan = net.layers[static_cast<std::size_t>(l)].fan_in;
    res.input_rates[static_cast<std::size_t>(l)] =
        static_cast<double>(input_events[static_cast<std::size_t>(l)]) /
        (static_cast<double>(desc.time_steps) * fan);
  }
  return res;
}

// Fraction of dense MACs saved at mean spike-activity rate rho.
inline double mac_reduction(double rho) {
  if (rho < 0.0 || rho > 1.0) throw ValidationError("mac_reduction: rho must be in [0,1]");
  return 1.0 - rho;
}

}  // namespace edgespike
