#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "edgespike/arch.hpp"
#include "edgespike/common.hpp"
#include "edgespike/rng.hpp"

namespace edgespike {

// Dense T x N binary spike record.  Row t holds the spike frame at step t.
struct SpikeRaster {
  int steps = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // steps * width, row-major

  SpikeRaster() = default;
  SpikeRaster(int t, int n) : steps(t), width(n), data(static_cast<std::size_t>(t) * n, 0) {}

  std::uint8_t& at(int t, int i) { return data[static_cast<std::size_t>(t) * width + i]; }
  std::uint8_t at(int t, int i) const { return data[static_cast<std::size_t>(t) * width + i]; }
  const std::uint8_t* frame(int t) const { return data.data() + static_cast<std::size_t>(t) * width; }
  std::uint8_t* frame(int t) { return data.data() + static_cast<std::size_t>(t) * width; }
};

// Weights and neuron constants of one LIF layer.  Masked-out weights are
// exactly zero; beta/theta are scalars shared across the layer.
struct LifLayerParams {
  int width = 0;
  int fan_in = 0;
  std::vector<float> weights;      // width * fan_in, row-major (post, pre)
  std::vector<std::uint8_t> mask;  // same shape, 0/1
  float beta = 0.9f;
  float theta = 1.0f;
  bool has_residual_skip = false;  // identity current from the direct predecessor

  float& w(int post, int pre) { return weights[static_cast<std::size_t>(post) * fan_in + pre]; }
  float w(int post, int pre) const { return weights[static_cast<std::size_t>(post) * fan_in + pre]; }
  std::uint8_t m(int post, int pre) const { return mask[static_cast<std::size_t>(post) * fan_in + pre]; }

  std::size_t nnz() const {
    return static_cast<std::size_t>(std::accumulate(mask.begin(), mask.end(), std::uint64_t{0}));
  }
};

struct NetworkParams {
  ArchDescriptor descriptor;
  std::vector<LifLayerParams> layers;  // descriptor.depth hidden layers + 1 readout

  int num_layers() const { return static_cast<int>(layers.size()); }
  int hidden_layers() const { return descriptor.depth; }
  const LifLayerParams& readout() const { return layers.back(); }
};

struct MembraneState {
  std::vector<float> u;
  std::vector<std::uint8_t> s_prev;

  explicit MembraneState(int width) : u(width, 0.0f), s_prev(width, 0) {}
};

namespace detail {

// Deterministic mask with exactly round(density * rows) nonzeros in every
// pre-synaptic column, hence exactly round(density * size) in total.  The
// per-column balance makes the event-driven accumulate count an exact
// function of the input spike count.
inline std::vector<std::uint8_t> draw_mask(int rows, int cols, double density, Rng& rng) {
  const std::size_t size = static_cast<std::size_t>(rows) * cols;
  std::vector<std::uint8_t> mask(size, 0);
  if (density >= 1.0) {
    std::fill(mask.begin(), mask.end(), std::uint8_t{1});
    return mask;
  }
  const auto per_col = static_cast<std::size_t>(std::llround(density * static_cast<double>(rows)));
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(rows));
  for (int col = 0; col < cols; ++col) {
    std::iota(idx.begin(), idx.end(), 0u);
    rng.shuffle(idx);
    for (std::size_t k = 0; k < per_col; ++k)
      mask[static_cast<std::size_t>(idx[k]) * cols + col] = 1;
  }
  return mask;
}

}  // namespace detail

// Instantiates the descriptor: D hidden LIF layers plus a readout layer of
// num_classes neurons.  Connectivity masks and weight draws are fully
// determined by the seed.  Weight init is uniform in +-sqrt(6/fan_in)/rho_W
// so the expected input current is connectivity-invariant.
namespace detail {
inline NetworkParams build_network_unchecked(const ArchDescriptor& desc, std::uint64_t seed);
}

inline NetworkParams build_network(const ArchDescriptor& desc, std::uint64_t seed) {
  desc.validate();
  return detail::build_network_unchecked(desc, seed);
}

// Same construction without the search-grid validation; used for reduced
// instances (oracle tests, toy examples) whose dimensions are off-grid.
inline NetworkParams detail::build_network_unchecked(const ArchDescriptor& desc,
                                                     std::uint64_t seed) {
  const double density = connectivity_density(desc.connectivity);

  NetworkParams net;
  net.descriptor = desc;
  net.layers.reserve(static_cast<std::size_t>(desc.depth) + 1);

  bool any_residual = false;
  for (int l = 0; l <= desc.depth; ++l) {
    const bool is_readout = (l == desc.depth);
    LifLayerParams layer;
    layer.width = is_readout ? desc.num_classes : desc.widths[l];
    if (desc.skip == SkipPattern::kDenseConnect) {
      int f = desc.input_dim;
      for (int k = 0; k < l; ++k) f += desc.widths[k];
      layer.fan_in = f;
    } else {
      layer.fan_in = l == 0 ? desc.input_dim : desc.widths[l - 1];
    }
    layer.beta = 0.9f;
    layer.theta = 1.0f;

    const double layer_density = is_readout ? 1.0 : density;
    Rng mask_rng = Rng::substream(seed, "mask", static_cast<std::uint64_t>(l));
    layer.mask = detail::draw_mask(layer.width, layer.fan_in, layer_density, mask_rng);

    Rng w_rng = Rng::substream(seed, "weights", static_cast<std::uint64_t>(l));
    const double bound = std::sqrt(6.0 / layer.fan_in) / layer_density;
    layer.weights.resize(layer.mask.size());
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      const double v = w_rng.uniform(-bound, bound);
      layer.weights[i] = layer.mask[i] ? static_cast<float>(v) : 0.0f;
    }

    if (desc.skip == SkipPattern::kResidual && !is_readout && l > 0 &&
        desc.widths[l] == desc.widths[l - 1]) {
      layer.has_residual_skip = true;
      any_residual = true;
    }
    net.layers.push_back(std::move(layer));
  }

  if (desc.skip == SkipPattern::kResidual && !any_residual)
    throw ValidationError("descriptor infeasible: residual skip requested but no adjacent layer widths match");
  return net;
}

struct SpikeFrame {
  std::vector<std::uint8_t> s;
};

// One LIF step: u' = beta * (u - theta * s_prev) + input_current, spike iff
// u' >= theta (soft reset, inclusive threshold).
inline SpikeFrame lif_step(MembraneState& state, const std::vector<float>& input_current,
                           const LifLayerParams& params) {
  if (static_cast<int>(input_current.size()) != params.width ||
      static_cast<int>(state.u.size()) != params.width)
    throw ShapeError("lif_step: vector width does not match layer width");
  SpikeFrame out;
  out.s.resize(input_current.size());
  for (int i = 0; i < params.width; ++i) {
    const float cur = input_current[i];
    if (!std::isfinite(cur)) throw NumericError("lif_step: non-finite input current");
    const float u = params.beta * (state.u[i] - params.theta * static_cast<float>(state.s_prev[i])) + cur;
    const std::uint8_t s = u >= params.theta ? 1 : 0;
    state.u[i] = u;
    state.s_prev[i] = s;
    out.s[i] = s;
  }
  return out;
}

struct ForwardResult {
  std::vector<int> class_counts;           // sum of readout spikes over time
  std::vector<SpikeRaster> layer_rasters;  // one per layer, readout last
  std::vector<double> layer_rates;         // mean firing rate per layer
  int prediction = 0;                      // argmax count, lowest index on ties
};

namespace detail {

// Gathers the input current of layer l at step t from the already-computed
// spike frames of the current step.  `frames[0]` is the input frame.
inline void layer_current(const NetworkParams& net, int l,
                          const std::vector<const std::uint8_t*>& frames,
                          std::vector<float>& current) {
  const LifLayerParams& layer = net.layers[static_cast<std::size_t>(l)];
  current.assign(static_cast<std::size_t>(layer.width), 0.0f);
  const SkipPattern skip = net.descriptor.skip;

  if (skip == SkipPattern::kDenseConnect) {
    // Concatenated fan-in: input raster then each earlier layer in order.
    int offset = 0;
    for (int src = 0; src <= l; ++src) {
      const int src_width = src == 0 ? net.descriptor.input_dim
                                     : net.layers[static_cast<std::size_t>(src - 1)].width;
      const std::uint8_t* f = frames[static_cast<std::size_t>(src)];
      for (int j = 0; j < src_width; ++j) {
        if (!f[j]) continue;
        const int pre = offset + j;
        for (int i = 0; i < layer.width; ++i) current[static_cast<std::size_t>(i)] += layer.w(i, pre);
      }
      offset += src_width;
    }
  } else {
    const std::uint8_t* f = frames[static_cast<std::size_t>(l)];
    for (int j = 0; j < layer.fan_in; ++j) {
      if (!f[j]) continue;
      for (int i = 0; i < layer.width; ++i) current[static_cast<std::size_t>(i)] += layer.w(i, j);
    }
    if (layer.has_residual_skip)
      for (int i = 0; i < layer.width; ++i) current[static_cast<std::size_t>(i)] += static_cast<float>(f[i]);
  }
}

}  // namespace detail

// Dense float reference forward pass: fresh zero state, every layer stepped
// at every time step, readout counts accumulated over time.
inline ForwardResult forward_dense(const NetworkParams& net, const SpikeRaster& raster) {
  const ArchDescriptor& desc = net.descriptor;
  if (raster.steps != desc.time_steps || raster.width != desc.input_dim)
    throw ShapeError("forward_dense: raster shape does not match descriptor");

  const int L = net.num_layers();
  std::vector<MembraneState> states;
  states.reserve(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) states.emplace_back(net.layers[static_cast<std::size_t>(l)].width);

  ForwardResult res;
  res.layer_rasters.reserve(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l)
    res.layer_rasters.emplace_back(desc.time_steps, net.layers[static_cast<std::size_t>(l)].width);
  res.class_counts.assign(static_cast<std::size_t>(desc.num_classes), 0);

  std::vector<float> current;
  for (int t = 0; t < desc.time_steps; ++t) {
    std::vector<const std::uint8_t*> frames;
    frames.reserve(static_cast<std::size_t>(L) + 1);
    frames.push_back(raster.frame(t));
    for (int l = 0; l < L; ++l) {
      detail::layer_current(net, l, frames, current);
      SpikeFrame sf = lif_step(states[static_cast<std::size_t>(l)], current,
                               net.layers[static_cast<std::size_t>(l)]);
      std::uint8_t* row = res.layer_rasters[static_cast<std::size_t>(l)].frame(t);
      std::copy(sf.s.begin(), sf.s.end(), row);
      frames.push_back(row);
    }
    const std::uint8_t* out = res.layer_rasters.back().frame(t);
    for (int c = 0; c < desc.num_classes; ++c) res.class_counts[static_cast<std::size_t>(c)] += out[c];
  }

  res.layer_rates.resize(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    const SpikeRaster& r = res.layer_rasters[static_cast<std::size_t>(l)];
    const auto total = std::accumulate(r.data.begin(), r.data.end(), std::uint64_t{0});
    res.layer_rates[static_cast<std::size_t>(l)] =
        static_cast<double>(total) / (static_cast<double>(r.steps) * r.width);
  }

  res.prediction = 0;
  for (int c = 1; c < desc.num_classes; ++c)
    if (res.class_counts[static_cast<std::size_t>(c)] > res.class_counts[static_cast<std::size_t>(res.prediction)])
      res.prediction = c;
  return res;
}

struct FiringRateStats {
  std::vector<double> per_layer;  // rho_l
  double network = 0.0;           // mean of rho_l weighted by N_l
};

inline FiringRateStats firing_rate_stats(const std::vector<SpikeRaster>& rasters) {
  if (rasters.empty()) throw ValidationError("firing_rate_stats: empty raster list");
  FiringRateStats stats;
  stats.per_layer.reserve(rasters.size());
  double weighted = 0.0;
  double total_n = 0.0;
  for (const SpikeRaster& r : rasters) {
    if (r.steps <= 0 || r.width <= 0) throw ShapeError("firing_rate_stats: empty raster");
    const auto spikes = std::accumulate(r.data.begin(), r.data.end(), std::uint64_t{0});
    const double rho = static_cast<double>(spikes) / (static_cast<double>(r.steps) * r.width);
    stats.per_layer.push_back(rho);
    weighted += rho * r.width;
    total_n += r.width;
  }
  stats.network = weighted / total_n;
  return stats;
}

}  // namespace edgespike
