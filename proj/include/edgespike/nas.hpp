#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "edgespike/arch.hpp"
#include "edgespike/common.hpp"
#include "edgespike/energy.hpp"
#include "edgespike/network.hpp"
#include "edgespike/train.hpp"

namespace edgespike {

// The six searchable dimension value sets plus the task I/O dimensions.
struct SearchSpace {
  std::vector<int> depths{2, 3, 4, 5};
  std::vector<int> widths{64, 128, 256, 512};
  std::vector<int> time_steps{4, 8, 16, 32};
  std::vector<DecayMode> decay_modes{DecayMode::kFixed, DecayMode::kLearnableShared,
                                     DecayMode::kLearnablePerLayer};
  std::vector<Connectivity> connectivities{Connectivity::kDense, Connectivity::kSparse50,
                                           Connectivity::kSparse25};
  std::vector<SkipPattern> skips{SkipPattern::kNone, SkipPattern::kResidual,
                                 SkipPattern::kDenseConnect};
  int input_dim = 1;
  int num_classes = 2;

  std::size_t cardinality() const {
    return depths.size() * widths.size() * time_steps.size() * decay_modes.size() *
           connectivities.size() * skips.size();
  }
};

// Deterministic lexicographic enumeration; uniform width per layer.
inline std::vector<ArchDescriptor> enumerate_space(const SearchSpace& space) {
  std::vector<ArchDescriptor> out;
  out.reserve(space.cardinality());
  for (int d : space.depths)
    for (int n : space.widths)
      for (int t : space.time_steps)
        for (DecayMode dm : space.decay_modes)
          for (Connectivity c : space.connectivities)
            for (SkipPattern s : space.skips)
              out.push_back(make_descriptor(d, n, t, dm, c, s, space.input_dim, space.num_classes));
  return out;
}

struct MemoryFootprint {
  std::uint64_t weight_bytes = 0;       // INT8 weights over the searched layers
  std::uint64_t peak_activation_bytes = 0;  // max per-time-step working set
  std::uint64_t total() const { return weight_bytes + peak_activation_bytes; }
};

// Static footprint of the searched layers: 1 byte per nonzero mask entry,
// peak per-time-step activation of 2 B membrane entries, packed spike bits,
// and a 2 B-per-index event buffer sized to the fan-in.
inline MemoryFootprint memory_footprint(const ArchDescriptor& desc) {
  desc.validate();
  const double density = connectivity_density(desc.connectivity);
  MemoryFootprint fp;
  for (int l = 0; l < desc.depth; ++l) {
    const auto size = static_cast<std::uint64_t>(desc.widths[l]) * desc.fan_in(l);
    fp.weight_bytes += static_cast<std::uint64_t>(std::llround(density * static_cast<double>(size)));
    const std::uint64_t act = 2ull * desc.widths[l] + (static_cast<std::uint64_t>(desc.widths[l]) + 7) / 8 +
                              2ull * desc.fan_in(l);
    fp.peak_activation_bytes = std::max(fp.peak_activation_bytes, act);
  }
  return fp;
}

struct ConstraintSet {
  double e_max_j = 1.0;                  // per-inference energy bound
  std::uint64_t m_max_bytes = 512 * 1024;  // 512 KB neuromorphic / 128 KB MCU
  std::optional<std::uint64_t> max_dense_ops;  // optional latency proxy

  void validate() const {
    if (e_max_j <= 0.0 || m_max_bytes == 0) throw ValidationError("constraint bounds must be positive");
  }
};

inline std::uint64_t dense_ops_estimate(const ArchDescriptor& desc) {
  std::uint64_t ops = 0;
  const double density = connectivity_density(desc.connectivity);
  for (int l = 0; l < desc.depth; ++l)
    ops += static_cast<std::uint64_t>(std::llround(
               density * static_cast<double>(desc.widths[l]) * desc.fan_in(l))) *
           desc.time_steps;
  return ops;
}

struct FeasibleCandidate {
  ArchDescriptor descriptor;
  double predicted_energy_j = 0.0;
  MemoryFootprint footprint;
};

// Keeps candidates within the energy and memory budgets, sorted by
// predicted energy ascending.  An empty result is a valid outcome.
inline std::vector<FeasibleCandidate> prune_infeasible(const std::vector<ArchDescriptor>& candidates,
                                                       const ConstraintSet& constraints,
                                                       const HardwareProfile& profile,
                                                       double rho_estimate) {
  constraints.validate();
  if (rho_estimate < 0.0 || rho_estimate > 1.0)
    throw ValidationError("prune_infeasible: rho_estimate must be in [0,1]");
  std::vector<FeasibleCandidate> feasible;
  for (const ArchDescriptor& d : candidates) {
    const std::vector<double> rho(static_cast<std::size_t>(d.depth), rho_estimate);
    FeasibleCandidate c;
    c.descriptor = d;
    c.predicted_energy_j = proxy_energy(d, rho, profile).total_j;
    c.footprint = memory_footprint(d);
    if (c.predicted_energy_j > constraints.e_max_j) continue;
    if (c.footprint.total() > constraints.m_max_bytes) continue;
    if (constraints.max_dense_ops && dense_ops_estimate(d) > *constraints.max_dense_ops) continue;
    feasible.push_back(std::move(c));
  }
  std::stable_sort(feasible.begin(), feasible.end(),
                   [](const auto& a, const auto& b) { return a.predicted_energy_j < b.predicted_energy_j; });
  return feasible;
}

// Mean per-layer firing rates over a fixed number of forward batches.
inline std::vector<double> estimate_rho(const NetworkParams& net,
                                        const std::vector<std::vector<SpikeRaster>>& batches) {
  std::vector<double> rho(net.layers.size(), 0.0);
  std::uint64_t samples = 0;
  for (const auto& batch : batches)
    for (const SpikeRaster& raster : batch) {
      ForwardResult res = forward_dense(net, raster);
      for (std::size_t l = 0; l < rho.size(); ++l) rho[l] += res.layer_rates[l];
      ++samples;
    }
  if (samples == 0) throw ValidationError("estimate_rho: no input rasters");
  for (double& r : rho) r /= static_cast<double>(samples);
  return rho;
}

// Pre-synaptic rho vector for the proxy: the encoder-output rate feeds
// layer 1, each hidden layer's output rate feeds its successor.
inline std::vector<double> presynaptic_rho(double input_rate, const std::vector<double>& layer_rates,
                                           int depth) {
  std::vector<double> rho(static_cast<std::size_t>(depth));
  rho[0] = input_rate;
  for (int l = 1; l < depth; ++l) rho[static_cast<std::size_t>(l)] = layer_rates[static_cast<std::size_t>(l - 1)];
  return rho;
}

struct ParetoPoint {
  ArchDescriptor descriptor;
  double accuracy = 0.0;
  double energy_j = 0.0;
  std::uint64_t footprint_bytes = 0;
  bool failed = false;

  void validate() const {
    if (accuracy < 0.0 || accuracy > 1.0) throw ValidationError("accuracy must be in [0,1]");
  }
};

struct ProxyEvalConfig {
  int epochs = 10;
  double proxy_fraction = 0.2;  // share of the training split used
  int batch_size = 32;
  std::uint64_t global_seed = 0;
  HardwareProfile profile = builtin_profiles()[0];
  bool use_supernet = false;
};

// Short fine-tuning evaluation of one candidate on the proxy subset.
inline ParetoPoint proxy_eval(const ArchDescriptor& candidate, const TrainTask& task,
                              const ProxyEvalConfig& cfg,
                              const NetworkParams* supernet = nullptr);

// --- Supernet -------------------------------------------------------------

// Maximal descriptor of a space: deepest, widest, longest window, dense,
// no skips (the shared-weight envelope).
inline ArchDescriptor supernet_descriptor(const SearchSpace& space) {
  return make_descriptor(*std::max_element(space.depths.begin(), space.depths.end()),
                         *std::max_element(space.widths.begin(), space.widths.end()),
                         *std::max_element(space.time_steps.begin(), space.time_steps.end()),
                         DecayMode::kFixed, Connectivity::kDense, SkipPattern::kNone,
                         space.input_dim, space.num_classes);
}

inline NetworkParams supernet_build(const SearchSpace& space, const TrainTask& task,
                                    const TrainConfig& config) {
  const ArchDescriptor desc = supernet_descriptor(space);
  return train_model(task, desc, config).net;
}

// Leading-index slice of the supernet: first N_l rows/columns per layer,
// first D hidden layers, candidate mask applied.  The readout is sliced
// from the supernet readout's leading columns.
inline NetworkParams subnet_extract(const NetworkParams& supernet, const ArchDescriptor& descriptor,
                                    std::uint64_t seed) {
  const ArchDescriptor& sup = supernet.descriptor;
  if (descriptor.skip == SkipPattern::kDenseConnect)
    throw ValidationError("subnet_extract: dense-connect fan-in exceeds the supernet envelope");
  if (descriptor.depth > sup.depth || descriptor.time_steps > sup.time_steps ||
      descriptor.input_dim != sup.input_dim || descriptor.num_classes != sup.num_classes)
    throw ValidationError("subnet_extract: descriptor outside supernet envelope");
  for (int l = 0; l < descriptor.depth; ++l)
    if (descriptor.widths[l] > sup.widths[l])
      throw ValidationError("subnet_extract: layer width outside supernet envelope");

  NetworkParams net = build_network(descriptor, seed);
  for (int l = 0; l < net.num_layers(); ++l) {
    LifLayerParams& layer = net.layers[static_cast<std::size_t>(l)];
    const bool is_readout = l == descriptor.depth;
    const LifLayerParams& src =
        is_readout ? supernet.layers.back() : supernet.layers[static_cast<std::size_t>(l)];
    for (int i = 0; i < layer.width; ++i)
      for (int j = 0; j < layer.fan_in; ++j)
        layer.w(i, j) = layer.m(i, j) ? src.w(i, j) : 0.0f;
    layer.beta = src.beta;
    layer.theta = src.theta;
  }
  return net;
}

// --- Pareto machinery -----------------------------------------------------

// Non-dominated subset, sorted by energy ascending; exact duplicates keep
// their first occurrence.
inline std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!points[i].failed) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].energy_j != points[b].energy_j) return points[a].energy_j < points[b].energy_j;
    if (points[a].accuracy != points[b].accuracy) return points[a].accuracy > points[b].accuracy;
    return a < b;
  });
  std::vector<ParetoPoint> front;
  double best_acc = -1.0;
  for (std::size_t i : idx) {
    if (points[i].accuracy > best_acc) {
      front.push_back(points[i]);
      best_acc = points[i].accuracy;
    }
  }
  return front;
}

// Max perpendicular distance to the chord of the front's extremes in
// (log-energy, accuracy) space, both normalised to [0,1]; distance ties go
// to the higher-accuracy point.
inline ParetoPoint knee_point(const std::vector<ParetoPoint>& front) {
  if (front.empty()) throw ValidationError("knee_point: empty front");
  if (front.size() == 1) return front.front();

  const double le0 = std::log(front.front().energy_j);
  const double le1 = std::log(front.back().energy_j);
  const double a0 = front.front().accuracy;
  const double a1 = front.back().accuracy;
  const double de = le1 - le0;
  const double da = a1 - a0;

  auto norm_x = [&](const ParetoPoint& p) { return de != 0.0 ? (std::log(p.energy_j) - le0) / de : 0.0; };
  auto norm_y = [&](const ParetoPoint& p) { return da != 0.0 ? (p.accuracy - a0) / da : 0.0; };

  std::size_t best = 0;
  double best_dist = -1.0;
  for (std::size_t i = 0; i < front.size(); ++i) {
    // Chord runs (0,0) -> (1,1) after normalisation; |cross| / sqrt(2).
    const double d = std::abs(norm_x(front[i]) - norm_y(front[i])) / std::sqrt(2.0);
    if (d > best_dist + 1e-12 ||
        (std::abs(d - best_dist) <= 1e-12 && front[i].accuracy > front[best].accuracy)) {
      best = i;
      best_dist = d;
    }
  }
  return front[best];
}

// --- Search driver --------------------------------------------------------

inline ParetoPoint proxy_eval(const ArchDescriptor& candidate, const TrainTask& task,
                              const ProxyEvalConfig& cfg, const NetworkParams* supernet) {
  const std::uint64_t seed = hash_combine(cfg.global_seed, candidate.hash());

  TrainTask proxy;
  const auto n = static_cast<std::size_t>(
      std::llround(cfg.proxy_fraction * static_cast<double>(task.train.size())));
  proxy.train.assign(task.train.begin(), task.train.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(n, 1)));
  proxy.val = task.val;

  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.seed = seed;

  ParetoPoint point;
  point.descriptor = candidate;
  point.footprint_bytes = memory_footprint(candidate).total();
  try {
    TrainResult trained;
    if (cfg.use_supernet && supernet) {
      // Fine-tune from the sliced supernet weights.
      const NetworkParams init = subnet_extract(*supernet, candidate, seed);
      trained = train_model(proxy, candidate, tc, &init);
    } else {
      trained = train_model(proxy, candidate, tc);
    }
    point.accuracy = trained.history.back().val_accuracy;

    // Five-batch rho estimate on validation rasters.
    std::vector<std::vector<SpikeRaster>> batches(5);
    std::size_t vi = 0;
    double input_rate = 0.0;
    std::uint64_t input_count = 0;
    for (int b = 0; b < 5; ++b)
      for (int i = 0; i < cfg.batch_size && vi < proxy.val.size(); ++i, ++vi) {
        const SpikeRaster& r = proxy.val[vi].raster;
        batches[static_cast<std::size_t>(b)].push_back(r);
        for (std::uint8_t s : r.data) input_rate += s;
        input_count += r.data.size();
      }
    const std::vector<double> layer_rates = estimate_rho(trained.net, batches);
    input_rate = input_count ? input_rate / static_cast<double>(input_count) : 0.0;
    const std::vector<double> rho = presynaptic_rho(input_rate, layer_rates, candidate.depth);
    point.energy_j = proxy_energy(candidate, rho, cfg.profile).total_j;
  } catch (const NumericError&) {
    point.failed = true;
  }
  return point;
}

struct SearchResult {
  std::vector<FeasibleCandidate> feasible;
  std::vector<ParetoPoint> points;
  std::vector<ParetoPoint> front;
  std::optional<ParetoPoint> knee;
};

// Evaluates every feasible candidate (parallel worker pool, per-candidate
// derived seeds) and extracts the front and knee.
inline SearchResult run_search(const std::vector<ArchDescriptor>& candidates,
                               const ConstraintSet& constraints, const TrainTask& task,
                               const ProxyEvalConfig& cfg, double rho_estimate = 0.25,
                               int workers = 0) {
  SearchResult result;
  result.feasible = prune_infeasible(candidates, constraints, cfg.profile, rho_estimate);
  result.points.resize(result.feasible.size());

  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(result.feasible.size())));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= result.feasible.size()) break;
      result.points[i] = proxy_eval(result.feasible[i].descriptor, task, cfg, nullptr);
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  result.front = pareto_front(result.points);
  if (!result.front.empty()) result.knee = knee_point(result.front);
  return result;
}

}  // namespace edgespike
