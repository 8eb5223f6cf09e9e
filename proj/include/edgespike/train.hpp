#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <utility>
#include <string>
#include <vector>

#include "edgespike/common.hpp"
#include "edgespike/network.hpp"
#include "edgespike/rng.hpp"

namespace edgespike {

struct TrainConfig {
  double lambda_r = 0.01;   // activity regulariser weight
  double lambda_w = 1e-4;   // decoupled weight decay
  double eta0 = 1e-3;       // initial learning rate
  double eta_min = 1e-5;    // cosine floor
  int epochs = 30;
  int batch_size = 32;
  double k_start = 0.5;     // surrogate sharpness curriculum
  double k_end = 4.0;
  double k_warm_frac = 0.6;
  bool bntt_enabled = true;  // effective only when T >= 8
  std::uint64_t seed = 0;

  void validate() const {
    if (eta0 <= 0.0 || eta_min <= 0.0 || k_start <= 0.0 || k_end <= 0.0)
      throw ValidationError("train config rates must be positive");
    if (k_warm_frac <= 0.0 || k_warm_frac > 1.0)
      throw ValidationError("k_warm_frac must be in (0,1]");
    if (eta_min > eta0) throw ValidationError("eta_min must be <= eta0");
    if (epochs < 1 || batch_size < 1) throw ValidationError("epochs and batch_size must be >= 1");
  }
};

// Fast-sigmoid surrogate for the Heaviside derivative: 1 / (1 + k|u-theta|)^2.
inline double surrogate_grad(double u, double theta, double k) {
  if (k <= 0.0) throw ValidationError("surrogate_grad: k must be > 0");
  const double d = 1.0 + k * std::abs(u - theta);
  return 1.0 / (d * d);
}

// Smooth stand-in for the Heaviside whose derivative is exactly the
// surrogate; used by the relaxed forward pass backing the gradient oracle.
inline double relaxed_heaviside(double u, double theta, double k) {
  const double x = u - theta;
  return 0.5 + x / (1.0 + k * std::abs(x));
}

// Sharpness schedule: linear from k_start to k_end over the warmup
// fraction of training, then held.
inline double curriculum_k(int epoch, const TrainConfig& config) {
  if (epoch < 0 || epoch >= config.epochs) throw ValidationError("curriculum_k: epoch out of range");
  const double warm = config.k_warm_frac * config.epochs;
  const double frac = std::min(1.0, static_cast<double>(epoch) / warm);
  return config.k_start + (config.k_end - config.k_start) * frac;
}

// Cosine annealing between eta0 and eta_min over the full run.
inline double cosine_lr(int epoch, const TrainConfig& config) {
  if (epoch < 0 || epoch > config.epochs) throw ValidationError("cosine_lr: epoch out of range");
  const double c = std::cos(3.14159265358979323846 * epoch / config.epochs);
  return config.eta_min + 0.5 * (config.eta0 - config.eta_min) * (1.0 + c);
}

struct LossParts {
  double total = 0.0;
  double ce = 0.0;
  double activity = 0.0;
  double l2 = 0.0;
};

namespace detail {

inline double cross_entropy_from_logits(const std::vector<double>& logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw ValidationError("cross_entropy: label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return std::log(sum) - (logits[static_cast<std::size_t>(label)] - mx);
}

}  // namespace detail

// Loss decomposition for one sample: softmax cross-entropy over the spike
// counts, the activity term over hidden-layer rasters, and the reported L2.
inline LossParts compute_loss(const std::vector<int>& counts, int label,
                              const std::vector<SpikeRaster>& hidden_rasters,
                              const std::vector<const std::vector<float>*>& weights,
                              const TrainConfig& config) {
  LossParts parts;
  std::vector<double> logits(counts.begin(), counts.end());
  parts.ce = detail::cross_entropy_from_logits(logits, label);

  double act = 0.0;
  int steps = 0;
  for (const SpikeRaster& r : hidden_rasters) {
    steps = r.steps;
    for (int t = 0; t < r.steps; ++t) {
      double mean = 0.0;
      for (int i = 0; i < r.width; ++i) mean += r.at(t, i);
      act += mean / r.width;
    }
  }
  if (steps > 0) parts.activity = config.lambda_r * act / steps;

  double sq = 0.0;
  for (const auto* w : weights)
    for (float v : *w) sq += static_cast<double>(v) * v;
  parts.l2 = config.lambda_w * sq;

  parts.total = parts.ce + parts.activity + parts.l2;
  return parts;
}

// Per-layer, per-time-step normalisation statistics and affine parameters.
struct BnttParams {
  int layers = 0;
  int steps = 0;
  std::vector<int> widths;
  // Indexed [layer][t], each a vector over neurons.
  std::vector<std::vector<std::vector<float>>> scale, shift, running_mean, running_var;

  static constexpr float kEps = 1e-5f;
  static constexpr float kMomentum = 0.9f;

  BnttParams() = default;
  BnttParams(const std::vector<int>& layer_widths, int time_steps)
      : layers(static_cast<int>(layer_widths.size())), steps(time_steps), widths(layer_widths) {
    auto make = [&](float init) {
      std::vector<std::vector<std::vector<float>>> v(static_cast<std::size_t>(layers));
      for (int l = 0; l < layers; ++l)
        v[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(steps),
                                              std::vector<float>(static_cast<std::size_t>(widths[static_cast<std::size_t>(l)]), init));
      return v;
    };
    scale = make(1.0f);
    shift = make(0.0f);
    running_mean = make(0.0f);
    running_var = make(1.0f);
  }
};

// Normalises a batch of pre-activations (batch-major, batch x width) at one
// (layer, t).  Training mode uses batch statistics and updates the running
// stats; eval mode uses the running stats.  Optionally reports xhat and the
// inverse stddev for the backward pass.
inline void bntt_apply(std::vector<float>& batch, int batch_size, int layer, int t,
                       BnttParams& params, bool training,
                       std::vector<float>* xhat_out = nullptr,
                       std::vector<float>* invstd_out = nullptr) {
  if (layer < 0 || layer >= params.layers || t < 0 || t >= params.steps)
    throw ValidationError("bntt_apply: layer or time step out of range");
  const int n = params.widths[static_cast<std::size_t>(layer)];
  if (static_cast<int>(batch.size()) != batch_size * n)
    throw ShapeError("bntt_apply: batch size mismatch");

  auto& scale = params.scale[static_cast<std::size_t>(layer)][static_cast<std::size_t>(t)];
  auto& shift = params.shift[static_cast<std::size_t>(layer)][static_cast<std::size_t>(t)];
  auto& rmean = params.running_mean[static_cast<std::size_t>(layer)][static_cast<std::size_t>(t)];
  auto& rvar = params.running_var[static_cast<std::size_t>(layer)][static_cast<std::size_t>(t)];

  if (xhat_out) xhat_out->resize(batch.size());
  if (invstd_out) invstd_out->resize(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    float mean, var;
    if (training) {
      double m = 0.0;
      for (int b = 0; b < batch_size; ++b) m += batch[static_cast<std::size_t>(b) * n + i];
      m /= batch_size;
      double v = 0.0;
      for (int b = 0; b < batch_size; ++b) {
        const double d = batch[static_cast<std::size_t>(b) * n + i] - m;
        v += d * d;
      }
      v /= batch_size;
      mean = static_cast<float>(m);
      var = static_cast<float>(v);
      rmean[static_cast<std::size_t>(i)] = BnttParams::kMomentum * rmean[static_cast<std::size_t>(i)] +
                                           (1.0f - BnttParams::kMomentum) * mean;
      rvar[static_cast<std::size_t>(i)] = BnttParams::kMomentum * rvar[static_cast<std::size_t>(i)] +
                                          (1.0f - BnttParams::kMomentum) * var;
    } else {
      mean = rmean[static_cast<std::size_t>(i)];
      var = rvar[static_cast<std::size_t>(i)];
    }
    const float inv = 1.0f / std::sqrt(var + BnttParams::kEps);
    if (invstd_out) (*invstd_out)[static_cast<std::size_t>(i)] = inv;
    for (int b = 0; b < batch_size; ++b) {
      const std::size_t idx = static_cast<std::size_t>(b) * n + i;
      const float x = (batch[idx] - mean) * inv;
      if (xhat_out) (*xhat_out)[idx] = x;
      batch[idx] = scale[static_cast<std::size_t>(i)] * x + shift[static_cast<std::size_t>(i)];
    }
  }
}

struct LabeledRaster {
  SpikeRaster raster;
  int label = 0;
};

struct Gradients {
  std::vector<std::vector<float>> weights;  // per layer, masked
  std::vector<double> beta;                 // dL/dbeta per layer
  std::vector<std::vector<std::vector<float>>> bn_scale, bn_shift;  // hidden [layer][t]
  LossParts loss;
};

namespace detail {

// Effective trainable-beta flags per layer (readout included in sharing).
inline bool beta_trainable(const ArchDescriptor& desc) {
  return desc.decay_mode != DecayMode::kFixed;
}

struct BatchStates {
  int batch = 0;
  int steps = 0;
  // [layer][t] -> batch x width, batch-major.
  std::vector<std::vector<std::vector<float>>> u, s, current_xhat;
  std::vector<std::vector<std::vector<float>>> invstd;  // [layer][t] -> width
};

// Batched unrolled forward over all layers and time steps.  In relaxed mode
// spikes are the smooth surrogate primitive; otherwise binary.  Records the
// state needed for BPTT when `record` is set.
inline BatchStates batch_forward(const NetworkParams& net, const std::vector<const LabeledRaster*>& batch,
                                 double k, bool relaxed, BnttParams* bntt, bool bn_training,
                                 bool record) {
  const ArchDescriptor& desc = net.descriptor;
  const int L = net.num_layers();
  const int T = desc.time_steps;
  const int B = static_cast<int>(batch.size());
  for (const LabeledRaster* s : batch)
    if (s->raster.steps != T || s->raster.width != desc.input_dim)
      throw ShapeError("batch_forward: raster shape does not match descriptor");

  BatchStates st;
  st.batch = B;
  st.steps = T;
  auto grid = [&](bool alloc) {
    std::vector<std::vector<std::vector<float>>> g(static_cast<std::size_t>(L));
    if (alloc)
      for (int l = 0; l < L; ++l)
        g[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(T), {});
    return g;
  };
  st.u = grid(true);
  st.s = grid(true);
  st.current_xhat = grid(true);
  st.invstd = grid(true);

  // Per-layer live membrane / previous-spike state, batch-major.
  std::vector<std::vector<float>> u_live(static_cast<std::size_t>(L)), s_live(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    const int n = net.layers[static_cast<std::size_t>(l)].width;
    u_live[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(B) * n, 0.0f);
    s_live[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(B) * n, 0.0f);
  }

  std::vector<float> current;
  std::vector<std::vector<float>> step_frames(static_cast<std::size_t>(L) + 1);
  for (int t = 0; t < T; ++t) {
    // Frame 0 is the input raster at step t.
    auto& in_frame = step_frames[0];
    in_frame.assign(static_cast<std::size_t>(B) * desc.input_dim, 0.0f);
    for (int b = 0; b < B; ++b) {
      const std::uint8_t* f = batch[static_cast<std::size_t>(b)]->raster.frame(t);
      for (int j = 0; j < desc.input_dim; ++j)
        in_frame[static_cast<std::size_t>(b) * desc.input_dim + j] = f[j];
    }

    for (int l = 0; l < L; ++l) {
      const LifLayerParams& layer = net.layers[static_cast<std::size_t>(l)];
      const int n = layer.width;
      current.assign(static_cast<std::size_t>(B) * n, 0.0f);

      if (desc.skip == SkipPattern::kDenseConnect) {
        int offset = 0;
        for (int src = 0; src <= l; ++src) {
          const int src_w = src == 0 ? desc.input_dim : net.layers[static_cast<std::size_t>(src - 1)].width;
          const auto& f = step_frames[static_cast<std::size_t>(src)];
          for (int b = 0; b < B; ++b)
            for (int j = 0; j < src_w; ++j) {
              const float sv = f[static_cast<std::size_t>(b) * src_w + j];
              if (sv == 0.0f) continue;
              const int pre = offset + j;
              for (int i = 0; i < n; ++i)
                current[static_cast<std::size_t>(b) * n + i] += layer.w(i, pre) * sv;
            }
          offset += src_w;
        }
      } else {
        const int src_w = layer.fan_in;
        const auto& f = step_frames[static_cast<std::size_t>(l)];
        for (int b = 0; b < B; ++b)
          for (int j = 0; j < src_w; ++j) {
            const float sv = f[static_cast<std::size_t>(b) * src_w + j];
            if (sv == 0.0f) continue;
            for (int i = 0; i < n; ++i)
              current[static_cast<std::size_t>(b) * n + i] += layer.w(i, j) * sv;
          }
        if (layer.has_residual_skip)
          for (int b = 0; b < B; ++b)
            for (int i = 0; i < n; ++i)
              current[static_cast<std::size_t>(b) * n + i] += f[static_cast<std::size_t>(b) * n + i];
      }

      const bool use_bn = bntt != nullptr && l < desc.depth;
      if (use_bn) {
        std::vector<float>* xh = record ? &st.current_xhat[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] : nullptr;
        std::vector<float>* is = record ? &st.invstd[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] : nullptr;
        bntt_apply(current, B, l, t, *bntt, bn_training, xh, is);
      }

      auto& ul = u_live[static_cast<std::size_t>(l)];
      auto& sl = s_live[static_cast<std::size_t>(l)];
      auto& frame = step_frames[static_cast<std::size_t>(l) + 1];
      frame.assign(static_cast<std::size_t>(B) * n, 0.0f);
      for (std::size_t idx = 0; idx < ul.size(); ++idx) {
        const float un = layer.beta * (ul[idx] - layer.theta * sl[idx]) + current[idx];
        if (!std::isfinite(un)) throw NumericError("batch_forward: non-finite membrane potential");
        float sn;
        if (relaxed)
          sn = static_cast<float>(relaxed_heaviside(un, layer.theta, k));
        else
          sn = un >= layer.theta ? 1.0f : 0.0f;
        ul[idx] = un;
        sl[idx] = sn;
        frame[idx] = sn;
      }
      if (record) {
        st.u[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] = ul;
        st.s[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] = frame;
      } else {
        st.s[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] = frame;
      }
    }
  }
  return st;
}

}  // namespace detail

// Full BPTT over the unrolled LIF recurrence with the fast-sigmoid
// surrogate substituted at every Heaviside, including the soft-reset
// pathway.  Loss is the batch mean; gradients cover weights, trainable
// beta, and BNTT affine parameters.
inline Gradients bptt_backward(const NetworkParams& net, const std::vector<const LabeledRaster*>& batch,
                               const TrainConfig& config, int epoch, bool relaxed = false,
                               BnttParams* bntt = nullptr) {
  const ArchDescriptor& desc = net.descriptor;
  const int L = net.num_layers();
  const int T = desc.time_steps;
  const int B = static_cast<int>(batch.size());
  const int C = desc.num_classes;
  const double k = curriculum_k(epoch, config);

  detail::BatchStates st = detail::batch_forward(net, batch, k, relaxed, bntt, bntt != nullptr, true);

  Gradients g;
  g.weights.resize(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l)
    g.weights[static_cast<std::size_t>(l)].assign(net.layers[static_cast<std::size_t>(l)].weights.size(), 0.0f);
  g.beta.assign(static_cast<std::size_t>(L), 0.0);
  if (bntt) {
    g.bn_scale.resize(static_cast<std::size_t>(desc.depth));
    g.bn_shift.resize(static_cast<std::size_t>(desc.depth));
    for (int l = 0; l < desc.depth; ++l) {
      g.bn_scale[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(T),
          std::vector<float>(static_cast<std::size_t>(net.layers[static_cast<std::size_t>(l)].width), 0.0f));
      g.bn_shift[static_cast<std::size_t>(l)] = g.bn_scale[static_cast<std::size_t>(l)];
    }
  }

  // Loss forward: softmax over summed readout spikes per sample.
  std::vector<double> counts(static_cast<std::size_t>(B) * C, 0.0);
  const auto& out_s = st.s[static_cast<std::size_t>(L - 1)];
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        counts[static_cast<std::size_t>(b) * C + c] += out_s[static_cast<std::size_t>(t)][static_cast<std::size_t>(b) * C + c];

  std::vector<double> dcounts(static_cast<std::size_t>(B) * C, 0.0);
  double ce = 0.0;
  for (int b = 0; b < B; ++b) {
    const int label = batch[static_cast<std::size_t>(b)]->label;
    if (label < 0 || label >= C) throw ValidationError("bptt_backward: label out of range");
    std::vector<double> logits(counts.begin() + static_cast<std::ptrdiff_t>(b) * C,
                               counts.begin() + static_cast<std::ptrdiff_t>(b + 1) * C);
    ce += detail::cross_entropy_from_logits(logits, label);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    for (int c = 0; c < C; ++c) {
      const double p = std::exp(logits[static_cast<std::size_t>(c)] - mx) / sum;
      dcounts[static_cast<std::size_t>(b) * C + c] = (p - (c == label ? 1.0 : 0.0)) / B;
    }
  }
  ce /= B;

  double activity = 0.0;
  for (int l = 0; l < desc.depth; ++l) {
    const int n = net.layers[static_cast<std::size_t>(l)].width;
    for (int t = 0; t < T; ++t) {
      const auto& sl = st.s[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
      double mean = std::accumulate(sl.begin(), sl.end(), 0.0);
      activity += mean / (static_cast<double>(n) * B);
    }
  }
  activity *= config.lambda_r / T;

  double l2 = 0.0;
  for (int l = 0; l < L; ++l)
    for (float v : net.layers[static_cast<std::size_t>(l)].weights) l2 += static_cast<double>(v) * v;
  l2 *= config.lambda_w;

  g.loss.ce = ce;
  g.loss.activity = activity;
  g.loss.l2 = l2;
  g.loss.total = ce + activity + l2;
  if (!std::isfinite(g.loss.total)) throw NumericError("bptt_backward: non-finite loss");

  // ds[l][t]: dL/d(spike output), filled lazily as consumers are processed.
  std::vector<std::vector<std::vector<double>>> ds(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    const int n = net.layers[static_cast<std::size_t>(l)].width;
    ds[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(T),
                                           std::vector<double>(static_cast<std::size_t>(B) * n, 0.0));
  }
  // Direct loss terms.
  for (int t = 0; t < T; ++t) {
    auto& dso = ds[static_cast<std::size_t>(L - 1)][static_cast<std::size_t>(t)];
    for (std::size_t idx = 0; idx < dso.size(); ++idx) dso[idx] += dcounts[idx];
    for (int l = 0; l < desc.depth; ++l) {
      const int n = net.layers[static_cast<std::size_t>(l)].width;
      const double dact = config.lambda_r / (static_cast<double>(T) * n * B);
      auto& dsl = ds[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
      for (double& v : dsl) v += dact;
    }
  }

  // du carried backwards across time via the decay path, per layer.
  std::vector<std::vector<double>> du_future(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l)
    du_future[static_cast<std::size_t>(l)].assign(
        static_cast<std::size_t>(B) * net.layers[static_cast<std::size_t>(l)].width, 0.0);

  std::vector<double> din;  // gradient w.r.t. a layer's (pre-BN) input current
  for (int t = T - 1; t >= 0; --t) {
    for (int l = L - 1; l >= 0; --l) {
      const LifLayerParams& layer = net.layers[static_cast<std::size_t>(l)];
      const int n = layer.width;
      const auto& ul = st.u[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
      auto& dsl = ds[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
      auto& duf = du_future[static_cast<std::size_t>(l)];

      // du = ds * sigma_k(u) + beta * du[t+1]
      std::vector<double> du(static_cast<std::size_t>(B) * n);
      for (std::size_t idx = 0; idx < du.size(); ++idx)
        du[idx] = dsl[idx] * surrogate_grad(ul[idx], layer.theta, k) + duf[idx];

      // Decay + reset pathways into step t-1.
      if (t > 0) {
        auto& ds_prev = ds[static_cast<std::size_t>(l)][static_cast<std::size_t>(t - 1)];
        for (std::size_t idx = 0; idx < du.size(); ++idx) {
          duf[idx] = layer.beta * du[idx];
          ds_prev[idx] += -static_cast<double>(layer.beta) * layer.theta * du[idx];
        }
      } else {
        std::fill(duf.begin(), duf.end(), 0.0);
      }

      // d beta: u[t] = beta * (u[t-1] - theta*s[t-1]) + c.
      if (detail::beta_trainable(desc) && t > 0) {
        const auto& u_prev = st.u[static_cast<std::size_t>(l)][static_cast<std::size_t>(t - 1)];
        const auto& s_prev = st.s[static_cast<std::size_t>(l)][static_cast<std::size_t>(t - 1)];
        double acc = 0.0;
        for (std::size_t idx = 0; idx < du.size(); ++idx)
          acc += du[idx] * (u_prev[idx] - layer.theta * s_prev[idx]);
        g.beta[static_cast<std::size_t>(l)] += acc;
      }

      // Through BNTT (stats treated as constants; affine grads exact).
      din.assign(du.begin(), du.end());
      const bool use_bn = bntt != nullptr && l < desc.depth;
      if (use_bn) {
        const auto& xh = st.current_xhat[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        const auto& inv = st.invstd[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        const auto& scale = bntt->scale[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        auto& gsc = g.bn_scale[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        auto& gsh = g.bn_shift[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        for (int b = 0; b < B; ++b)
          for (int i = 0; i < n; ++i) {
            const std::size_t idx = static_cast<std::size_t>(b) * n + i;
            gsc[static_cast<std::size_t>(i)] += static_cast<float>(du[idx] * xh[idx]);
            gsh[static_cast<std::size_t>(i)] += static_cast<float>(du[idx]);
            din[idx] = du[idx] * scale[static_cast<std::size_t>(i)] * inv[static_cast<std::size_t>(i)];
          }
      }

      // Distribute din to weights and to source spike frames.
      auto source_frame = [&](int src) -> std::pair<const float*, int> {
        // src = 0 is the input raster, src >= 1 is layer src-1's spikes.
        if (src == 0) return {nullptr, desc.input_dim};
        const auto& s = st.s[static_cast<std::size_t>(src - 1)][static_cast<std::size_t>(t)];
        return {s.data(), net.layers[static_cast<std::size_t>(src - 1)].width};
      };
      auto input_value = [&](int b, int src, int j) -> double {
        if (src == 0) return batch[static_cast<std::size_t>(b)]->raster.frame(t)[j];
        return st.s[static_cast<std::size_t>(src - 1)][static_cast<std::size_t>(t)]
                   [static_cast<std::size_t>(b) * net.layers[static_cast<std::size_t>(src - 1)].width + j];
      };

      auto& gw = g.weights[static_cast<std::size_t>(l)];
      if (desc.skip == SkipPattern::kDenseConnect) {
        int offset = 0;
        for (int src = 0; src <= l; ++src) {
          const int src_w = source_frame(src).second;
          for (int b = 0; b < B; ++b)
            for (int j = 0; j < src_w; ++j) {
              const double sv = input_value(b, src, j);
              const int pre = offset + j;
              double dsrc = 0.0;
              for (int i = 0; i < n; ++i) {
                const double d = din[static_cast<std::size_t>(b) * n + i];
                if (layer.m(i, pre)) gw[static_cast<std::size_t>(i) * layer.fan_in + pre] += static_cast<float>(d * sv);
                dsrc += d * layer.w(i, pre);
              }
              if (src > 0)
                ds[static_cast<std::size_t>(src - 1)][static_cast<std::size_t>(t)]
                  [static_cast<std::size_t>(b) * src_w + j] += dsrc;
            }
          offset += src_w;
        }
      } else {
        const int src_w = layer.fan_in;
        const int src = l;  // direct predecessor (0 = input)
        for (int b = 0; b < B; ++b)
          for (int j = 0; j < src_w; ++j) {
            const double sv = input_value(b, src, j);
            double dsrc = 0.0;
            for (int i = 0; i < n; ++i) {
              const double d = din[static_cast<std::size_t>(b) * n + i];
              if (layer.m(i, j)) gw[static_cast<std::size_t>(i) * layer.fan_in + j] += static_cast<float>(d * sv);
              dsrc += d * layer.w(i, j);
            }
            if (layer.has_residual_skip) dsrc += din[static_cast<std::size_t>(b) * n + j];
            if (src > 0)
              ds[static_cast<std::size_t>(src - 1)][static_cast<std::size_t>(t)]
                [static_cast<std::size_t>(b) * src_w + j] += dsrc;
          }
      }
    }
  }

  for (int l = 0; l < L; ++l)
    for (float v : g.weights[static_cast<std::size_t>(l)])
      if (!std::isfinite(v))
        throw NumericError("bptt_backward: non-finite gradient in layer " + std::to_string(l));
  return g;
}

// Loss of a relaxed (surrogate-primitive) forward pass; the independent
// quantity the finite-difference gradient oracle perturbs.  Runs entirely in
// double precision so central differences stay above rounding noise.
inline LossParts relaxed_loss(const NetworkParams& net, const std::vector<const LabeledRaster*>& batch,
                              const TrainConfig& config, int epoch) {
  const ArchDescriptor& desc = net.descriptor;
  const int T = desc.time_steps;
  const int B = static_cast<int>(batch.size());
  const int C = desc.num_classes;
  const int L = net.num_layers();
  const double k = curriculum_k(epoch, config);
  for (const LabeledRaster* s : batch)
    if (s->raster.steps != T || s->raster.width != desc.input_dim)
      throw ShapeError("relaxed_loss: raster shape does not match descriptor");

  std::vector<std::vector<double>> u_live(static_cast<std::size_t>(L)), s_live(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    const int n = net.layers[static_cast<std::size_t>(l)].width;
    u_live[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(B) * n, 0.0);
    s_live[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(B) * n, 0.0);
  }

  LossParts parts;
  std::vector<std::vector<double>> logits(static_cast<std::size_t>(B),
                                          std::vector<double>(static_cast<std::size_t>(C), 0.0));
  std::vector<double> current;
  std::vector<std::vector<double>> step_frames(static_cast<std::size_t>(L) + 1);
  for (int t = 0; t < T; ++t) {
    auto& in_frame = step_frames[0];
    in_frame.assign(static_cast<std::size_t>(B) * desc.input_dim, 0.0);
    for (int b = 0; b < B; ++b) {
      const std::uint8_t* f = batch[static_cast<std::size_t>(b)]->raster.frame(t);
      for (int j = 0; j < desc.input_dim; ++j)
        in_frame[static_cast<std::size_t>(b) * desc.input_dim + j] = f[j];
    }

    for (int l = 0; l < L; ++l) {
      const LifLayerParams& layer = net.layers[static_cast<std::size_t>(l)];
      const int n = layer.width;
      current.assign(static_cast<std::size_t>(B) * n, 0.0);

      if (desc.skip == SkipPattern::kDenseConnect) {
        int offset = 0;
        for (int src = 0; src <= l; ++src) {
          const int src_w = src == 0 ? desc.input_dim : net.layers[static_cast<std::size_t>(src - 1)].width;
          const auto& f = step_frames[static_cast<std::size_t>(src)];
          for (int b = 0; b < B; ++b)
            for (int j = 0; j < src_w; ++j) {
              const double sv = f[static_cast<std::size_t>(b) * src_w + j];
              if (sv == 0.0) continue;
              const int pre = offset + j;
              for (int i = 0; i < n; ++i)
                current[static_cast<std::size_t>(b) * n + i] += static_cast<double>(layer.w(i, pre)) * sv;
            }
          offset += src_w;
        }
      } else {
        const int src_w = layer.fan_in;
        const auto& f = step_frames[static_cast<std::size_t>(l)];
        for (int b = 0; b < B; ++b)
          for (int j = 0; j < src_w; ++j) {
            const double sv = f[static_cast<std::size_t>(b) * src_w + j];
            if (sv == 0.0) continue;
            for (int i = 0; i < n; ++i)
              current[static_cast<std::size_t>(b) * n + i] += static_cast<double>(layer.w(i, j)) * sv;
          }
        if (layer.has_residual_skip)
          for (int b = 0; b < B; ++b)
            for (int i = 0; i < n; ++i)
              current[static_cast<std::size_t>(b) * n + i] += f[static_cast<std::size_t>(b) * n + i];
      }

      auto& ul = u_live[static_cast<std::size_t>(l)];
      auto& sl = s_live[static_cast<std::size_t>(l)];
      auto& frame = step_frames[static_cast<std::size_t>(l) + 1];
      frame.assign(static_cast<std::size_t>(B) * n, 0.0);
      for (std::size_t idx = 0; idx < ul.size(); ++idx) {
        const double un = layer.beta * (ul[idx] - layer.theta * sl[idx]) + current[idx];
        if (!std::isfinite(un)) throw NumericError("relaxed_loss: non-finite membrane potential");
        const double sn = relaxed_heaviside(un, layer.theta, k);
        ul[idx] = un;
        sl[idx] = sn;
        frame[idx] = sn;
      }

      if (l == L - 1) {
        for (int b = 0; b < B; ++b)
          for (int c = 0; c < C; ++c)
            logits[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)] +=
                frame[static_cast<std::size_t>(b) * C + c];
      } else {
        parts.activity += std::accumulate(frame.begin(), frame.end(), 0.0) /
                          (static_cast<double>(n) * B);
      }
    }
  }

  for (int b = 0; b < B; ++b)
    parts.ce += detail::cross_entropy_from_logits(logits[static_cast<std::size_t>(b)],
                                                  batch[static_cast<std::size_t>(b)]->label);
  parts.ce /= B;
  parts.activity *= config.lambda_r / T;

  for (int l = 0; l < L; ++l)
    for (float v : net.layers[static_cast<std::size_t>(l)].weights)
      parts.l2 += static_cast<double>(v) * v;
  parts.l2 *= config.lambda_w;
  parts.total = parts.ce + parts.activity + parts.l2;
  return parts;
}

// AdamW with decoupled weight decay applied directly to the weights.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void register_tensor(const std::string& name, std::size_t size) {
    m_[name].assign(size, 0.0);
    v_[name].assign(size, 0.0);
  }

  void begin_step() { ++step_; }

  // Adaptive update; decay > 0 applies eta * decay * w directly.
  void update(const std::string& name, std::vector<float>& params, const float* grad,
              double eta, double decay) {
    auto& m = m_.at(name);
    auto& v = v_.at(name);
    const double c1 = 1.0 - std::pow(beta1_, step_);
    const double c2 = 1.0 - std::pow(beta2_, step_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double gi = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      double p = params[i];
      p -= eta * mhat / (std::sqrt(vhat) + eps_);
      if (decay > 0.0) p -= eta * decay * p;
      params[i] = static_cast<float>(p);
    }
  }

 private:
  double beta1_, beta2_, eps_;
  int step_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct EpochRecord {
  int epoch = 0;
  double loss_total = 0.0, loss_ce = 0.0, loss_activity = 0.0, loss_l2 = 0.0;
  double val_accuracy = 0.0;
  double mean_rho = 0.0;  // mean hidden firing rate on the validation pass
  double lr = 0.0, k = 0.0;
};

struct TrainResult {
  NetworkParams net;
  BnttParams bntt;
  bool bntt_active = false;
  std::vector<EpochRecord> history;
};

struct TrainTask {
  std::vector<LabeledRaster> train;
  std::vector<LabeledRaster> val;
};

namespace detail {

// Sigmoid reparameterisation keeping trainable beta in (0,1).
inline double beta_logit(double beta) { return std::log(beta / (1.0 - beta)); }
inline double beta_sigmoid(double b) { return 1.0 / (1.0 + std::exp(-b)); }

inline double evaluate(const NetworkParams& net, BnttParams* bntt, const std::vector<LabeledRaster>& set,
                       double k, double* mean_rho_out) {
  const ArchDescriptor& desc = net.descriptor;
  const int L = net.num_layers();
  int correct = 0;
  double rho_sum = 0.0;
  std::uint64_t rho_count = 0;
  // Evaluate in batches so BNTT eval-mode statistics apply uniformly.
  const int eval_batch = 64;
  for (std::size_t start = 0; start < set.size(); start += eval_batch) {
    std::vector<const LabeledRaster*> batch;
    for (std::size_t i = start; i < std::min(set.size(), start + eval_batch); ++i)
      batch.push_back(&set[i]);
    BatchStates st = batch_forward(net, batch, k, false, bntt, false, false);
    const int B = static_cast<int>(batch.size());
    const int C = desc.num_classes;
    const auto& out_s = st.s[static_cast<std::size_t>(L - 1)];
    for (int b = 0; b < B; ++b) {
      std::vector<double> counts(static_cast<std::size_t>(C), 0.0);
      for (int t = 0; t < desc.time_steps; ++t)
        for (int c = 0; c < C; ++c)
          counts[static_cast<std::size_t>(c)] += out_s[static_cast<std::size_t>(t)][static_cast<std::size_t>(b) * C + c];
      int pred = 0;
      for (int c = 1; c < C; ++c)
        if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(pred)]) pred = c;
      if (pred == batch[static_cast<std::size_t>(b)]->label) ++correct;
    }
    for (int l = 0; l < desc.depth; ++l)
      for (int t = 0; t < desc.time_steps; ++t) {
        const auto& sl = st.s[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        rho_sum += std::accumulate(sl.begin(), sl.end(), 0.0);
        rho_count += sl.size();
      }
  }
  if (mean_rho_out) *mean_rho_out = rho_count ? rho_sum / static_cast<double>(rho_count) : 0.0;
  return set.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(set.size());
}

}  // namespace detail

// Full training loop: surrogate BPTT, AdamW with decoupled decay, cosine
// learning rate, sharpness curriculum, optional BNTT.  Deterministic for a
// fixed config seed.
inline TrainResult train_model(const TrainTask& task, const ArchDescriptor& descriptor,
                               const TrainConfig& config,
                               const NetworkParams* warm_start = nullptr) {
  config.validate();
  if (task.train.empty()) throw ValidationError("train_model: empty training split");

  TrainResult result;
  if (warm_start) {
    if (warm_start->descriptor.hash() != descriptor.hash())
      throw ValidationError("train_model: warm start descriptor mismatch");
    result.net = *warm_start;
  } else {
    result.net = build_network(descriptor, config.seed);
  }
  NetworkParams& net = result.net;
  const int L = net.num_layers();
  const bool use_bntt = config.bntt_enabled && descriptor.time_steps >= 8;
  result.bntt_active = use_bntt;
  if (use_bntt) {
    std::vector<int> hidden_widths(descriptor.widths.begin(), descriptor.widths.end());
    result.bntt = BnttParams(hidden_widths, descriptor.time_steps);
  }
  BnttParams* bntt = use_bntt ? &result.bntt : nullptr;

  // Trainable beta via logits; shared mode keeps a single logit.
  const bool train_beta = detail::beta_trainable(descriptor);
  std::vector<float> beta_logits;
  if (train_beta) {
    const int count = descriptor.decay_mode == DecayMode::kLearnableShared ? 1 : L;
    beta_logits.assign(static_cast<std::size_t>(count),
                       static_cast<float>(detail::beta_logit(0.9)));
  }
  auto sync_beta = [&] {
    if (!train_beta) return;
    for (int l = 0; l < L; ++l) {
      const std::size_t bi = descriptor.decay_mode == DecayMode::kLearnableShared
                                 ? 0
                                 : static_cast<std::size_t>(l);
      net.layers[static_cast<std::size_t>(l)].beta =
          static_cast<float>(detail::beta_sigmoid(beta_logits[bi]));
    }
  };
  sync_beta();

  AdamW opt;
  for (int l = 0; l < L; ++l)
    opt.register_tensor("w" + std::to_string(l), net.layers[static_cast<std::size_t>(l)].weights.size());
  if (train_beta) opt.register_tensor("beta", beta_logits.size());
  if (use_bntt)
    for (int l = 0; l < descriptor.depth; ++l)
      for (int t = 0; t < descriptor.time_steps; ++t) {
        const std::size_t n = static_cast<std::size_t>(descriptor.widths[l]);
        opt.register_tensor("bns" + std::to_string(l) + "_" + std::to_string(t), n);
        opt.register_tensor("bnb" + std::to_string(l) + "_" + std::to_string(t), n);
      }

  Rng shuffle_rng = Rng::substream(config.seed, "epoch-shuffle");
  std::vector<std::size_t> order(task.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config);
    const double k = curriculum_k(epoch, config);
    shuffle_rng.shuffle(order);

    LossParts epoch_loss;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      std::vector<const LabeledRaster*> batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + static_cast<std::size_t>(config.batch_size)); ++i)
        batch.push_back(&task.train[order[i]]);

      Gradients g;
      try {
        g = bptt_backward(net, batch, config, epoch, false, bntt);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")");
      }

      opt.begin_step();
      for (int l = 0; l < L; ++l)
        opt.update("w" + std::to_string(l), net.layers[static_cast<std::size_t>(l)].weights,
                   g.weights[static_cast<std::size_t>(l)].data(), lr, config.lambda_w);
      if (train_beta) {
        std::vector<float> gb(beta_logits.size(), 0.0f);
        for (int l = 0; l < L; ++l) {
          const double beta = net.layers[static_cast<std::size_t>(l)].beta;
          const double chain = beta * (1.0 - beta);
          const std::size_t bi = descriptor.decay_mode == DecayMode::kLearnableShared
                                     ? 0
                                     : static_cast<std::size_t>(l);
          gb[bi] += static_cast<float>(g.beta[static_cast<std::size_t>(l)] * chain);
        }
        opt.update("beta", beta_logits, gb.data(), lr, 0.0);
        sync_beta();
      }
      if (use_bntt)
        for (int l = 0; l < descriptor.depth; ++l)
          for (int t = 0; t < descriptor.time_steps; ++t) {
            opt.update("bns" + std::to_string(l) + "_" + std::to_string(t),
                       result.bntt.scale[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)],
                       g.bn_scale[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)].data(), lr, 0.0);
            opt.update("bnb" + std::to_string(l) + "_" + std::to_string(t),
                       result.bntt.shift[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)],
                       g.bn_shift[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)].data(), lr, 0.0);
          }

      // Keep BNTT scales positive.
      if (use_bntt)
        for (auto& per_layer : result.bntt.scale)
          for (auto& per_t : per_layer)
            for (float& v : per_t) v = std::max(v, 1e-3f);

      epoch_loss.total += g.loss.total;
      epoch_loss.ce += g.loss.ce;
      epoch_loss.activity += g.loss.activity;
      epoch_loss.l2 += g.loss.l2;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_total = epoch_loss.total / batches;
    rec.loss_ce = epoch_loss.ce / batches;
    rec.loss_activity = epoch_loss.activity / batches;
    rec.loss_l2 = epoch_loss.l2 / batches;
    rec.lr = lr;
    rec.k = k;
    rec.val_accuracy = detail::evaluate(net, bntt, task.val, k, &rec.mean_rho);
    result.history.push_back(rec);
  }
  return result;
}

}  // namespace edgespike
