#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "edgespike/common.hpp"
#include "edgespike/dataset.hpp"
#include "edgespike/encoders.hpp"
#include "edgespike/energy.hpp"
#include "edgespike/plasticity.hpp"
#include "edgespike/rng.hpp"
#include "edgespike/runtime.hpp"

namespace edgespike {

// Sensor ageing model, parameterised per month of deployment: the analog
// front-end loses gain, picks up noise, and its effective spike threshold
// inflates.
struct DriftModel {
  double gain_loss_per_month = 0.03;       // multiplicative gain decline
  double gain_floor = 0.5;                 // gain never decays below this
  double noise_sigma_per_month = 0.01;     // added Gaussian noise growth
  double threshold_inflation_per_month = 0.02;  // encoder threshold scale

  void validate() const {
    if (gain_loss_per_month < 0.0 || noise_sigma_per_month < 0.0 ||
        threshold_inflation_per_month < 0.0)
      throw ValidationError("drift rates must be non-negative");
    if (gain_floor <= 0.0 || gain_floor > 1.0)
      throw ValidationError("gain floor must be in (0,1]");
  }

  double gain(int month) const {
    return std::max(gain_floor, 1.0 - gain_loss_per_month * month);
  }
  double noise_sigma(int month) const { return noise_sigma_per_month * month; }
  double threshold_scale(int month) const {
    return 1.0 + threshold_inflation_per_month * month;
  }
};

// Joules for one inference from the runtime's exact operation counts.
inline double energy_from_counter(const OpCounter& counter, const HardwareProfile& profile) {
  profile.validate();
  return static_cast<double>(counter.ac_count) * profile.e_ac_pj * kPicojoule +
         static_cast<double>(counter.neuron_updates) * profile.e_neuron_pj * kPicojoule +
         profile.e_io_uj * kMicrojoule;
}

// Poisson event counts per interval at the given hourly trigger rate.
inline std::vector<int> trigger_schedule(double triggers_per_hour, double hours_per_interval,
                                         int intervals, Rng& rng) {
  if (triggers_per_hour < 0.0 || hours_per_interval <= 0.0 || intervals < 1)
    throw ValidationError("trigger_schedule: parameters out of range");
  std::vector<int> counts(static_cast<std::size_t>(intervals));
  for (int& c : counts)
    c = static_cast<int>(rng.poisson(triggers_per_hour * hours_per_interval));
  return counts;
}

// Applies month-dependent drift to one analog feature sample.
inline FeatureSample drift_apply(const FeatureSample& sample, int month, const DriftModel& model,
                                 Rng& rng) {
  model.validate();
  if (month < 0) throw ValidationError("drift_apply: month must be >= 0");
  const double g = model.gain(month);
  const double sigma = model.noise_sigma(month);
  FeatureSample out;
  out.label = sample.label;
  out.features.resize(sample.features.size());
  for (std::size_t t = 0; t < sample.features.size(); ++t) {
    out.features[t].resize(sample.features[t].size());
    for (std::size_t c = 0; c < sample.features[t].size(); ++c)
      out.features[t][c] = g * sample.features[t][c] + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
  }
  return out;
}

struct NodeMonthTelemetry {
  int node = 0;
  int month = 0;
  double frozen_accuracy = 0.0;
  double adaptive_accuracy = 0.0;
  double frozen_rho = 0.0;    // mean hidden spike rate
  double adaptive_rho = 0.0;
  double energy_per_inference_j = 0.0;  // adaptive arm, counter-based
  double daily_energy_mwh = 0.0;
  int triggers = 0;
};

struct FieldsimConfig {
  int months = 6;
  int nodes = 4;
  double triggers_per_hour = 8.2;
  double hours_per_month = 730.0;
  int adapt_samples_per_month = 40;  // adaptation inferences actually simulated
  int eval_samples = 80;             // per-month held-out evaluation draws
  double encode_threshold = 0.5;
  DriftModel drift;
  PlasticityConfig plasticity;
  HardwareProfile profile = profile_by_name("cortex-m4-rle");
  std::uint64_t seed = 0;
  int workers = 0;

  void validate() const {
    if (months < 1 || nodes < 1 || eval_samples < 1 || adapt_samples_per_month < 0)
      throw ValidationError("fieldsim config out of range");
    if (encode_threshold <= 0.0) throw ValidationError("encode threshold must be positive");
    drift.validate();
    plasticity.validate();
    profile.validate();
  }
};

struct DeploymentResult {
  std::vector<NodeMonthTelemetry> telemetry;  // node-major, month-minor
  double baseline_accuracy = 0.0;  // month-0 frozen accuracy, mean over nodes
  double final_frozen_accuracy = 0.0;
  double final_adaptive_accuracy = 0.0;
  double recovery = 0.0;
};

// Recovered share of the drift-induced accuracy loss.  Guarded against a
// degenerate denominator; clamped to [0, 1.5] so adaptive runs that end
// above the clean baseline stay reportable.
inline double recovery_fraction(double adaptive_acc, double frozen_acc, double baseline_acc) {
  const double lost = baseline_acc - frozen_acc;
  if (lost <= 1e-9) return adaptive_acc >= frozen_acc ? 1.0 : 0.0;
  return std::clamp((adaptive_acc - frozen_acc) / lost, 0.0, 1.5);
}

namespace detail {

inline FixedInferenceResult drifted_infer(const FixedNetwork& net, const FeatureSample& sample,
                                          double threshold, int month, const DriftModel& model,
                                          Rng& rng) {
  const FeatureSample drifted = drift_apply(sample, month, model, rng);
  std::vector<double> thresholds(drifted.features.front().size(),
                                 threshold * model.threshold_scale(month));
  return infer_sparse(net, threshold_encode(drifted.features, thresholds));
}

}  // namespace detail

// Paired-arm deployment simulation.  Every node carries a frozen copy and an
// adaptive copy of the same model; both arms see identical drifted inputs
// drawn from shared per-node random streams, so their accuracy difference
// isolates the adaptation effect.
inline DeploymentResult simulate_deployment(const NetworkParams& trained,
                                            const std::vector<FeatureSample>& pool,
                                            const FieldsimConfig& cfg) {
  cfg.validate();
  if (pool.empty()) throw ValidationError("simulate_deployment: empty sample pool");

  DeploymentResult result;
  result.telemetry.resize(static_cast<std::size_t>(cfg.nodes) * cfg.months);

  int workers = cfg.workers > 0 ? cfg.workers : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, cfg.nodes));

  auto run_node = [&](int node) {
    Rng trig_rng = Rng::substream(cfg.seed, "node-triggers", static_cast<std::uint64_t>(node));
    Rng pick_rng = Rng::substream(cfg.seed, "node-picks", static_cast<std::uint64_t>(node));
    const std::vector<int> triggers =
        trigger_schedule(cfg.triggers_per_hour, cfg.hours_per_month, cfg.months, trig_rng);

    const FixedNetwork frozen = quantize_weights(trained);
    NetworkParams adaptive_net = trained;
    FixedNetwork adaptive = quantize_weights(adaptive_net);
    PlasticityEngine engine(cfg.plasticity, adaptive_net, adaptive);

    for (int month = 0; month < cfg.months; ++month) {
      // Adaptation phase: a capped simulated subset stands in for the
      // month's Poisson trigger count.
      Rng adapt_rng = Rng::substream(cfg.seed, "node-adapt",
                                     static_cast<std::uint64_t>(node) * 1000 + month);
      const int adapt_n = std::min(cfg.adapt_samples_per_month, triggers[static_cast<std::size_t>(month)]);
      for (int i = 0; i < adapt_n; ++i) {
        const FeatureSample& s = pool[pick_rng.uniform_index(pool.size())];
        const FeatureSample drifted = drift_apply(s, month, cfg.drift, adapt_rng);
        std::vector<double> thresholds(drifted.features.front().size(),
                                       cfg.encode_threshold * cfg.drift.threshold_scale(month));
        step_inference(adaptive, threshold_encode(drifted.features, thresholds), engine);
      }

      // Evaluation phase: both arms on the same draws and drift noise.
      std::vector<const FeatureSample*> eval;
      eval.reserve(static_cast<std::size_t>(cfg.eval_samples));
      for (int i = 0; i < cfg.eval_samples; ++i)
        eval.push_back(&pool[pick_rng.uniform_index(pool.size())]);
      const Rng eval_rng = Rng::substream(cfg.seed, "node-eval",
                                          static_cast<std::uint64_t>(node) * 1000 + month);

      NodeMonthTelemetry tel;
      tel.node = node;
      tel.month = month;
      tel.triggers = triggers[static_cast<std::size_t>(month)];

      double fro_rho = 0.0, ada_rho = 0.0, energy = 0.0;
      std::uint64_t rho_n = 0;
      int fro_ok = 0, ada_ok = 0;
      Rng fr = eval_rng, ar = eval_rng;  // identical streams for both arms
      for (const FeatureSample* s : eval) {
        const FixedInferenceResult rf = detail::drifted_infer(frozen, *s, cfg.encode_threshold,
                                                              month, cfg.drift, fr);
        const FixedInferenceResult ra = detail::drifted_infer(adaptive, *s, cfg.encode_threshold,
                                                              month, cfg.drift, ar);
        if (rf.prediction == s->label) ++fro_ok;
        if (ra.prediction == s->label) ++ada_ok;
        const int hidden = static_cast<int>(rf.layer_rates.size()) - 1;
        for (int l = 0; l < hidden; ++l) {
          fro_rho += rf.layer_rates[static_cast<std::size_t>(l)];
          ada_rho += ra.layer_rates[static_cast<std::size_t>(l)];
          ++rho_n;
        }
        energy += energy_from_counter(ra.counter, cfg.profile);
      }
      tel.frozen_accuracy = static_cast<double>(fro_ok) / cfg.eval_samples;
      tel.adaptive_accuracy = static_cast<double>(ada_ok) / cfg.eval_samples;
      tel.frozen_rho = rho_n ? fro_rho / static_cast<double>(rho_n) : 0.0;
      tel.adaptive_rho = rho_n ? ada_rho / static_cast<double>(rho_n) : 0.0;
      tel.energy_per_inference_j = energy / cfg.eval_samples;

      BudgetParams budget;
      budget.inferences_per_day = cfg.triggers_per_hour * 24.0;
      budget.energy_per_inference_j = tel.energy_per_inference_j;
      tel.daily_energy_mwh = daily_energy(budget).total_mwh;

      result.telemetry[static_cast<std::size_t>(node) * cfg.months + month] = tel;
    }
  };

  std::atomic<int> next{0};
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (;;) {
        const int node = next.fetch_add(1);
        if (node >= cfg.nodes) break;
        run_node(node);
      }
    });
  for (auto& t : threads) t.join();

  double base = 0.0, fro = 0.0, ada = 0.0;
  for (int node = 0; node < cfg.nodes; ++node) {
    base += result.telemetry[static_cast<std::size_t>(node) * cfg.months].frozen_accuracy;
    const NodeMonthTelemetry& last =
        result.telemetry[static_cast<std::size_t>(node) * cfg.months + cfg.months - 1];
    fro += last.frozen_accuracy;
    ada += last.adaptive_accuracy;
  }
  result.baseline_accuracy = base / cfg.nodes;
  result.final_frozen_accuracy = fro / cfg.nodes;
  result.final_adaptive_accuracy = ada / cfg.nodes;
  result.recovery = recovery_fraction(result.final_adaptive_accuracy, result.final_frozen_accuracy,
                                      result.baseline_accuracy);
  return result;
}

}  // namespace edgespike
