#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "edgespike/arch.hpp"
#include "edgespike/common.hpp"

namespace edgespike {

inline constexpr double kPicojoule = 1e-12;
inline constexpr double kMicrojoule = 1e-6;
inline constexpr double kJoulePerMilliwattHour = 3.6;  // 1 mWh = 3.6 J

// Per-target calibration: energy per accumulate, per neuron state update
// per step, and the fixed sensing front-end cost.
struct HardwareProfile {
  std::string name;
  double e_ac_pj = 0.0;
  double e_neuron_pj = 0.0;
  double e_io_uj = 0.0;

  void validate() const {
    if (e_ac_pj <= 0.0 || e_neuron_pj <= 0.0 || e_io_uj <= 0.0)
      throw ValidationError("hardware profile energies must be strictly positive");
  }
};

inline std::array<HardwareProfile, 3> builtin_profiles() {
  return {HardwareProfile{"loihi2", 8.1, 0.4, 22.0},
          HardwareProfile{"spinnaker2", 11.4, 0.7, 31.0},
          HardwareProfile{"cortex-m4-rle", 6.3, 1.2, 54.0}};
}

inline HardwareProfile profile_by_name(const std::string& name) {
  for (const HardwareProfile& p : builtin_profiles())
    if (p.name == name) return p;
  throw ValidationError("unknown hardware profile: " + name);
}

// Itemised per-inference energy, internally in joules.
struct EnergyBreakdown {
  double synaptic_j = 0.0;
  double neuron_j = 0.0;
  double io_j = 0.0;
  double total_j = 0.0;
};

struct ProxyOptions {
  // When set, the synaptic term is multiplied by T and the connectivity
  // density so it counts the same events as the runtime OpCounter.  The
  // default reproduces the proxy formula as published.
  bool physical = false;
};

// Closed-form energy proxy.  rho holds the per-layer spike-activity rates
// (pre-synaptic interpretation: rho[l] drives layer l's accumulates, with
// rho[0] being the encoder output rate), N_0 = input_dim.
inline EnergyBreakdown proxy_energy(const ArchDescriptor& desc, const std::vector<double>& rho,
                                    const HardwareProfile& profile, ProxyOptions opts = {}) {
  if (static_cast<int>(rho.size()) != desc.depth)
    throw ValidationError("proxy_energy: rho length must equal depth");
  for (double r : rho)
    if (r < 0.0 || r > 1.0) throw ValidationError("proxy_energy: rho entries must be in [0,1]");
  profile.validate();

  const double density = connectivity_density(desc.connectivity);
  double synaptic_pj = 0.0;
  double mean_n = 0.0;
  for (int l = 0; l < desc.depth; ++l) {
    const double n_prev = l == 0 ? desc.input_dim : desc.widths[l - 1];
    double term = rho[static_cast<std::size_t>(l)] * desc.widths[l] * n_prev * profile.e_ac_pj;
    if (opts.physical) term *= static_cast<double>(desc.time_steps) * density;
    synaptic_pj += term;
    mean_n += desc.widths[l];
  }
  mean_n /= desc.depth;

  EnergyBreakdown e;
  e.synaptic_j = synaptic_pj * kPicojoule;
  e.neuron_j = desc.depth * mean_n * desc.time_steps * profile.e_neuron_pj * kPicojoule;
  e.io_j = profile.e_io_uj * kMicrojoule;
  e.total_j = e.synaptic_j + e.neuron_j + e.io_j;
  return e;
}

// Analytic Cortex-M reduction curve: predicted dense/sparse energy ratio at
// a given spike-activity rate in percent.
inline double cortexm_reduction_curve(double rho_percent) {
  if (rho_percent < 0.0) throw ValidationError("cortexm_reduction_curve: rho_percent must be >= 0");
  return 1.0 / (0.0099 * rho_percent * 0.15 + 0.07);
}

// Daily node energy budget (compute + radio + idle).
struct BudgetParams {
  double inferences_per_day = 0.0;
  double energy_per_inference_j = 0.0;
  double lora_tx_j = 0.0;
  double transmissions_per_day = 0.0;
  double quiescent_current_a = 0.0;
  double supply_volts = 0.0;
  double seconds_per_day = 86400.0;

  void validate() const {
    if (inferences_per_day < 0 || energy_per_inference_j < 0 || lora_tx_j < 0 ||
        transmissions_per_day < 0 || quiescent_current_a < 0 || supply_volts < 0 ||
        seconds_per_day < 0)
      throw ValidationError("budget parameters must be non-negative");
  }
};

struct DailyEnergy {
  double compute_mwh = 0.0;
  double radio_mwh = 0.0;
  double idle_mwh = 0.0;
  double total_mwh = 0.0;
};

inline DailyEnergy daily_energy(const BudgetParams& params) {
  params.validate();
  DailyEnergy e;
  e.compute_mwh = params.inferences_per_day * params.energy_per_inference_j / kJoulePerMilliwattHour;
  e.radio_mwh = params.transmissions_per_day * params.lora_tx_j / kJoulePerMilliwattHour;
  e.idle_mwh = params.quiescent_current_a * params.supply_volts * params.seconds_per_day /
               kJoulePerMilliwattHour;
  e.total_mwh = e.compute_mwh + e.radio_mwh + e.idle_mwh;
  return e;
}

// Replication entry point: accepts the three published components directly.
inline DailyEnergy daily_energy_components(double compute_mwh, double radio_mwh, double idle_mwh) {
  DailyEnergy e;
  e.compute_mwh = compute_mwh;
  e.radio_mwh = radio_mwh;
  e.idle_mwh = idle_mwh;
  e.total_mwh = compute_mwh + radio_mwh + idle_mwh;
  return e;
}

inline double lifetime_days(double capacity_wh, double daily_mwh) {
  if (daily_mwh <= 0.0) throw ValidationError("lifetime_days: daily energy must be > 0");
  return 1000.0 * capacity_wh / daily_mwh;
}

}  // namespace edgespike
