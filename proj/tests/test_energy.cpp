#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <edgespike/energy.hpp>

using namespace edgespike;

TEST_CASE("builtin profiles carry the nine calibration numbers") {
  const auto profiles = builtin_profiles();
  REQUIRE(profiles[0].name == "loihi2");
  REQUIRE(profiles[0].e_ac_pj == 8.1);
  REQUIRE(profiles[0].e_neuron_pj == 0.4);
  REQUIRE(profiles[0].e_io_uj == 22.0);
  REQUIRE(profiles[1].name == "spinnaker2");
  REQUIRE(profiles[1].e_ac_pj == 11.4);
  REQUIRE(profiles[1].e_neuron_pj == 0.7);
  REQUIRE(profiles[1].e_io_uj == 31.0);
  REQUIRE(profiles[2].name == "cortex-m4-rle");
  REQUIRE(profiles[2].e_ac_pj == 6.3);
  REQUIRE(profiles[2].e_neuron_pj == 1.2);
  REQUIRE(profiles[2].e_io_uj == 54.0);
  REQUIRE(profile_by_name("spinnaker2").e_io_uj == 31.0);
  REQUIRE_THROWS_AS(profile_by_name("tpu"), ValidationError);
}

TEST_CASE("proxy energy hand-computed example") {
  ArchDescriptor desc = make_descriptor(2, 64, 8, DecayMode::kFixed, Connectivity::kDense,
                                        SkipPattern::kNone, 40, 4);
  EnergyBreakdown e = proxy_energy(desc, {0.2, 0.2}, profile_by_name("loihi2"));
  const double synaptic_pj = 0.2 * 64 * 40 * 8.1 + 0.2 * 64 * 64 * 8.1;
  REQUIRE(synaptic_pj == Catch::Approx(10782.72));
  REQUIRE(e.synaptic_j == Catch::Approx(synaptic_pj * 1e-12).epsilon(1e-12));
  REQUIRE(e.neuron_j == Catch::Approx(2 * 64 * 8 * 0.4 * 1e-12).epsilon(1e-12));
  REQUIRE(e.io_j == Catch::Approx(22e-6).epsilon(1e-12));
  REQUIRE(e.total_j == Catch::Approx(22e-6 + 11.19232e-9).epsilon(1e-9));
}

TEST_CASE("zero rates leave only neuron and io terms") {
  ArchDescriptor desc = make_descriptor(3, 128, 16, DecayMode::kFixed, Connectivity::kDense,
                                        SkipPattern::kNone, 40, 4);
  EnergyBreakdown e = proxy_energy(desc, {0.0, 0.0, 0.0}, profile_by_name("spinnaker2"));
  REQUIRE(e.synaptic_j == 0.0);
  REQUIRE(e.total_j == Catch::Approx(3 * 128 * 16 * 0.7 * 1e-12 + 31e-6).epsilon(1e-12));
}

TEST_CASE("synaptic term is linear in the rates") {
  ArchDescriptor desc = make_descriptor(2, 64, 8, DecayMode::kFixed, Connectivity::kDense,
                                        SkipPattern::kNone, 40, 4);
  const auto p = profile_by_name("loihi2");
  EnergyBreakdown a = proxy_energy(desc, {0.1, 0.3}, p);
  EnergyBreakdown b = proxy_energy(desc, {0.2, 0.6}, p);
  REQUIRE(b.synaptic_j == Catch::Approx(2.0 * a.synaptic_j).epsilon(1e-12));
}

TEST_CASE("proxy validates its inputs") {
  ArchDescriptor desc = make_descriptor(2, 64, 8, DecayMode::kFixed, Connectivity::kDense,
                                        SkipPattern::kNone, 40, 4);
  const auto p = profile_by_name("loihi2");
  REQUIRE_THROWS_AS(proxy_energy(desc, {0.2}, p), ValidationError);
  REQUIRE_THROWS_AS(proxy_energy(desc, {0.2, 1.2}, p), ValidationError);
}

TEST_CASE("reduction curve values") {
  REQUIRE(cortexm_reduction_curve(0.0) == Catch::Approx(1.0 / 0.07).epsilon(1e-9));
  REQUIRE(cortexm_reduction_curve(16.8) ==
          Catch::Approx(1.0 / (0.0099 * 16.8 * 0.15 + 0.07)).epsilon(1e-9));
  REQUIRE(cortexm_reduction_curve(16.8) == Catch::Approx(10.532).epsilon(1e-3));
  REQUIRE(cortexm_reduction_curve(36.1) ==
          Catch::Approx(1.0 / (0.0099 * 36.1 * 0.15 + 0.07)).epsilon(1e-9));
  double prev = cortexm_reduction_curve(0.0);
  for (double rho = 1.0; rho <= 100.0; rho += 1.0) {
    const double cur = cortexm_reduction_curve(rho);
    REQUIRE(cur < prev);
    prev = cur;
  }
  REQUIRE_THROWS_AS(cortexm_reduction_curve(-1.0), ValidationError);
}

TEST_CASE("daily energy components and idle derivation") {
  DailyEnergy published = daily_energy_components(0.634, 0.121, 0.883);
  REQUIRE(published.total_mwh == Catch::Approx(1.638).epsilon(1e-12));

  BudgetParams idle_only;
  idle_only.quiescent_current_a = 11.15e-6;
  idle_only.supply_volts = 3.3;
  DailyEnergy idle = daily_energy(idle_only);
  REQUIRE(idle.idle_mwh == Catch::Approx(11.15e-6 * 3.3 * 86400.0 / 3.6).epsilon(1e-9));
  REQUIRE(idle.idle_mwh == Catch::Approx(0.883).epsilon(1e-3));

  DailyEnergy zero = daily_energy(BudgetParams{});
  REQUIRE(zero.total_mwh == 0.0);
}

TEST_CASE("lifetime projection") {
  REQUIRE(lifetime_days(2.0, 1.638) == Catch::Approx(2000.0 / 1.638).epsilon(1e-9));
  REQUIRE(std::abs(lifetime_days(2.0, 1.638) - 1221.0) < 1.0);
  REQUIRE(1978.0 / 312.0 == Catch::Approx(6.34).margin(0.05));
  REQUIRE(lifetime_days(0.0, 1.0) == 0.0);
  REQUIRE_THROWS_AS(lifetime_days(2.0, 0.0), ValidationError);
}
