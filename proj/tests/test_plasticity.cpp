#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <edgespike/plasticity.hpp>
#include <edgespike/rng.hpp>

using namespace edgespike;

namespace {

NetworkParams excitable_network() {
  ArchDescriptor desc = make_descriptor(2, 64, 8, DecayMode::kFixed, Connectivity::kSparse50,
                                        SkipPattern::kNone, 16, 3);
  NetworkParams net = build_network(desc, 42);
  LifLayerParams& first = net.layers.front();
  for (std::size_t i = 0; i < first.weights.size(); ++i)
    first.weights[i] = first.mask[i] ? 0.5f : 0.0f;
  return net;
}

SpikeRaster random_raster(int steps, int width, double p, Rng& rng) {
  SpikeRaster r(steps, width);
  for (auto& b : r.data) b = rng.uniform() < p ? 1 : 0;
  return r;
}

}  // namespace

TEST_CASE("trace follows the closed form for a single spike") {
  TraceState traces(1, 1, 0.9);
  std::uint8_t on = 1, off = 0;
  traces.update(&on, &off);
  REQUIRE(traces.pre[0] == Catch::Approx(0.1).margin(1e-7));
  for (int k = 2; k <= 12; ++k) {
    traces.update(&off, &off);
    REQUIRE(traces.pre[0] == Catch::Approx(0.1 * std::pow(0.9, k - 1)).margin(1e-7));
  }
  REQUIRE(traces.post[0] == 0.0f);
}

TEST_CASE("trace saturates toward one under constant spiking") {
  TraceState traces(1, 1, 0.9);
  std::uint8_t on = 1;
  for (int k = 0; k < 400; ++k) traces.update(&on, &on);
  REQUIRE(traces.pre[0] == Catch::Approx(1.0).margin(1e-5));
  REQUIRE(traces.post[0] == Catch::Approx(1.0).margin(1e-5));
  traces.reset();
  REQUIRE(traces.pre[0] == 0.0f);
  REQUIRE(traces.post[0] == 0.0f);
}

TEST_CASE("hebbian delta spot values") {
  PlasticityConfig cfg;
  REQUIRE(hebbian_delta(0.0, 0.0, 0.0, cfg) == 0.0);
  REQUIRE(hebbian_delta(1.0, 1.0, 0.0, cfg) == Catch::Approx(1e-4).epsilon(1e-12));
  REQUIRE(hebbian_delta(0.0, 0.0, 1.0, cfg) == Catch::Approx(-5e-8).epsilon(1e-12));
  REQUIRE(hebbian_delta(0.5, 0.4, 2.0, cfg) ==
          Catch::Approx(1e-4 * (0.2 - 5e-4 * 2.0)).epsilon(1e-12));
}

TEST_CASE("plasticity config validation") {
  PlasticityConfig cfg;
  cfg.validate();
  cfg.gamma = 1.0;
  REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
  cfg = PlasticityConfig{};
  cfg.eta = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
  cfg = PlasticityConfig{};
  cfg.flush_interval = 0;
  REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("delta accumulator quantizes, cancels, and saturates") {
  DeltaAccumulator acc(4);
  acc.accumulate(0, 0.0);
  REQUIRE(acc.q[0] == 0);
  REQUIRE_FALSE(acc.saturated);

  acc.accumulate(1, 1e-4);
  REQUIRE(acc.q[1] == 7);  // round(1e-4 / 2^-16)
  acc.accumulate(1, -1e-4);
  REQUIRE(acc.q[1] == 0);

  acc.accumulate(2, 0.6);  // 39322 counts, beyond int16
  REQUIRE(acc.q[2] == 32767);
  REQUIRE(acc.saturated);
  acc.accumulate(3, -0.6);
  REQUIRE(acc.q[3] == -32768);

  acc.clear();
  REQUIRE_FALSE(acc.saturated);
  for (std::int16_t v : acc.q) REQUIRE(v == 0);
}

TEST_CASE("adaptation state budget") {
  REQUIRE(plasticity_state_bytes(6400, 16) == 3200);  // 400 groups
  REQUIRE(plasticity_state_bytes(100, 1) == 800);
  REQUIRE(plasticity_state_bytes(100, 100) == 8);
  REQUIRE(plasticity_state_bytes(101, 100) == 16);
  REQUIRE_THROWS_AS(plasticity_state_bytes(100, 0), ValidationError);
}

TEST_CASE("engine flushes on the configured cadence") {
  NetworkParams net = excitable_network();
  FixedNetwork fixed = quantize_weights(net);
  PlasticityConfig cfg;
  cfg.flush_interval = 10;
  PlasticityEngine engine(cfg, net, fixed);

  Rng rng = Rng::substream(5, "cadence");
  for (int i = 0; i < 9; ++i)
    step_inference(fixed, random_raster(8, 16, 0.4, rng), engine);
  REQUIRE(engine.flush_count() == 0);
  bool pending = false;
  for (std::int16_t v : engine.pending().q) pending |= v != 0;
  REQUIRE(pending);

  step_inference(fixed, random_raster(8, 16, 0.4, rng), engine);
  REQUIRE(engine.flush_count() == 1);
  for (std::int16_t v : engine.pending().q) REQUIRE(v == 0);

  for (int i = 0; i < 25; ++i)
    step_inference(fixed, random_raster(8, 16, 0.4, rng), engine);
  REQUIRE(engine.inference_count() == 35);
  REQUIRE(engine.flush_count() == 3);  // floor(35 / 10)
}

TEST_CASE("adaptation touches only the first layer") {
  NetworkParams net = excitable_network();
  FixedNetwork fixed = quantize_weights(net);
  const std::vector<float> w0 = net.layers[0].weights;
  const std::vector<float> w1 = net.layers[1].weights;
  const std::vector<float> w2 = net.layers[2].weights;
  const std::vector<std::int16_t> q1 = fixed.layers[1].dense;

  PlasticityConfig cfg;
  cfg.flush_interval = 5;
  PlasticityEngine engine(cfg, net, fixed);
  Rng rng = Rng::substream(6, "locality");
  for (int i = 0; i < 10; ++i)
    step_inference(fixed, random_raster(8, 16, 0.5, rng), engine);

  REQUIRE(net.layers[0].weights != w0);
  REQUIRE(net.layers[1].weights == w1);
  REQUIRE(net.layers[2].weights == w2);
  REQUIRE(fixed.layers[1].dense == q1);
  REQUIRE(engine.state_bytes() ==
          plasticity_state_bytes(net.layers[0].nnz(), cfg.trace_group));
}

TEST_CASE("flushed weights respect the mask and refresh the fixed copy") {
  NetworkParams net = excitable_network();
  FixedNetwork fixed = quantize_weights(net);
  PlasticityConfig cfg;
  cfg.flush_interval = 4;
  PlasticityEngine engine(cfg, net, fixed);
  Rng rng = Rng::substream(7, "mask");
  for (int i = 0; i < 8; ++i)
    step_inference(fixed, random_raster(8, 16, 0.5, rng), engine);

  const LifLayerParams& first = net.layers.front();
  for (std::size_t i = 0; i < first.weights.size(); ++i)
    if (!first.mask[i]) REQUIRE(first.weights[i] == 0.0f);
  FixedWeights requant = quantize_layer(net.layers.front());
  REQUIRE(fixed.layers.front().dense == requant.dense);
  REQUIRE(fixed.layers.front().scale == requant.scale);
}

TEST_CASE("failed persistence pauses adaptation and keeps the deltas") {
  NetworkParams net = excitable_network();
  FixedNetwork fixed = quantize_weights(net);
  const std::vector<float> w0 = net.layers[0].weights;

  bool allow = false;
  int attempts = 0;
  PlasticityConfig cfg;
  cfg.flush_interval = 5;
  PlasticityEngine engine(cfg, net, fixed, [&](const FlushRecord& rec) {
    ++attempts;
    REQUIRE(rec.inference_count == engine.inference_count());
    return allow;
  });

  Rng rng = Rng::substream(8, "persist");
  for (int i = 0; i < 5; ++i)
    step_inference(fixed, random_raster(8, 16, 0.5, rng), engine);
  REQUIRE(attempts == 1);
  REQUIRE(engine.paused());
  REQUIRE(engine.flush_count() == 0);
  REQUIRE(net.layers[0].weights == w0);
  bool pending = false;
  for (std::int16_t v : engine.pending().q) pending |= v != 0;
  REQUIRE(pending);

  // Paused observations count but accumulate nothing further.
  const DeltaAccumulator snapshot = engine.pending();
  step_inference(fixed, random_raster(8, 16, 0.5, rng), engine);
  REQUIRE(engine.inference_count() == 6);
  REQUIRE(engine.pending().q == snapshot.q);

  allow = true;
  engine.resume();
  engine.flush();
  REQUIRE(attempts == 2);
  REQUIRE(engine.flush_count() == 1);
  REQUIRE(net.layers[0].weights != w0);
  for (std::int16_t v : engine.pending().q) REQUIRE(v == 0);
}

TEST_CASE("observe rejects mismatched raster shapes") {
  NetworkParams net = excitable_network();
  FixedNetwork fixed = quantize_weights(net);
  PlasticityEngine engine(PlasticityConfig{}, net, fixed);
  REQUIRE_THROWS_AS(engine.observe(SpikeRaster(8, 12), SpikeRaster(8, 64)), ShapeError);
  REQUIRE_THROWS_AS(engine.observe(SpikeRaster(8, 16), SpikeRaster(4, 64)), ShapeError);
}
