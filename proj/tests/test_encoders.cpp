#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include <edgespike/encoders.hpp>
#include <edgespike/rng.hpp>

using namespace edgespike;

TEST_CASE("constant signal emits no delta spikes") {
  EncoderConfig cfg;
  cfg.base_threshold = 0.3;
  SpikeRaster r = delta_encode({0.7, 0.7, 0.7, 0.7, 0.7}, cfg);
  for (std::uint8_t b : r.data) REQUIRE(b == 0);
}

TEST_CASE("single step crossing fires ON once") {
  EncoderConfig cfg;
  cfg.base_threshold = 0.5;
  SpikeRaster r = delta_encode({0.0, 1.0, 1.0, 1.0}, cfg);
  REQUIRE(r.steps == 3);
  REQUIRE(r.at(0, 0) == 1);  // ON at t=0 (first transition)
  REQUIRE(r.at(0, 1) == 0);
  for (int t = 1; t < 3; ++t) {
    REQUIRE(r.at(t, 0) == 0);
    REQUIRE(r.at(t, 1) == 0);
  }
}

TEST_CASE("negated signal swaps ON and OFF") {
  EncoderConfig cfg;
  cfg.base_threshold = 0.2;
  cfg.adapt_rate = 0.5;
  Rng rng = Rng::substream(3, "sig");
  std::vector<double> signal(32);
  for (double& v : signal) v = rng.uniform(-1.0, 1.0);
  std::vector<double> neg = signal;
  for (double& v : neg) v = -v;

  SpikeRaster a = delta_encode(signal, cfg);
  SpikeRaster b = delta_encode(neg, cfg);
  for (int t = 0; t < a.steps; ++t) {
    REQUIRE(a.at(t, 0) == b.at(t, 1));
    REQUIRE(a.at(t, 1) == b.at(t, 0));
  }
}

TEST_CASE("at most one polarity fires per step") {
  EncoderConfig cfg;
  cfg.base_threshold = 0.05;
  cfg.adapt_rate = 0.3;
  Rng rng = Rng::substream(4, "sig");
  std::vector<double> signal(100);
  for (double& v : signal) v = rng.uniform(-1.0, 1.0);
  SpikeRaster r = delta_encode(signal, cfg);
  for (int t = 0; t < r.steps; ++t) REQUIRE(r.at(t, 0) + r.at(t, 1) <= 1);
}

TEST_CASE("adaptive threshold reduces spikes on noisy signals") {
  Rng rng = Rng::substream(5, "sig");
  std::vector<double> signal(200);
  for (double& v : signal) v = rng.normal(0.0, 1.0);

  EncoderConfig fixed;
  fixed.base_threshold = 0.1;
  EncoderConfig adaptive = fixed;
  adaptive.adapt_rate = 1.0;

  auto count = [](const SpikeRaster& r) {
    int c = 0;
    for (std::uint8_t b : r.data) c += b;
    return c;
  };
  REQUIRE(count(delta_encode(signal, adaptive)) < count(delta_encode(signal, fixed)));
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.base_threshold = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
  cfg.base_threshold = 0.1;
  cfg.adapt_rate = 1.5;
  REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
  REQUIRE_THROWS_AS(delta_encode({1.0}, EncoderConfig{}), ValidationError);
}

TEST_CASE("threshold encoder truth table") {
  SECTION("all below") {
    SpikeRaster r = threshold_encode({{0.1, 0.2}, {0.3, 0.4}}, {0.5, 0.5});
    for (std::uint8_t b : r.data) REQUIRE(b == 0);
  }
  SECTION("boundary is inclusive") {
    SpikeRaster r = threshold_encode({{0.5, 0.5}}, {0.5, 0.5});
    for (std::uint8_t b : r.data) REQUIRE(b == 1);
  }
  SECTION("elementwise comparison") {
    SpikeRaster r = threshold_encode({{0.2, 0.9}, {0.6, 0.1}}, {0.5, 0.5});
    REQUIRE(r.at(0, 0) == 0);
    REQUIRE(r.at(0, 1) == 1);
    REQUIRE(r.at(1, 0) == 1);
    REQUIRE(r.at(1, 1) == 0);
  }
  SECTION("shape and threshold validation") {
    REQUIRE_THROWS_AS(threshold_encode({{0.1}}, {0.5, 0.5}), ShapeError);
    REQUIRE_THROWS_AS(threshold_encode({{0.1}}, {-0.5}), ValidationError);
  }
}
