#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <edgespike/dataset.hpp>
#include <edgespike/nas.hpp>
#include <edgespike/rng.hpp>

using namespace edgespike;

namespace {

SearchSpace small_space() {
  SearchSpace space;
  space.depths = {2, 3};
  space.widths = {64, 128};
  space.time_steps = {4, 8};
  space.decay_modes = {DecayMode::kFixed};
  space.connectivities = {Connectivity::kDense, Connectivity::kSparse50};
  space.skips = {SkipPattern::kNone};
  space.input_dim = 16;
  space.num_classes = 3;
  return space;
}

ParetoPoint point(double energy_j, double accuracy, bool failed = false) {
  ParetoPoint p;
  p.energy_j = energy_j;
  p.accuracy = accuracy;
  p.failed = failed;
  return p;
}

}  // namespace

TEST_CASE("memory footprint worked example") {
  ArchDescriptor dense = make_descriptor(2, 64, 8, DecayMode::kFixed, Connectivity::kDense,
                                         SkipPattern::kNone, 40, 4);
  MemoryFootprint fd = memory_footprint(dense);
  REQUIRE(fd.weight_bytes == 64 * 40 + 64 * 64);  // 6656
  REQUIRE(fd.weight_bytes == 6656);

  ArchDescriptor sparse = make_descriptor(2, 64, 8, DecayMode::kFixed, Connectivity::kSparse50,
                                          SkipPattern::kNone, 40, 4);
  REQUIRE(memory_footprint(sparse).weight_bytes == 3328);

  // Peak working set is dominated by the widest layer's state.
  const std::uint64_t layer0 = 2 * 64 + 8 + 2 * 40;
  const std::uint64_t layer1 = 2 * 64 + 8 + 2 * 64;
  REQUIRE(fd.peak_activation_bytes == std::max(layer0, layer1));
  REQUIRE(fd.total() == fd.weight_bytes + fd.peak_activation_bytes);
}

TEST_CASE("footprint scales with connectivity density") {
  for (int width : {64, 128, 256}) {
    ArchDescriptor dense = make_descriptor(3, width, 8, DecayMode::kFixed, Connectivity::kDense,
                                           SkipPattern::kNone, 24, 4);
    ArchDescriptor quarter = make_descriptor(3, width, 8, DecayMode::kFixed, Connectivity::kSparse25,
                                             SkipPattern::kNone, 24, 4);
    REQUIRE(memory_footprint(quarter).weight_bytes * 4 == memory_footprint(dense).weight_bytes);
  }
}

TEST_CASE("prune keeps everything under infinite budgets") {
  const std::vector<ArchDescriptor> all = enumerate_space(small_space());
  ConstraintSet loose;
  loose.e_max_j = 1e9;
  loose.m_max_bytes = ~0ull;
  const auto feasible = prune_infeasible(all, loose, profile_by_name("loihi2"), 0.2);
  REQUIRE(feasible.size() == all.size());
  for (std::size_t i = 1; i < feasible.size(); ++i)
    REQUIRE(feasible[i - 1].predicted_energy_j <= feasible[i].predicted_energy_j);
}

TEST_CASE("prune removes budget violators and tolerates an empty result") {
  const std::vector<ArchDescriptor> all = enumerate_space(small_space());
  const auto profile = profile_by_name("loihi2");

  ConstraintSet tight;
  tight.e_max_j = 1e9;
  tight.m_max_bytes = 1;
  REQUIRE(prune_infeasible(all, tight, profile, 0.2).empty());

  // A memory budget between the smallest and largest candidate removes
  // exactly the candidates above it.
  std::vector<std::uint64_t> sizes;
  for (const ArchDescriptor& d : all) sizes.push_back(memory_footprint(d).total());
  std::sort(sizes.begin(), sizes.end());
  ConstraintSet mid;
  mid.e_max_j = 1e9;
  mid.m_max_bytes = sizes[sizes.size() / 2];
  const auto feasible = prune_infeasible(all, mid, profile, 0.2);
  std::size_t expected = 0;
  for (std::uint64_t s : sizes)
    if (s <= mid.m_max_bytes) ++expected;
  REQUIRE(feasible.size() == expected);
  for (const FeasibleCandidate& c : feasible) REQUIRE(c.footprint.total() <= mid.m_max_bytes);
}

TEST_CASE("prune validates its inputs") {
  ConstraintSet bad;
  bad.e_max_j = 0.0;
  REQUIRE_THROWS_AS(prune_infeasible({}, bad, profile_by_name("loihi2"), 0.2), ValidationError);
  REQUIRE_THROWS_AS(prune_infeasible({}, ConstraintSet{}, profile_by_name("loihi2"), 1.5),
                    ValidationError);
}

TEST_CASE("dense ops estimate follows density and time steps") {
  ArchDescriptor d8 = make_descriptor(2, 64, 8, DecayMode::kFixed, Connectivity::kDense,
                                      SkipPattern::kNone, 40, 4);
  ArchDescriptor d16 = make_descriptor(2, 64, 16, DecayMode::kFixed, Connectivity::kDense,
                                       SkipPattern::kNone, 40, 4);
  REQUIRE(dense_ops_estimate(d8) == 6656ull * 8);
  REQUIRE(dense_ops_estimate(d16) == 2 * dense_ops_estimate(d8));

  ConstraintSet ops;
  ops.e_max_j = 1e9;
  ops.m_max_bytes = ~0ull;
  ops.max_dense_ops = dense_ops_estimate(d8);
  const auto feasible = prune_infeasible({d8, d16}, ops, profile_by_name("loihi2"), 0.2);
  REQUIRE(feasible.size() == 1);
  REQUIRE(feasible[0].descriptor == d8);
}

TEST_CASE("rho estimation on silent and saturated networks") {
  ArchDescriptor desc = make_descriptor(2, 64, 4, DecayMode::kFixed, Connectivity::kDense,
                                        SkipPattern::kNone, 16, 3);
  NetworkParams net = build_network(desc, 21);

  SpikeRaster ones(4, 16);
  std::fill(ones.data.begin(), ones.data.end(), std::uint8_t{1});

  SECTION("zero weights never spike") {
    for (auto& layer : net.layers) std::fill(layer.weights.begin(), layer.weights.end(), 0.0f);
    const auto rho = estimate_rho(net, {{ones, ones}});
    for (double r : rho) REQUIRE(r == 0.0);
  }
  SECTION("strongly excitatory weights saturate the hidden rates") {
    for (auto& layer : net.layers)
      for (std::size_t i = 0; i < layer.weights.size(); ++i)
        layer.weights[i] = layer.mask[i] ? 5.0f : 0.0f;
    const auto rho = estimate_rho(net, {{ones}});
    for (std::size_t l = 0; l + 1 < rho.size(); ++l) REQUIRE(rho[l] == 1.0);
  }
  SECTION("batch mean equals the per-sample mean") {
    Rng rng = Rng::substream(7, "rho");
    SpikeRaster a(4, 16), b(4, 16);
    for (auto& v : a.data) v = rng.uniform() < 0.4 ? 1 : 0;
    for (auto& v : b.data) v = rng.uniform() < 0.4 ? 1 : 0;
    const auto ra = estimate_rho(net, {{a}});
    const auto rb = estimate_rho(net, {{b}});
    const auto rab = estimate_rho(net, {{a}, {b}});
    for (std::size_t l = 0; l < rab.size(); ++l)
      REQUIRE(rab[l] == Catch::Approx(0.5 * (ra[l] + rb[l])).margin(1e-12));
  }
  SECTION("no rasters is an error") { REQUIRE_THROWS_AS(estimate_rho(net, {}), ValidationError); }
}

TEST_CASE("presynaptic rho chains encoder and layer rates") {
  const auto rho = presynaptic_rho(0.3, {0.1, 0.2, 0.4}, 3);
  REQUIRE(rho == std::vector<double>{0.3, 0.1, 0.2});
}

TEST_CASE("proxy evaluation is deterministic in the derived seed") {
  GeneratorParams gp;
  gp.feature_dim = 16;
  gp.num_classes = 3;
  DatasetBundle bundle = generate_synthetic(gp, 31, 40, 20, 0);
  TrainTask task = make_train_task(bundle);

  ArchDescriptor cand = make_descriptor(2, 64, 8, DecayMode::kFixed, Connectivity::kSparse50,
                                        SkipPattern::kNone, 16, 3);
  ProxyEvalConfig cfg;
  cfg.epochs = 3;
  cfg.global_seed = 5;

  ParetoPoint a = proxy_eval(cand, task, cfg);
  ParetoPoint b = proxy_eval(cand, task, cfg);
  REQUIRE_FALSE(a.failed);
  REQUIRE(a.accuracy == b.accuracy);
  REQUIRE(a.energy_j == b.energy_j);
  REQUIRE(a.footprint_bytes == memory_footprint(cand).total());
  REQUIRE(a.energy_j > 0.0);

  ProxyEvalConfig other = cfg;
  other.global_seed = 6;
  ParetoPoint c = proxy_eval(cand, task, other);
  REQUIRE(c.accuracy >= 0.0);
}

TEST_CASE("supernet slicing") {
  SearchSpace space = small_space();
  const ArchDescriptor sup_desc = supernet_descriptor(space);
  REQUIRE(sup_desc.depth == 3);
  REQUIRE(sup_desc.widths == std::vector<int>{128, 128, 128});
  REQUIRE(sup_desc.time_steps == 8);
  REQUIRE(sup_desc.connectivity == Connectivity::kDense);
  REQUIRE(sup_desc.skip == SkipPattern::kNone);

  const NetworkParams supernet = build_network(sup_desc, 17);

  SECTION("the maximal descriptor slices to the supernet itself") {
    NetworkParams sliced = subnet_extract(supernet, sup_desc, 99);
    for (std::size_t l = 0; l < supernet.layers.size(); ++l) {
      REQUIRE(sliced.layers[l].weights == supernet.layers[l].weights);
      REQUIRE(sliced.layers[l].beta == supernet.layers[l].beta);
    }
  }
  SECTION("a narrower shallower candidate gets the leading sub-block") {
    ArchDescriptor cand = make_descriptor(2, 64, 4, DecayMode::kFixed, Connectivity::kSparse50,
                                          SkipPattern::kNone, 16, 3);
    NetworkParams sliced = subnet_extract(supernet, cand, 99);
    REQUIRE(sliced.layers.size() == 3);  // 2 hidden + readout
    for (int l = 0; l < 2; ++l) {
      const LifLayerParams& sub = sliced.layers[static_cast<std::size_t>(l)];
      const LifLayerParams& src = supernet.layers[static_cast<std::size_t>(l)];
      REQUIRE(sub.width == 64);
      for (int i = 0; i < sub.width; ++i)
        for (int j = 0; j < sub.fan_in; ++j)
          REQUIRE(sub.w(i, j) == (sub.m(i, j) ? src.w(i, j) : 0.0f));
    }
    const LifLayerParams& readout = sliced.layers.back();
    const LifLayerParams& sup_readout = supernet.layers.back();
    REQUIRE(readout.width == 3);
    for (int i = 0; i < readout.width; ++i)
      for (int j = 0; j < readout.fan_in; ++j)
        REQUIRE(readout.w(i, j) == sup_readout.w(i, j));

    NetworkParams again = subnet_extract(supernet, cand, 99);
    for (std::size_t l = 0; l < sliced.layers.size(); ++l)
      REQUIRE(again.layers[l].weights == sliced.layers[l].weights);
  }
  SECTION("dense-connect candidates fall outside the envelope") {
    ArchDescriptor cand = make_descriptor(2, 64, 4, DecayMode::kFixed, Connectivity::kDense,
                                          SkipPattern::kDenseConnect, 16, 3);
    REQUIRE_THROWS_AS(subnet_extract(supernet, cand, 1), ValidationError);
  }
  SECTION("wider or deeper candidates are rejected") {
    ArchDescriptor wide = make_descriptor(2, 256, 4, DecayMode::kFixed, Connectivity::kDense,
                                          SkipPattern::kNone, 16, 3);
    REQUIRE_THROWS_AS(subnet_extract(supernet, wide, 1), ValidationError);
    ArchDescriptor deep = make_descriptor(4, 64, 4, DecayMode::kFixed, Connectivity::kDense,
                                          SkipPattern::kNone, 16, 3);
    REQUIRE_THROWS_AS(subnet_extract(supernet, deep, 1), ValidationError);
  }
}

TEST_CASE("pareto front matches a brute-force oracle") {
  Rng rng = Rng::substream(3, "pareto");
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(24);
    std::vector<ParetoPoint> points;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grids force ties and duplicates.
      const double e = (1.0 + static_cast<double>(rng.uniform_index(6))) * 1e-4;
      const double a = static_cast<double>(rng.uniform_index(6)) / 5.0;
      points.push_back(point(e, a, rng.uniform() < 0.1));
    }

    std::set<std::pair<double, double>> expected;
    for (const ParetoPoint& p : points) {
      if (p.failed) continue;
      bool dominated = false;
      for (const ParetoPoint& q : points) {
        if (q.failed) continue;
        if (q.energy_j <= p.energy_j && q.accuracy >= p.accuracy &&
            (q.energy_j < p.energy_j || q.accuracy > p.accuracy)) {
          dominated = true;
          break;
        }
      }
      if (!dominated) expected.insert({p.energy_j, p.accuracy});
    }

    const auto front = pareto_front(points);
    REQUIRE(front.size() == expected.size());
    for (std::size_t i = 0; i < front.size(); ++i) {
      REQUIRE(expected.count({front[i].energy_j, front[i].accuracy}) == 1);
      if (i > 0) {
        REQUIRE(front[i - 1].energy_j < front[i].energy_j);
        REQUIRE(front[i - 1].accuracy < front[i].accuracy);
      }
    }
  }
}

TEST_CASE("pareto front keeps the first of exact duplicates") {
  std::vector<ParetoPoint> points{point(1e-3, 0.9), point(1e-3, 0.9), point(2e-3, 0.85)};
  points[0].footprint_bytes = 111;
  points[1].footprint_bytes = 222;
  const auto front = pareto_front(points);
  REQUIRE(front.size() == 1);
  REQUIRE(front[0].footprint_bytes == 111);
}

TEST_CASE("dominated worked example") {
  const auto front = pareto_front({point(1e-3, 0.90), point(2e-3, 0.85)});
  REQUIRE(front.size() == 1);
  REQUIRE(front[0].energy_j == 1e-3);
  REQUIRE(front[0].accuracy == 0.90);
}

TEST_CASE("knee point selection") {
  SECTION("empty front is an error") { REQUIRE_THROWS_AS(knee_point({}), ValidationError); }
  SECTION("a single point is its own knee") {
    REQUIRE(knee_point({point(1e-3, 0.9)}).accuracy == 0.9);
  }
  SECTION("two points tie on chord distance, higher accuracy wins") {
    const ParetoPoint k = knee_point({point(1e-3, 0.8), point(2e-3, 0.9)});
    REQUIRE(k.accuracy == 0.9);
  }
  SECTION("elbow front picks the bend") {
    const ParetoPoint k = knee_point({point(0.1, 0.5), point(0.2, 0.9), point(1.0, 0.95)});
    REQUIRE(k.energy_j == 0.2);
    REQUIRE(k.accuracy == 0.9);
  }
}

TEST_CASE("search driver produces a front and knee on a one-candidate space") {
  GeneratorParams gp;
  gp.feature_dim = 16;
  gp.num_classes = 3;
  DatasetBundle bundle = generate_synthetic(gp, 13, 40, 20, 0);
  TrainTask task = make_train_task(bundle);

  SearchSpace space;
  space.depths = {2};
  space.widths = {64};
  space.time_steps = {8};
  space.decay_modes = {DecayMode::kFixed};
  space.connectivities = {Connectivity::kSparse50};
  space.skips = {SkipPattern::kNone};
  space.input_dim = 16;
  space.num_classes = 3;

  ConstraintSet constraints;
  constraints.e_max_j = 1.0;
  constraints.m_max_bytes = 512 * 1024;
  ProxyEvalConfig cfg;
  cfg.epochs = 3;
  cfg.global_seed = 2;

  SearchResult result = run_search(enumerate_space(space), constraints, task, cfg, 0.25, 2);
  REQUIRE(result.feasible.size() == 1);
  REQUIRE(result.points.size() == 1);
  REQUIRE(result.front.size() == 1);
  REQUIRE(result.knee.has_value());
  REQUIRE(result.knee->energy_j == result.front[0].energy_j);
}
