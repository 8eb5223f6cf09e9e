#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include <edgespike/dataset.hpp>
#include <edgespike/model_io.hpp>

using namespace edgespike;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("noise-free generation repeats the class template") {
  GeneratorParams gp;
  gp.noise_sigma = 0.0;
  gp.jitter_sigma = 0.0;
  DatasetBundle bundle = generate_synthetic(gp, 3, 10, 0, 0);
  std::vector<const FeatureSample*> by_class[8];
  for (const FeatureSample& s : bundle.train.samples)
    by_class[s.label].push_back(&s);
  for (int cls = 0; cls < gp.num_classes; ++cls) {
    REQUIRE(by_class[cls].size() == 10);
    for (const FeatureSample* s : by_class[cls])
      REQUIRE(s->features == by_class[cls][0]->features);
  }
}

TEST_CASE("generation is seed-deterministic") {
  GeneratorParams gp;
  DatasetBundle a = generate_synthetic(gp, 77, 10, 5, 5);
  DatasetBundle b = generate_synthetic(gp, 77, 10, 5, 5);
  REQUIRE(a.train.samples.size() == b.train.samples.size());
  for (std::size_t i = 0; i < a.train.samples.size(); ++i) {
    REQUIRE(a.train.samples[i].label == b.train.samples[i].label);
    REQUIRE(a.train.samples[i].features == b.train.samples[i].features);
  }
  DatasetBundle c = generate_synthetic(gp, 78, 10, 5, 5);
  REQUIRE(a.train.samples[0].features != c.train.samples[0].features);
}

TEST_CASE("splits are balanced and label-interleaved") {
  GeneratorParams gp;
  DatasetBundle bundle = generate_synthetic(gp, 4, 12, 6, 6);
  std::vector<int> counts(static_cast<std::size_t>(gp.num_classes), 0);
  for (const FeatureSample& s : bundle.train.samples) ++counts[static_cast<std::size_t>(s.label)];
  for (int c : counts) REQUIRE(c == 12);
  for (std::size_t i = 0; i < bundle.train.samples.size(); ++i)
    REQUIRE(bundle.train.samples[i].label == static_cast<int>(i % gp.num_classes));
}

TEST_CASE("multinomial logistic regression separates the raw features") {
  // Separability sanity check on flattened features at the default noise.
  GeneratorParams gp;
  gp.noise_sigma = 0.1;
  DatasetBundle bundle = generate_synthetic(gp, 9, 60, 30, 0);
  const int dim = gp.feature_dim * gp.seq_len;
  const int C = gp.num_classes;

  auto flatten = [&](const FeatureSample& s) {
    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(dim));
    for (const auto& row : s.features) x.insert(x.end(), row.begin(), row.end());
    return x;
  };

  std::vector<double> w(static_cast<std::size_t>(C) * dim, 0.0), b(static_cast<std::size_t>(C), 0.0);
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
    for (const FeatureSample& s : bundle.train.samples) {
      const std::vector<double> x = flatten(s);
      std::vector<double> logits(static_cast<std::size_t>(C), 0.0);
      for (int c = 0; c < C; ++c) {
        for (int j = 0; j < dim; ++j) logits[c] += w[static_cast<std::size_t>(c) * dim + j] * x[j];
        logits[c] += b[c];
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& v : logits) z += (v = std::exp(v - mx));
      for (int c = 0; c < C; ++c) {
        const double err = logits[c] / z - (c == s.label ? 1.0 : 0.0);
        gb[c] += err;
        for (int j = 0; j < dim; ++j) gw[static_cast<std::size_t>(c) * dim + j] += err * x[j];
      }
    }
    const double lr = 0.05 / static_cast<double>(bundle.train.samples.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
  }

  int correct = 0;
  for (const FeatureSample& s : bundle.val.samples) {
    const std::vector<double> x = flatten(s);
    int best = 0;
    double best_v = -1e300;
    for (int c = 0; c < C; ++c) {
      double v = b[c];
      for (int j = 0; j < dim; ++j) v += w[static_cast<std::size_t>(c) * dim + j] * x[j];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    if (best == s.label) ++correct;
  }
  REQUIRE(static_cast<double>(correct) / bundle.val.samples.size() >= 0.95);
}

TEST_CASE("dataset files round trip byte-identically") {
  GeneratorParams gp;
  DatasetBundle bundle = generate_synthetic(gp, 123, 8, 4, 4);
  const fs::path dir = temp_dir("edgespike-ds-test");
  write_dataset(dir, "unit", bundle);

  // Identical regeneration writes identical bytes.
  const fs::path dir2 = temp_dir("edgespike-ds-test2");
  write_dataset(dir2, "unit", generate_synthetic(gp, 123, 8, 4, 4));
  for (const char* f : {"train.f32", "train.labels.u32", "val.f32", "test.f32", "manifest.json"}) {
    std::ifstream a(dir / f, std::ios::binary), b(dir2 / f, std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::vector<char> bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    REQUIRE(ba == bb);
  }

  DatasetBundle loaded = read_dataset(dir);
  REQUIRE(loaded.train.samples.size() == bundle.train.samples.size());
  for (std::size_t i = 0; i < bundle.train.samples.size(); ++i) {
    REQUIRE(loaded.train.samples[i].label == bundle.train.samples[i].label);
    for (std::size_t t = 0; t < bundle.train.samples[i].features.size(); ++t)
      for (std::size_t c = 0; c < bundle.train.samples[i].features[t].size(); ++c)
        REQUIRE(static_cast<float>(loaded.train.samples[i].features[t][c]) ==
                static_cast<float>(bundle.train.samples[i].features[t][c]));
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("model container round trips bit-identically") {
  ArchDescriptor desc = make_descriptor(2, 64, 8, DecayMode::kFixed, Connectivity::kSparse50,
                                        SkipPattern::kNone, 24, 4);
  NetworkParams net = build_network(desc, 99);
  ModelContainer c = make_container(net, 99, 0xabcdef);
  const fs::path path = fs::temp_directory_path() / "edgespike-model-test.espk";
  save_model(path, c);
  ModelContainer d = load_model(path);
  REQUIRE(d.descriptor == c.descriptor);
  REQUIRE(d.seed == c.seed);
  REQUIRE(d.config_hash == c.config_hash);
  for (std::size_t l = 0; l < c.net.layers.size(); ++l) {
    REQUIRE(d.net.layers[l].weights == c.net.layers[l].weights);
    REQUIRE(d.net.layers[l].mask == c.net.layers[l].mask);
    REQUIRE(d.net.layers[l].beta == c.net.layers[l].beta);
    REQUIRE(d.fixed.layers[l].dense == c.fixed.layers[l].dense);
    REQUIRE(d.fixed.layers[l].scale == c.fixed.layers[l].scale);
    REQUIRE(d.fixed.layers[l].beta_q == c.fixed.layers[l].beta_q);
    REQUIRE(d.fixed.layers[l].theta_q == c.fixed.layers[l].theta_q);
    REQUIRE(d.fixed.layers[l].nnz == c.fixed.layers[l].nnz);
  }
  fs::remove(path);
}

TEST_CASE("corrupted model files are rejected") {
  ArchDescriptor desc = make_descriptor(2, 64, 8, DecayMode::kFixed, Connectivity::kDense,
                                        SkipPattern::kNone, 16, 3);
  ModelContainer c = make_container(build_network(desc, 1), 1, 2);
  const fs::path path = fs::temp_directory_path() / "edgespike-model-corrupt.espk";
  save_model(path, c);

  auto bytes = [&] {
    std::ifstream is(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  }();

  SECTION("truncation fails the checksum, nothing partial is returned") {
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    os.close();
    REQUIRE_THROWS_AS(load_model(path), IoError);
  }
  SECTION("flipped payload byte fails the checksum") {
    bytes[bytes.size() / 2] ^= 0x40;
    std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE_THROWS_WITH(load_model(path), Catch::Matchers::ContainsSubstring("checksum"));
  }
  SECTION("version mismatch names expected and found") {
    bytes[4] = 9;  // version field
    std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE_THROWS_WITH(load_model(path), Catch::Matchers::ContainsSubstring("expected 1") &&
                                              Catch::Matchers::ContainsSubstring("found 9"));
  }
  SECTION("wrong magic is reported as not a model file") {
    bytes[0] = 'X';
    std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE_THROWS_WITH(load_model(path), Catch::Matchers::ContainsSubstring("not a model file"));
  }
  fs::remove(path);
}
