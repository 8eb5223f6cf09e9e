#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgespike/common.hpp"
#include "edgespike/encoders.hpp"
#include "edgespike/rng.hpp"
#include "edgespike/train.hpp"

namespace edgespike {

struct GeneratorParams {
  int num_classes = 4;
  int feature_dim = 24;
  int seq_len = 8;
  int templates_per_class = 1;
  double jitter_sigma = 0.5;  // circular time-shift stddev (steps)
  double noise_sigma = 0.1;
  double low_level = 0.15;   // template "off" value
  double high_level = 0.85;  // template "on" value

  void validate() const {
    if (num_classes < 2 || feature_dim < 1 || seq_len < 1 || templates_per_class < 1)
      throw ValidationError("generator params out of range");
    if (jitter_sigma < 0.0 || noise_sigma < 0.0)
      throw ValidationError("generator sigmas must be non-negative");
  }
};

struct FeatureSample {
  std::vector<std::vector<double>> features;  // seq_len x feature_dim
  int label = 0;
};

struct DatasetSplit {
  std::vector<FeatureSample> samples;
};

struct DatasetBundle {
  GeneratorParams params;
  DatasetSplit train, val, test;
};

namespace detail {

// One class template: seq_len x feature_dim level values.
using ClassTemplate = std::vector<std::vector<double>>;
using TemplateBank = std::vector<std::vector<ClassTemplate>>;  // [class][template]

inline FeatureSample draw_sample(const TemplateBank& templates,
                                 int cls, const GeneratorParams& p, Rng& rng) {
  const auto& class_templates = templates[static_cast<std::size_t>(cls)];
  const auto& tpl = class_templates[static_cast<std::size_t>(
      rng.uniform_index(class_templates.size()))];
  const int shift_raw = static_cast<int>(std::llround(rng.normal(0.0, p.jitter_sigma)));
  const int shift = ((shift_raw % p.seq_len) + p.seq_len) % p.seq_len;

  FeatureSample s;
  s.label = cls;
  s.features.resize(static_cast<std::size_t>(p.seq_len));
  for (int t = 0; t < p.seq_len; ++t) {
    const int src = (t + shift) % p.seq_len;
    auto& row = s.features[static_cast<std::size_t>(t)];
    row.resize(static_cast<std::size_t>(p.feature_dim));
    for (int c = 0; c < p.feature_dim; ++c)
      row[static_cast<std::size_t>(c)] =
          tpl[static_cast<std::size_t>(src)][static_cast<std::size_t>(c)] + rng.normal(0.0, p.noise_sigma);
  }
  return s;
}

inline DatasetSplit draw_split(const TemplateBank& templates,
                               int per_class, const GeneratorParams& p, Rng& rng) {
  DatasetSplit split;
  // Balanced and label-interleaved; deterministic given the stream.
  for (int i = 0; i < per_class; ++i)
    for (int cls = 0; cls < p.num_classes; ++cls)
      split.samples.push_back(draw_sample(templates, cls, p, rng));
  return split;
}

}  // namespace detail

// Synthetic classification task: one or more fixed random binary-valued
// temporal templates per class; samples are circularly time-shifted,
// noise-corrupted template copies.  Fully determined by the seed.
inline DatasetBundle generate_synthetic(const GeneratorParams& params, std::uint64_t seed,
                                        int train_per_class = 150, int val_per_class = 50,
                                        int test_per_class = 50) {
  params.validate();
  Rng tpl_rng = Rng::substream(seed, "templates");
  detail::TemplateBank templates(static_cast<std::size_t>(params.num_classes));
  for (int cls = 0; cls < params.num_classes; ++cls) {
    auto& per_class = templates[static_cast<std::size_t>(cls)];
    per_class.resize(static_cast<std::size_t>(params.templates_per_class));
    for (auto& tpl : per_class) {
      tpl.resize(static_cast<std::size_t>(params.seq_len));
      for (auto& row : tpl) {
        row.resize(static_cast<std::size_t>(params.feature_dim));
        for (auto& v : row)
          v = tpl_rng.uniform() < 0.5 ? params.low_level : params.high_level;
      }
    }
  }

  DatasetBundle bundle;
  bundle.params = params;
  Rng train_rng = Rng::substream(seed, "split-train");
  Rng val_rng = Rng::substream(seed, "split-val");
  Rng test_rng = Rng::substream(seed, "split-test");
  bundle.train = detail::draw_split(templates, train_per_class, params, train_rng);
  bundle.val = detail::draw_split(templates, val_per_class, params, val_rng);
  bundle.test = detail::draw_split(templates, test_per_class, params, test_rng);
  return bundle;
}

// Threshold-crossing encoding of a whole split into labeled rasters.
inline std::vector<LabeledRaster> encode_split(const DatasetSplit& split, double threshold = 0.5) {
  std::vector<LabeledRaster> out;
  out.reserve(split.samples.size());
  for (const FeatureSample& s : split.samples) {
    std::vector<double> thresholds(s.features.front().size(), threshold);
    out.push_back({threshold_encode(s.features, thresholds), s.label});
  }
  return out;
}

inline TrainTask make_train_task(const DatasetBundle& bundle, double threshold = 0.5) {
  TrainTask task;
  task.train = encode_split(bundle.train, threshold);
  task.val = encode_split(bundle.val, threshold);
  return task;
}

// --- Binary feature files: little-endian f32, row-major (sample, time,
// --- channel), labels as little-endian u32, sidecar JSON manifest.

struct DatasetManifest {
  std::string name;
  int feature_dim = 0;
  int num_classes = 0;
  int seq_len = 0;
  std::string format = "binary-f32";
  std::vector<std::string> split_names;
  std::vector<int> split_counts;
  GeneratorParams generator;
};

namespace detail {

inline void write_le_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_le_u32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_le_f32(std::ofstream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  write_le_u32(os, u);
}

inline float read_le_f32(std::ifstream& is) {
  const std::uint32_t u = read_le_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace detail

inline void write_split(const std::filesystem::path& dir, const std::string& split_name,
                        const DatasetSplit& split) {
  std::ofstream feat(dir / (split_name + ".f32"), std::ios::binary);
  std::ofstream lab(dir / (split_name + ".labels.u32"), std::ios::binary);
  if (!feat || !lab) throw IoError("cannot open dataset output files in " + dir.string());
  for (const FeatureSample& s : split.samples) {
    for (const auto& row : s.features)
      for (double v : row) detail::write_le_f32(feat, static_cast<float>(v));
    detail::write_le_u32(lab, static_cast<std::uint32_t>(s.label));
  }
}

inline void write_dataset(const std::filesystem::path& dir, const std::string& name,
                          const DatasetBundle& bundle) {
  std::filesystem::create_directories(dir);
  write_split(dir, "train", bundle.train);
  write_split(dir, "val", bundle.val);
  write_split(dir, "test", bundle.test);

  nlohmann::json j;
  j["name"] = name;
  j["feature_dim"] = bundle.params.feature_dim;
  j["num_classes"] = bundle.params.num_classes;
  j["seq_len"] = bundle.params.seq_len;
  j["format"] = "binary-f32";
  j["splits"] = {{"train", bundle.train.samples.size()},
                 {"val", bundle.val.samples.size()},
                 {"test", bundle.test.samples.size()}};
  j["generator"] = {{"templates_per_class", bundle.params.templates_per_class},
                    {"jitter_sigma", bundle.params.jitter_sigma},
                    {"noise_sigma", bundle.params.noise_sigma},
                    {"low_level", bundle.params.low_level},
                    {"high_level", bundle.params.high_level}};
  std::ofstream mf(dir / "manifest.json");
  mf << j.dump(2) << "\n";
}

inline DatasetSplit read_split(const std::filesystem::path& dir, const std::string& split_name,
                               int count, int seq_len, int feature_dim) {
  std::ifstream feat(dir / (split_name + ".f32"), std::ios::binary);
  std::ifstream lab(dir / (split_name + ".labels.u32"), std::ios::binary);
  if (!feat || !lab) throw IoError("cannot open dataset files for split " + split_name);
  DatasetSplit split;
  split.samples.resize(static_cast<std::size_t>(count));
  for (FeatureSample& s : split.samples) {
    s.features.resize(static_cast<std::size_t>(seq_len));
    for (auto& row : s.features) {
      row.resize(static_cast<std::size_t>(feature_dim));
      for (double& v : row) v = detail::read_le_f32(feat);
    }
    s.label = static_cast<int>(detail::read_le_u32(lab));
  }
  return split;
}

inline DatasetBundle read_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("cannot open manifest.json in " + dir.string());
  nlohmann::json j;
  mf >> j;
  DatasetBundle bundle;
  bundle.params.feature_dim = j.at("feature_dim").get<int>();
  bundle.params.num_classes = j.at("num_classes").get<int>();
  bundle.params.seq_len = j.at("seq_len").get<int>();
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    bundle.params.templates_per_class = g.value("templates_per_class", 1);
    bundle.params.jitter_sigma = g.value("jitter_sigma", 0.0);
    bundle.params.noise_sigma = g.value("noise_sigma", 0.0);
    bundle.params.low_level = g.value("low_level", 0.15);
    bundle.params.high_level = g.value("high_level", 0.85);
  }
  const auto& splits = j.at("splits");
  bundle.train = read_split(dir, "train", splits.at("train").get<int>(), bundle.params.seq_len,
                            bundle.params.feature_dim);
  bundle.val = read_split(dir, "val", splits.at("val").get<int>(), bundle.params.seq_len,
                          bundle.params.feature_dim);
  bundle.test = read_split(dir, "test", splits.at("test").get<int>(), bundle.params.seq_len,
                           bundle.params.feature_dim);
  return bundle;
}

}  // namespace edgespike
