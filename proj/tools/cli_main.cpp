#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <edgespike/dataset.hpp>
#include <edgespike/fieldsim.hpp>
#include <edgespike/model_io.hpp>
#include <edgespike/nas.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace edgespike;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string profile = "loihi2";
};

// Flat JSON config files; dotted keys address subcommand options.
struct JsonConfig : CLI::Config {
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string prefix) const override {
    json j;
    for (const CLI::Option* opt : app->get_options()) {
      if (!opt->get_configurable()) continue;
      const std::string name = prefix + opt->get_single_name();
      if (!opt->results().empty())
        j[name] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
      else if (default_also)
        j[name] = opt->get_default_str();
    }
    std::string out = j.dump(2) + "\n";
    for (const CLI::App* sub : app->get_subcommands({}))
      out += to_config(sub, default_also, false, prefix + sub->get_name() + ".");
    return out;
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    const json j = json::parse(input);
    if (!j.is_object()) throw CLI::FileError("config root must be a JSON object");
    std::vector<CLI::ConfigItem> out;
    for (const auto& [key, val] : j.items()) {
      CLI::ConfigItem item;
      std::string tail = key;
      for (std::size_t dot = tail.find('.'); dot != std::string::npos; dot = tail.find('.')) {
        item.parents.push_back(tail.substr(0, dot));
        tail.erase(0, dot + 1);
      }
      item.name = tail;
      if (val.is_array())
        for (const auto& v : val) item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      else
        item.inputs.push_back(val.is_string() ? val.get<std::string>() : val.dump());
      out.push_back(std::move(item));
    }
    return out;
  }
};

json descriptor_json(const ArchDescriptor& d) {
  return json{{"depth", d.depth},
              {"widths", d.widths},
              {"time_steps", d.time_steps},
              {"decay_mode", to_string(d.decay_mode)},
              {"connectivity", to_string(d.connectivity)},
              {"skip", to_string(d.skip)},
              {"input_dim", d.input_dim},
              {"num_classes", d.num_classes}};
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "epoch,loss_total,loss_ce,loss_activity,loss_l2,val_accuracy,mean_rho,lr,k\n";
  for (const EpochRecord& e : history)
    os << e.epoch << ',' << e.loss_total << ',' << e.loss_ce << ',' << e.loss_activity << ','
       << e.loss_l2 << ',' << e.val_accuracy << ',' << e.mean_rho << ',' << e.lr << ',' << e.k
       << '\n';
}

int cmd_gen(const GlobalOpts& g, const GeneratorParams& params, int train_n, int val_n, int test_n,
            const std::string& name) {
  DatasetBundle bundle = generate_synthetic(params, g.seed, train_n, val_n, test_n);
  const fs::path dir = fs::path(g.out);
  write_dataset(dir, name, bundle);
  std::printf("wrote dataset '%s' to %s (train=%zu val=%zu test=%zu)\n", name.c_str(),
              dir.string().c_str(), bundle.train.samples.size(), bundle.val.samples.size(),
              bundle.test.samples.size());
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& data_dir, const ArchDescriptor& desc,
              TrainConfig config, double threshold) {
  DatasetBundle bundle = read_dataset(data_dir);
  TrainTask task = make_train_task(bundle, threshold);
  config.seed = g.seed;
  TrainResult result = train_model(task, desc, config);

  const fs::path dir = fs::path(g.out);
  fs::create_directories(dir);
  save_model(dir / "model.espk", make_container(result.net, g.seed, desc.hash()));
  write_history_csv(dir / "history.csv", result.history);
  std::printf("trained %s: final val accuracy %.4f, model + history written to %s\n",
              desc.label().c_str(), result.history.back().val_accuracy, dir.string().c_str());
  return 0;
}

int cmd_infer(const GlobalOpts& g, const std::string& model_path, const std::string& data_dir,
              const std::string& split, int index, double threshold) {
  ModelContainer model = load_model(model_path);
  DatasetBundle bundle = read_dataset(data_dir);
  const DatasetSplit& s = split == "train" ? bundle.train : split == "val" ? bundle.val : bundle.test;
  if (index < 0 || index >= static_cast<int>(s.samples.size()))
    throw ValidationError("sample index out of range for split " + split);
  const FeatureSample& sample = s.samples[static_cast<std::size_t>(index)];
  std::vector<double> thresholds(sample.features.front().size(), threshold);
  const SpikeRaster raster = threshold_encode(sample.features, thresholds);
  const FixedInferenceResult res = infer_sparse(model.fixed, raster);

  const HardwareProfile profile = profile_by_name(g.profile);
  const double joules = energy_from_counter(res.counter, profile);
  json out{{"prediction", res.prediction},
           {"label", sample.label},
           {"class_counts", res.class_counts},
           {"ops",
            {{"ac_count", res.counter.ac_count},
             {"neuron_updates", res.counter.neuron_updates},
             {"dense_equivalent_macs", res.counter.dense_equivalent_macs},
             {"ac_per_layer", res.counter.ac_per_layer}}},
           {"profile", profile.name},
           {"energy_j", joules},
           {"energy_mwh", joules / kJoulePerMilliwattHour}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_energy(double inferences_per_day, double e_inf_j, double lora_tx_j, double tx_per_day,
               double iq_ua, double volts, double capacity_wh, bool use_components,
               double comp_mwh, double radio_mwh, double idle_mwh) {
  DailyEnergy daily;
  if (use_components) {
    daily = daily_energy_components(comp_mwh, radio_mwh, idle_mwh);
  } else {
    BudgetParams b;
    b.inferences_per_day = inferences_per_day;
    b.energy_per_inference_j = e_inf_j;
    b.lora_tx_j = lora_tx_j;
    b.transmissions_per_day = tx_per_day;
    b.quiescent_current_a = iq_ua * 1e-6;
    b.supply_volts = volts;
    daily = daily_energy(b);
  }
  std::printf("compute: %.3f mWh/day (%.3f J)\n", daily.compute_mwh,
              daily.compute_mwh * kJoulePerMilliwattHour);
  std::printf("radio:   %.3f mWh/day (%.3f J)\n", daily.radio_mwh,
              daily.radio_mwh * kJoulePerMilliwattHour);
  std::printf("idle:    %.3f mWh/day (%.3f J)\n", daily.idle_mwh,
              daily.idle_mwh * kJoulePerMilliwattHour);
  std::printf("total:   %.3f mWh/day (%.3f J)\n", daily.total_mwh,
              daily.total_mwh * kJoulePerMilliwattHour);
  std::printf("lifetime at %.2f Wh: %.0f days\n", capacity_wh,
              lifetime_days(capacity_wh, daily.total_mwh));
  return 0;
}

int cmd_search(const GlobalOpts& g, const std::string& data_dir, const SearchSpace& space,
               const ConstraintSet& constraints, int proxy_epochs, int workers, double threshold) {
  DatasetBundle bundle = read_dataset(data_dir);
  TrainTask task = make_train_task(bundle, threshold);

  SearchSpace sp = space;
  sp.input_dim = bundle.params.feature_dim;
  sp.num_classes = bundle.params.num_classes;

  ProxyEvalConfig cfg;
  cfg.epochs = proxy_epochs;
  cfg.global_seed = g.seed;
  cfg.profile = profile_by_name(g.profile);
  SearchResult result = run_search(enumerate_space(sp), constraints, task, cfg, 0.25, workers);

  const fs::path dir = fs::path(g.out);
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "candidates.csv");
    os << "depth,width,time_steps,decay_mode,connectivity,skip,accuracy,energy_j,footprint_bytes,"
          "feasible\n";
    for (const ParetoPoint& p : result.points) {
      const ArchDescriptor& d = p.descriptor;
      os << d.depth << ',' << d.widths.front() << ',' << d.time_steps << ','
         << to_string(d.decay_mode) << ',' << to_string(d.connectivity) << ','
         << to_string(d.skip) << ',' << p.accuracy << ',' << p.energy_j << ','
         << p.footprint_bytes << ',' << (p.failed ? 0 : 1) << '\n';
    }
  }
  json front = json::array();
  for (const ParetoPoint& p : result.front)
    front.push_back(json{{"descriptor", descriptor_json(p.descriptor)},
                         {"accuracy", p.accuracy},
                         {"energy_j", p.energy_j},
                         {"footprint_bytes", p.footprint_bytes}});
  json out{{"front", front}};
  if (result.knee)
    out["knee"] = json{{"descriptor", descriptor_json(result.knee->descriptor)},
                       {"accuracy", result.knee->accuracy},
                       {"energy_j", result.knee->energy_j}};
  std::ofstream(dir / "front.json") << out.dump(2) << "\n";
  std::printf("search: %zu candidates, %zu feasible, front size %zu, outputs in %s\n",
              result.points.size() + 0, result.feasible.size(), result.front.size(),
              dir.string().c_str());
  if (result.knee)
    std::printf("knee: %s (accuracy %.4f, %.4e J)\n", result.knee->descriptor.label().c_str(),
                result.knee->accuracy, result.knee->energy_j);
  return 0;
}

int cmd_fieldsim(const GlobalOpts& g, const std::string& model_path, const std::string& data_dir,
                 FieldsimConfig cfg, double threshold) {
  ModelContainer model = load_model(model_path);
  DatasetBundle bundle = read_dataset(data_dir);
  cfg.seed = g.seed;
  cfg.encode_threshold = threshold;
  cfg.profile = profile_by_name(g.profile);
  DeploymentResult result = simulate_deployment(model.net, bundle.test.samples, cfg);

  const fs::path dir = fs::path(g.out);
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "telemetry.csv");
    os << "node,month,frozen_accuracy,adaptive_accuracy,frozen_rho,adaptive_rho,"
          "energy_per_inference_j,daily_energy_mwh,triggers\n";
    for (const NodeMonthTelemetry& t : result.telemetry)
      os << t.node << ',' << t.month << ',' << t.frozen_accuracy << ',' << t.adaptive_accuracy
         << ',' << t.frozen_rho << ',' << t.adaptive_rho << ',' << t.energy_per_inference_j << ','
         << t.daily_energy_mwh << ',' << t.triggers << '\n';
  }
  std::printf("fieldsim: baseline %.4f, final frozen %.4f, final adaptive %.4f, recovery %.3f\n",
              result.baseline_accuracy, result.final_frozen_accuracy,
              result.final_adaptive_accuracy, result.recovery);
  std::printf("telemetry written to %s\n", (dir / "telemetry.csv").string().c_str());
  return 0;
}

int cmd_bench(const GlobalOpts& g, int nets, int rasters_per_net) {
  Rng rng = Rng::substream(g.seed, "bench");
  std::printf("%-44s %10s %12s %10s %10s\n", "descriptor", "input_rho", "ac_count", "macs",
              "reduction");
  for (int n = 0; n < nets; ++n) {
    const int depths[] = {2, 3};
    const int widths[] = {64, 128};
    const Connectivity conns[] = {Connectivity::kDense, Connectivity::kSparse50,
                                  Connectivity::kSparse25};
    ArchDescriptor desc = make_descriptor(depths[rng.uniform_index(2)], widths[rng.uniform_index(2)],
                                          8, DecayMode::kFixed, conns[rng.uniform_index(3)],
                                          SkipPattern::kNone, 32, 4);
    NetworkParams net = build_network(desc, rng.next_u64());
    FixedNetwork fx = quantize_weights(net);
    std::uint64_t ac = 0, macs = 0;
    double in_rho = 0.0;
    for (int r = 0; r < rasters_per_net; ++r) {
      SpikeRaster raster(desc.time_steps, desc.input_dim);
      for (auto& b : raster.data) b = rng.uniform() < 0.2 ? 1 : 0;
      FixedInferenceResult res = infer_sparse(fx, raster);
      ac += res.counter.ac_count;
      macs += res.counter.dense_equivalent_macs;
      in_rho += res.input_rates.front();
    }
    in_rho /= rasters_per_net;
    std::printf("%-44s %10.4f %12llu %10llu %9.1f%%\n", desc.label().c_str(), in_rho,
                static_cast<unsigned long long>(ac), static_cast<unsigned long long>(macs),
                100.0 * (1.0 - static_cast<double>(ac) / static_cast<double>(macs)));
  }
  std::printf("\nreduction curve (dense/sparse energy ratio):\n");
  for (double rho : {0.0, 5.0, 10.0, 16.8, 25.0, 36.1, 50.0})
    std::printf("  rho=%5.1f%%  ratio=%.3f\n", rho, cortexm_reduction_curve(rho));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edgespike: spiking-network training, search, and deployment toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat JSON config file");
  app.config_formatter(std::make_shared<JsonConfig>());

  GlobalOpts g;
  app.add_option("--seed", g.seed, "global RNG seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--profile", g.profile, "hardware profile (loihi2, spinnaker2, cortex-m4-rle)");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  GeneratorParams gp;
  int train_n = 150, val_n = 50, test_n = 50;
  std::string ds_name = "synthetic";
  gen->add_option("--classes", gp.num_classes);
  gen->add_option("--features", gp.feature_dim);
  gen->add_option("--steps", gp.seq_len);
  gen->add_option("--templates", gp.templates_per_class);
  gen->add_option("--jitter", gp.jitter_sigma);
  gen->add_option("--noise", gp.noise_sigma);
  gen->add_option("--train-per-class", train_n);
  gen->add_option("--val-per-class", val_n);
  gen->add_option("--test-per-class", test_n);
  gen->add_option("--name", ds_name);

  // shared descriptor options
  auto add_descriptor_opts = [](CLI::App* cmd, int& depth, int& width, int& steps,
                                std::string& decay, std::string& conn, std::string& skip) {
    cmd->add_option("--depth", depth);
    cmd->add_option("--width", width);
    cmd->add_option("--time-steps", steps);
    cmd->add_option("--decay", decay, "fixed | learnable-shared | learnable-per-layer");
    cmd->add_option("--connectivity", conn, "dense | sparse50 | sparse25");
    cmd->add_option("--skip", skip, "none | residual | dense-connect");
  };

  // train
  auto* train = app.add_subcommand("train", "train a model on a dataset");
  std::string train_data;
  int d_depth = 2, d_width = 64, d_steps = 8;
  std::string d_decay = "fixed", d_conn = "dense", d_skip = "none";
  TrainConfig tc;
  double threshold = 0.5;
  train->add_option("--data", train_data, "dataset directory")->required();
  add_descriptor_opts(train, d_depth, d_width, d_steps, d_decay, d_conn, d_skip);
  train->add_option("--epochs", tc.epochs);
  train->add_option("--batch", tc.batch_size);
  train->add_option("--lambda-r", tc.lambda_r);
  train->add_option("--lambda-w", tc.lambda_w);
  train->add_option("--eta0", tc.eta0);
  train->add_option("--eta-min", tc.eta_min);
  train->add_flag("--bntt,!--no-bntt", tc.bntt_enabled, "per-time-step normalisation");
  train->add_option("--threshold", threshold, "encoder threshold");

  // infer
  auto* infer = app.add_subcommand("infer", "run one fixed-point inference");
  std::string infer_model, infer_data, infer_split = "test";
  int infer_index = 0;
  infer->add_option("--model", infer_model)->required();
  infer->add_option("--data", infer_data)->required();
  infer->add_option("--split", infer_split, "train | val | test");
  infer->add_option("--index", infer_index);
  infer->add_option("--threshold", threshold);

  // search
  auto* search = app.add_subcommand("search", "architecture search");
  std::string search_data;
  std::vector<int> s_depths{2, 3}, s_widths{64, 128}, s_steps{4, 8};
  std::vector<std::string> s_decays{"fixed"}, s_conns{"dense", "sparse50"}, s_skips{"none"};
  double e_max = 1.0;
  std::uint64_t m_max = 512 * 1024;
  int proxy_epochs = 10, workers = 0;
  search->add_option("--data", search_data)->required();
  search->add_option("--depths", s_depths);
  search->add_option("--widths", s_widths);
  search->add_option("--steps", s_steps);
  search->add_option("--decays", s_decays);
  search->add_option("--connectivities", s_conns);
  search->add_option("--skips", s_skips);
  search->add_option("--e-max", e_max, "energy bound, joules per inference");
  search->add_option("--m-max", m_max, "memory bound, bytes");
  search->add_option("--proxy-epochs", proxy_epochs);
  search->add_option("--workers", workers);
  search->add_option("--threshold", threshold);

  // energy
  auto* energy = app.add_subcommand("energy", "daily energy budget and lifetime");
  double inf_per_day = 196.8, e_inf_j = 0.0116, lora_j = 1.45, tx_per_day = 0.3;
  double iq_ua = 11.15, volts = 3.3, capacity_wh = 2.0;
  double comp_mwh = 0.0, radio_mwh = 0.0, idle_mwh = 0.0;
  bool use_components = false;
  energy->add_option("--inferences-per-day", inf_per_day);
  energy->add_option("--energy-per-inference", e_inf_j, "joules");
  energy->add_option("--lora-tx-j", lora_j);
  energy->add_option("--tx-per-day", tx_per_day);
  energy->add_option("--iq-ua", iq_ua, "quiescent current, microamps");
  energy->add_option("--volts", volts);
  energy->add_option("--capacity-wh", capacity_wh);
  energy->add_flag("--components", use_components, "use the three mWh components directly");
  energy->add_option("--compute-mwh", comp_mwh);
  energy->add_option("--radio-mwh", radio_mwh);
  energy->add_option("--idle-mwh", idle_mwh);

  // fieldsim
  auto* field = app.add_subcommand("fieldsim", "deployment drift simulation");
  std::string field_model, field_data;
  FieldsimConfig fc;
  field->add_option("--model", field_model)->required();
  field->add_option("--data", field_data)->required();
  field->add_option("--months", fc.months);
  field->add_option("--nodes", fc.nodes);
  field->add_option("--triggers-per-hour", fc.triggers_per_hour);
  field->add_option("--adapt-per-month", fc.adapt_samples_per_month);
  field->add_option("--eval-samples", fc.eval_samples);
  field->add_option("--gain-loss", fc.drift.gain_loss_per_month);
  field->add_option("--noise-growth", fc.drift.noise_sigma_per_month);
  field->add_option("--threshold-inflation", fc.drift.threshold_inflation_per_month);
  field->add_option("--eta", fc.plasticity.eta);
  field->add_option("--flush-interval", fc.plasticity.flush_interval);
  field->add_option("--threshold", threshold);

  // bench
  auto* bench = app.add_subcommand("bench", "sparse vs dense operation counts");
  int bench_nets = 6, bench_rasters = 20;
  bench->add_option("--nets", bench_nets);
  bench->add_option("--rasters", bench_rasters);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(g, gp, train_n, val_n, test_n, ds_name);
    if (train->parsed()) {
      DatasetBundle probe = read_dataset(train_data);
      ArchDescriptor desc = make_descriptor(d_depth, d_width, d_steps,
                                            decay_mode_from_string(d_decay),
                                            connectivity_from_string(d_conn),
                                            skip_from_string(d_skip), probe.params.feature_dim,
                                            probe.params.num_classes);
      return cmd_train(g, train_data, desc, tc, threshold);
    }
    if (infer->parsed()) return cmd_infer(g, infer_model, infer_data, infer_split, infer_index, threshold);
    if (search->parsed()) {
      SearchSpace sp;
      sp.depths = s_depths;
      sp.widths = s_widths;
      sp.time_steps = s_steps;
      sp.decay_modes.clear();
      for (const auto& s : s_decays) sp.decay_modes.push_back(decay_mode_from_string(s));
      sp.connectivities.clear();
      for (const auto& s : s_conns) sp.connectivities.push_back(connectivity_from_string(s));
      sp.skips.clear();
      for (const auto& s : s_skips) sp.skips.push_back(skip_from_string(s));
      ConstraintSet cons;
      cons.e_max_j = e_max;
      cons.m_max_bytes = m_max;
      return cmd_search(g, search_data, sp, cons, proxy_epochs, workers, threshold);
    }
    if (energy->parsed())
      return cmd_energy(inf_per_day, e_inf_j, lora_j, tx_per_day, iq_ua, volts, capacity_wh,
                        use_components, comp_mwh, radio_mwh, idle_mwh);
    if (field->parsed()) return cmd_fieldsim(g, field_model, field_data, fc, threshold);
    if (bench->parsed()) return cmd_bench(g, bench_nets, bench_rasters);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
