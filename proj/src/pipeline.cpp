#include "tanda/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tanda/asnq.hpp"
#include "tanda/errors.hpp"
#include "tanda/hash.hpp"
#include "tanda/noise.hpp"

namespace tanda {

namespace fs = std::filesystem;
using nlohmann::json;

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    hash = fnv1a64(buf, static_cast<size_t>(in.gcount()), hash);
  }
  return hash;
}

std::string hex64(uint64_t value) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

namespace {

json stats_json(const DatasetStats& stats) {
  return json{{"n_questions", stats.n_questions},
              {"n_pairs", stats.n_pairs},
              {"n_pos", stats.n_pos},
              {"n_neg", stats.n_neg}};
}

json report_json(const MetricReport& report) {
  return json{{"map", report.map},
              {"mrr", report.mrr},
              {"p_at_1", report.p_at_1},
              {"n_questions", report.n_questions},
              {"mode", to_string(report.mode)}};
}

json curve_json(const std::vector<EpochPoint>& curve) {
  json epochs = json::array();
  for (size_t i = 0; i < curve.size(); ++i) {
    epochs.push_back({{"epoch", i + 1},
                      {"map", curve[i].dev_map},
                      {"mrr", curve[i].dev_mrr},
                      {"loss", curve[i].train_loss},
                      {"degenerate", curve[i].degenerate}});
  }
  return epochs;
}

json train_result_json(const TrainResult& result) {
  return json{{"curve", curve_json(result.curve)},
              {"best_epoch", result.best_epoch},
              {"best_dev_map",
               result.curve[static_cast<size_t>(result.best_epoch - 1)].dev_map},
              {"stopped_early", result.stopped_early}};
}

json train_config_json(const TrainConfig& cfg) {
  return json{{"learning_rate", cfg.learning_rate},
              {"max_epochs", cfg.max_epochs},
              {"batch_size", cfg.batch_size},
              {"seed", cfg.seed},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"adam_eps", cfg.adam_eps},
              {"dev_mode", to_string(cfg.dev_mode)},
              {"deterministic", cfg.deterministic},
              {"dropout", cfg.dropout},
              {"patience", cfg.patience},
              {"threads", cfg.threads},
              {"oversample_positives", cfg.oversample_positives}};
}

json model_config_json_node(const ModelConfig& cfg) {
  return json::parse(model_config_to_json(cfg));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

struct Stopwatch {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

}  // namespace

std::string RunManifest::to_json() const {
  json inputs = json::object();
  for (const auto& path : input_paths) {
    inputs[path] = json{{"fnv1a64", hex64(fnv1a64_file(path))},
                        {"bytes", fs::file_size(path)}};
  }
  json j{{"tool_version", kToolVersion},
         {"command", command},
         {"config", json::parse(config_json)},
         {"inputs", inputs},
         {"wall_clock_sec", wall_clock_sec}};
  return j.dump(2);
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  write_text(path, manifest.to_json() + "\n");
}

std::string run_stats(const std::string& data_path, const std::string& mode) {
  const Dataset groups =
      filter_mode(parse_as2_file(data_path), mode_from_string(mode));
  json j = stats_json(dataset_stats(groups));
  j["mode"] = mode;
  return j.dump(2);
}

std::string run_evaluate(const std::string& data_path,
                         const std::string& scores_path,
                         const std::string& mode) {
  Dataset groups = parse_as2_file(data_path);
  attach_scores(groups, parse_scores_file(scores_path));
  return report_json(evaluate(groups, mode_from_string(mode))).dump(2);
}

std::string run_inject_noise(const std::string& in_path,
                             const std::string& out_path, double fraction,
                             uint64_t seed, const std::string& manifest_path) {
  const Dataset groups = parse_as2_file(in_path);
  auto [pairs, manifest] = inject_noise(flatten(groups), fraction, seed);
  write_as2_file(regroup(pairs), out_path);
  if (!manifest_path.empty()) {
    write_text(manifest_path, manifest.to_json() + "\n");
  }
  return json{{"n_total", manifest.n_total},
              {"n_flipped", manifest.flipped_indices.size()},
              {"fraction", manifest.fraction},
              {"seed", manifest.seed},
              {"out", out_path}}
      .dump(2);
}

std::string run_build_asnq(const std::string& in_path,
                           const std::string& out_path, bool lenient,
                           bool case_insensitive,
                           const std::string& stats_out) {
  AsnqBuildConfig cfg;
  cfg.lenient = lenient;
  cfg.case_insensitive_match = case_insensitive;
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot open " + out_path + " for writing");
  const AsnqBuildStats stats = build_asnq(in_path, out, cfg);
  out.close();
  const std::string stats_text = stats.to_json();
  if (!stats_out.empty()) write_text(stats_out, stats_text + "\n");
  return stats_text;
}

std::string run_binarize(const std::string& in_path, const std::string& out_path,
                         const std::vector<int>& negatives) {
  std::ifstream in(in_path, std::ios::binary);
  if (!in) throw DataError("cannot open " + in_path);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot open " + out_path + " for writing");
  binarize(in, out, std::set<int>(negatives.begin(), negatives.end()));
  out.close();
  const DatasetStats stats = dataset_stats(parse_as2_file(out_path));
  json j = stats_json(stats);
  j["out"] = out_path;
  return j.dump(2);
}

std::string run_synth(const std::string& out_dir, const SynthConfig& cfg) {
  Stopwatch watch;
  ensure_dir(out_dir);
  const SynthData data = generate(cfg);
  const auto path = [&](const char* name) {
    return (fs::path(out_dir) / name).string();
  };
  write_as2_file(data.transfer.train, path("transfer_train.tsv"));
  write_as2_file(data.transfer.dev, path("transfer_dev.tsv"));
  write_as2_file(data.target_train, path("target_train.tsv"));
  write_as2_file(data.target_dev, path("target_dev.tsv"));
  write_as2_file(data.target_test, path("target_test.tsv"));

  json rules;
  auto rule_json = [](const std::vector<std::pair<std::string, std::string>>& rule) {
    json j = json::object();
    for (const auto& [key, answer] : rule) j[key] = answer;
    return j;
  };
  rules["transfer"] = rule_json(data.transfer_rule);
  rules["target"] = rule_json(data.target_rule);
  write_text(path("rules.json"), rules.dump(2) + "\n");

  json cfg_json{{"n_questions", cfg.n_questions},
                {"candidates_per_question", cfg.candidates_per_question},
                {"vocab_size", cfg.vocab_size},
                {"signal", cfg.signal},
                {"domain_shift", cfg.domain_shift},
                {"noise", cfg.noise},
                {"seed", cfg.seed}};
  json result{{"out_dir", out_dir},
              {"config", cfg_json},
              {"transfer_train", stats_json(dataset_stats(data.transfer.train))},
              {"transfer_dev", stats_json(dataset_stats(data.transfer.dev))},
              {"target_train", stats_json(dataset_stats(data.target_train))},
              {"target_dev", stats_json(dataset_stats(data.target_dev))},
              {"target_test", stats_json(dataset_stats(data.target_test))}};

  RunManifest manifest;
  manifest.command = "synth";
  manifest.config_json = cfg_json.dump();
  manifest.wall_clock_sec = watch.seconds();
  write_manifest(manifest, path("manifest.json"));
  return result.dump(2);
}

void write_curve_csv(const std::vector<EpochPoint>& curve,
                     const std::string& path) {
  std::ostringstream out;
  out << "epoch,map,mrr,loss\n";
  for (size_t i = 0; i < curve.size(); ++i) {
    out << (i + 1) << ',' << curve[i].dev_map << ',' << curve[i].dev_mrr << ','
        << curve[i].train_loss << '\n';
  }
  write_text(path, out.str());
}

std::vector<EpochPoint> read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<EpochPoint> curve;
  std::string line;
  bool header = true;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("epoch,", 0) == 0) continue;
    }
    EpochPoint p;
    int epoch;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &epoch, &p.dev_map,
                    &p.dev_mrr, &p.train_loss) != 4) {
      throw DataError(path + " line " + std::to_string(line_no) +
                      ": expected epoch,map,mrr,loss");
    }
    curve.push_back(p);
  }
  return curve;
}

namespace {

Checkpoint make_initial(const std::string& init_checkpoint,
                        const Dataset& vocab_corpus, const ModelConfig& model,
                        uint64_t seed, size_t vocab_min_count,
                        size_t vocab_max_size) {
  if (!init_checkpoint.empty()) return load_checkpoint(init_checkpoint);
  return checkpoint_from_corpus(vocab_corpus, model, seed, vocab_min_count,
                                vocab_max_size);
}

}  // namespace

std::string ft_config_json(const TrainFtOptions& opts) {
  return json{{"model", model_config_json_node(opts.model)},
              {"train", train_config_json(opts.train)},
              {"init_checkpoint", opts.init_checkpoint},
              {"test_mode", opts.test_mode},
              {"vocab",
               {{"min_count", opts.vocab_min_count},
                {"max_size", opts.vocab_max_size}}},
              {"paths",
               {{"train", opts.train_path},
                {"dev", opts.dev_path},
                {"test", opts.test_path}}}}
      .dump(2);
}

std::string tanda_config_json(const TrainTandaOptions& opts) {
  return json{{"model", model_config_json_node(opts.model)},
              {"transfer", train_config_json(opts.transfer)},
              {"adapt", train_config_json(opts.adapt)},
              {"mlm_epochs", opts.mlm_epochs},
              {"mlm_rate", opts.mlm_rate},
              {"init_checkpoint", opts.init_checkpoint},
              {"test_mode", opts.test_mode},
              {"vocab",
               {{"min_count", opts.vocab_min_count},
                {"max_size", opts.vocab_max_size}}},
              {"paths",
               {{"transfer_train", opts.transfer_train_path},
                {"transfer_dev", opts.transfer_dev_path},
                {"target_train", opts.target_train_path},
                {"target_dev", opts.target_dev_path},
                {"test", opts.test_path}}}}
      .dump(2);
}

std::string noise_config_json(const NoiseExpOptions& opts) {
  json fractions = json::array();
  for (double f : opts.experiment.fractions) fractions.push_back(f);
  return json{{"model", model_config_json_node(opts.model)},
              {"ft", train_config_json(opts.experiment.ft)},
              {"adapt", train_config_json(opts.experiment.adapt)},
              {"fractions", fractions},
              {"n_seeds", opts.experiment.n_seeds},
              {"noise_seed_base", opts.experiment.noise_seed_base},
              {"test_mode", to_string(opts.experiment.test_mode)},
              {"base_checkpoint", opts.base_checkpoint},
              {"vocab",
               {{"min_count", opts.vocab_min_count},
                {"max_size", opts.vocab_max_size}}},
              {"paths",
               {{"train", opts.train_path},
                {"dev", opts.dev_path},
                {"test", opts.test_path}}}}
      .dump(2);
}

std::string run_train_ft(const TrainFtOptions& opts) {
  Stopwatch watch;
  ensure_dir(opts.out_dir);
  const Dataset train_data = parse_as2_file(opts.train_path);
  const Dataset dev_data = parse_as2_file(opts.dev_path);

  const Checkpoint init =
      make_initial(opts.init_checkpoint, train_data, opts.model,
                   opts.train.seed, opts.vocab_min_count, opts.vocab_max_size);
  const TrainResult result = train(train_data, dev_data, init, opts.train);

  const auto path = [&](const char* name) {
    return (fs::path(opts.out_dir) / name).string();
  };
  save_checkpoint(result.best, path("model.ckpt"));
  write_curve_csv(result.curve, path("curve.csv"));

  json out{{"result", train_result_json(result)},
           {"checkpoint", path("model.ckpt")},
           {"curve_csv", path("curve.csv")}};
  if (!opts.test_path.empty()) {
    const Dataset test_data = parse_as2_file(opts.test_path);
    out["test"] = report_json(evaluate_checkpoint(
        result.best, test_data, mode_from_string(opts.test_mode),
        opts.train.threads));
  }
  write_text(path("result.json"), out.dump(2) + "\n");

  RunManifest manifest;
  manifest.command = "train-ft";
  TrainFtOptions resolved = opts;
  resolved.model = init.config;
  manifest.config_json = ft_config_json(resolved);
  manifest.input_paths = {opts.train_path, opts.dev_path};
  if (!opts.test_path.empty()) manifest.input_paths.push_back(opts.test_path);
  if (!opts.init_checkpoint.empty()) {
    manifest.input_paths.push_back(opts.init_checkpoint);
  }
  manifest.wall_clock_sec = watch.seconds();
  write_manifest(manifest, path("manifest.json"));
  return out.dump(2);
}

TrainTandaOptions default_tanda_options() {
  TrainTandaOptions opts;
  opts.transfer.learning_rate = 2e-5;
  opts.transfer.max_epochs = 9;
  opts.adapt.learning_rate = 1e-6;
  opts.adapt.max_epochs = 3;
  return opts;
}

std::string run_train_tanda(const TrainTandaOptions& opts) {
  Stopwatch watch;
  ensure_dir(opts.out_dir);
  Splits transfer;
  transfer.train = parse_as2_file(opts.transfer_train_path);
  if (!opts.transfer_dev_path.empty()) {
    transfer.dev = parse_as2_file(opts.transfer_dev_path);
  }
  Splits target;
  target.train = parse_as2_file(opts.target_train_path);
  target.dev = parse_as2_file(opts.target_dev_path);

  Checkpoint init =
      make_initial(opts.init_checkpoint, transfer.train, opts.model,
                   opts.transfer.seed, opts.vocab_min_count,
                   opts.vocab_max_size);

  json mlm_losses = json::array();
  if (opts.mlm_epochs > 0) {
    for (double loss : mlm_pretrain(init, transfer.train, opts.mlm_epochs,
                                    opts.mlm_rate, opts.transfer)) {
      mlm_losses.push_back(loss);
    }
  }

  // Early stopping of both stages uses the target dev set; an explicit
  // transfer dev set overrides that for stage 1.
  const bool use_transfer_dev = !opts.transfer_dev_path.empty();
  const TandaResult result = tanda(transfer, target, init, opts.transfer,
                                   opts.adapt, use_transfer_dev);

  const auto path = [&](const char* name) {
    return (fs::path(opts.out_dir) / name).string();
  };
  save_checkpoint(result.transfer.best, path("transfer.ckpt"));
  save_checkpoint(result.adapt.best, path("adapted.ckpt"));
  write_curve_csv(result.transfer.curve, path("transfer_curve.csv"));
  write_curve_csv(result.adapt.curve, path("adapt_curve.csv"));

  json out{{"transfer", train_result_json(result.transfer)},
           {"adapt", train_result_json(result.adapt)},
           {"transfer_checkpoint", path("transfer.ckpt")},
           {"adapted_checkpoint", path("adapted.ckpt")}};
  if (opts.mlm_epochs > 0) out["mlm_losses"] = mlm_losses;
  if (!opts.test_path.empty()) {
    const Dataset test_data = parse_as2_file(opts.test_path);
    const DatasetMode mode = mode_from_string(opts.test_mode);
    out["test"] = json{
        {"transfer", report_json(evaluate_checkpoint(
                         result.transfer.best, test_data, mode,
                         opts.transfer.threads))},
        {"adapted", report_json(evaluate_checkpoint(
                        result.adapt.best, test_data, mode,
                        opts.adapt.threads))}};
  }
  write_text(path("result.json"), out.dump(2) + "\n");

  RunManifest manifest;
  manifest.command = "train-tanda";
  TrainTandaOptions resolved = opts;
  resolved.model = init.config;
  manifest.config_json = tanda_config_json(resolved);
  manifest.input_paths = {opts.transfer_train_path, opts.target_train_path,
                          opts.target_dev_path};
  if (!opts.transfer_dev_path.empty()) {
    manifest.input_paths.push_back(opts.transfer_dev_path);
  }
  if (!opts.test_path.empty()) manifest.input_paths.push_back(opts.test_path);
  manifest.wall_clock_sec = watch.seconds();
  write_manifest(manifest, path("manifest.json"));
  return out.dump(2);
}

std::string run_noise_exp(const NoiseExpOptions& opts) {
  Stopwatch watch;
  ensure_dir(opts.out_dir);
  const Dataset train_data = parse_as2_file(opts.train_path);
  const Dataset dev_data = parse_as2_file(opts.dev_path);
  const Dataset test_data = parse_as2_file(opts.test_path);

  std::optional<Checkpoint> base;
  Checkpoint reference =
      opts.base_checkpoint.empty()
          ? checkpoint_from_corpus(train_data, opts.model,
                                   opts.experiment.ft.seed,
                                   opts.vocab_min_count, opts.vocab_max_size)
          : load_checkpoint(opts.base_checkpoint);
  if (!opts.base_checkpoint.empty()) base = reference;

  const NoiseReport report =
      noise_experiment(train_data, dev_data, test_data, base, reference,
                       opts.experiment);
  const std::string report_text = report.to_json();
  const auto path = [&](const char* name) {
    return (fs::path(opts.out_dir) / name).string();
  };
  write_text(path("noise_report.json"), report_text + "\n");

  RunManifest manifest;
  manifest.command = "noise-exp";
  NoiseExpOptions resolved = opts;
  resolved.model = reference.config;
  manifest.config_json = noise_config_json(resolved);
  manifest.input_paths = {opts.train_path, opts.dev_path, opts.test_path};
  if (!opts.base_checkpoint.empty()) {
    manifest.input_paths.push_back(opts.base_checkpoint);
  }
  manifest.wall_clock_sec = watch.seconds();
  write_manifest(manifest, path("manifest.json"));
  return report_text;
}

std::string run_stability_report(const std::vector<std::string>& curve_paths) {
  if (curve_paths.empty()) throw ConfigError("no curves given");
  json entries = json::array();
  for (const auto& path : curve_paths) {
    std::vector<EpochPoint> curve;
    const std::string text = read_text(path);
    const bool looks_json = !text.empty() && (text[0] == '{' || text[0] == '[');
    if (looks_json) {
      json j;
      try {
        j = json::parse(text);
      } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
      }
      // train-ft result.json, train-tanda result.json (adapt stage), or a
      // bare result node
      const json* node = nullptr;
      if (j.contains("result")) node = &j["result"];
      else if (j.contains("adapt")) node = &j["adapt"];
      else node = &j;
      if (!node->contains("curve")) throw DataError(path + ": no curve field");
      for (const auto& e : (*node)["curve"]) {
        EpochPoint p;
        p.dev_map = e.at("map").get<double>();
        p.dev_mrr = e.at("mrr").get<double>();
        p.train_loss = e.at("loss").get<double>();
        p.degenerate = e.value("degenerate", false);
        curve.push_back(p);
      }
    } else {
      curve = read_curve_csv(path);
    }
    const StabilityEntry entry = stability_from_curve(curve);
    entries.push_back({{"curve", path},
                       {"map_variance", entry.map_variance},
                       {"max_consecutive_delta", entry.max_consecutive_delta},
                       {"on_off", entry.on_off}});
  }
  return json{{"entries", entries}}.dump(2);
}

std::string run_grad_check_json(const GradCheckConfig& cfg, double tolerance) {
  const GradCheckResult result = run_grad_check(cfg);
  json j = json::parse(result.to_json());
  j["tolerance"] = tolerance;
  j["pass"] = result.worst <= tolerance;
  if (result.worst > tolerance) {
    const std::string text = j.dump(2);
    throw NumericError("gradient check failed:\n" + text);
  }
  return j.dump(2);
}

}  // namespace tanda
