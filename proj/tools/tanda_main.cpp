// Command-line front end: every subcommand delegates to the pipeline layer.
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
// failure. Machine-readable JSON goes to stdout (or --out), logs to stderr.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tanda/errors.hpp"
#include "tanda/pipeline.hpp"

namespace {

using nlohmann::json;

// Config-file support: `--config file.json` supplies values for flags the
// user did not pass explicitly (CLI > config file > built-in defaults). A
// run manifest is accepted directly; its "config" node is used.
struct ConfigSource {
  json root;
  bool present = false;

  static ConfigSource load(const std::string& path) {
    ConfigSource source;
    if (path.empty()) return source;
    std::ifstream in(path);
    if (!in) throw tanda::DataError("cannot open config file " + path);
    try {
      source.root = json::parse(in);
    } catch (const json::exception& e) {
      throw tanda::DataError("bad config json in " + path + ": " + e.what());
    }
    if (source.root.contains("config") && source.root.contains("tool_version")) {
      source.root = source.root["config"];  // run manifest
    }
    source.present = true;
    return source;
  }

  const json* find(const std::string& dotted) const {
    if (!present) return nullptr;
    const json* node = &root;
    size_t begin = 0;
    while (true) {
      const size_t dot = dotted.find('.', begin);
      const std::string key = dotted.substr(begin, dot - begin);
      if (!node->is_object() || !node->contains(key)) return nullptr;
      node = &(*node)[key];
      if (dot == std::string::npos) return node;
      begin = dot + 1;
    }
  }

  template <class T>
  void apply(const CLI::Option* opt, const std::string& dotted, T& value) const {
    if (opt != nullptr && opt->count() > 0) return;  // explicit flag wins
    if (const json* node = find(dotted)) value = node->get<T>();
  }
};

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << std::endl;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw tanda::DataError("cannot open " + out_path + " for writing");
  out << text << '\n';
}

struct ModelFlags {
  tanda::ModelConfig cfg;
  std::string precision = "f32";
  CLI::Option *o_d = nullptr, *o_blocks = nullptr, *o_heads = nullptr,
              *o_max_len = nullptr, *o_dropout = nullptr, *o_precision = nullptr;

  void attach(CLI::App* cmd) {
    o_d = cmd->add_option("--d-model", cfg.d_model, "embedding width");
    o_blocks = cmd->add_option("--blocks", cfg.n_blocks, "encoder blocks");
    o_heads = cmd->add_option("--heads", cfg.n_heads, "attention heads");
    o_max_len = cmd->add_option("--max-len", cfg.max_len,
                                "maximum sequence length");
    o_dropout = cmd->add_option("--dropout", cfg.dropout, "dropout rate");
    o_precision = cmd->add_option("--precision", precision, "f32 or f64");
  }

  tanda::ModelConfig resolve(const ConfigSource& config,
                             const std::string& prefix) {
    config.apply(o_d, prefix + ".d_model", cfg.d_model);
    config.apply(o_blocks, prefix + ".n_blocks", cfg.n_blocks);
    config.apply(o_heads, prefix + ".n_heads", cfg.n_heads);
    config.apply(o_max_len, prefix + ".max_len", cfg.max_len);
    config.apply(o_dropout, prefix + ".dropout", cfg.dropout);
    config.apply(o_precision, prefix + ".precision", precision);
    cfg.precision = tanda::precision_from_string(precision);
    return cfg;
  }
};

// Flags shared by every training stage of a subcommand.
struct SharedTrainFlags {
  std::string dev_mode = "clean";
  bool nondeterministic = false;
  int threads = 1;
  bool oversample = false;
  double dropout = 0.0;
  CLI::Option *o_dev_mode = nullptr, *o_threads = nullptr,
              *o_oversample = nullptr, *o_nondet = nullptr,
              *o_dropout = nullptr;

  void attach(CLI::App* cmd) {
    o_dev_mode = cmd->add_option("--dev-mode", dev_mode,
                                 "dev filtering: raw|no-all-neg|clean");
    o_threads = cmd->add_option("--threads", threads,
                                "worker threads for dev/test scoring");
    o_oversample = cmd->add_flag("--oversample-positives", oversample,
                                 "replicate positive pairs in training");
    o_nondet = cmd->add_flag("--nondeterministic", nondeterministic,
                             "allow dropout (seeded) during training");
    o_dropout = cmd->add_option("--train-dropout", dropout,
                                "dropout rate during training");
  }

  void resolve_into(const ConfigSource& config, const std::string& prefix,
                    tanda::TrainConfig& cfg) const {
    std::string mode = dev_mode;
    config.apply(o_dev_mode, prefix + ".dev_mode", mode);
    cfg.dev_mode = tanda::mode_from_string(mode);
    cfg.threads = threads;
    config.apply(o_threads, prefix + ".threads", cfg.threads);
    cfg.oversample_positives = oversample;
    config.apply(o_oversample, prefix + ".oversample_positives",
                 cfg.oversample_positives);
    bool deterministic = !nondeterministic;
    if (o_nondet->count() == 0) {
      config.apply(nullptr, prefix + ".deterministic", deterministic);
    }
    cfg.deterministic = deterministic;
    cfg.dropout = dropout;
    config.apply(o_dropout, prefix + ".dropout", cfg.dropout);
  }
};

// Per-stage hyperparameters; the flag prefix distinguishes stages.
struct StageTrainFlags {
  tanda::TrainConfig cfg;
  CLI::Option *o_lr = nullptr, *o_epochs = nullptr, *o_batch = nullptr,
              *o_seed = nullptr, *o_patience = nullptr;

  void attach(CLI::App* cmd, const std::string& flag_prefix, double default_lr,
              int default_epochs) {
    cfg.learning_rate = default_lr;
    cfg.max_epochs = default_epochs;
    const std::string p = flag_prefix.empty() ? "--" : "--" + flag_prefix + "-";
    o_lr = cmd->add_option(p + "lr", cfg.learning_rate, "Adam learning rate");
    o_epochs = cmd->add_option(p + "epochs", cfg.max_epochs, "epoch cap");
    o_batch = cmd->add_option(p + "batch-size", cfg.batch_size, "batch size");
    o_seed = cmd->add_option(p + "seed", cfg.seed, "RNG seed");
    o_patience = cmd->add_option(p + "patience", cfg.patience,
                                 "early-stop patience (0 = run all epochs)");
  }

  tanda::TrainConfig resolve(const ConfigSource& config,
                             const std::string& prefix,
                             const SharedTrainFlags& shared) {
    config.apply(o_lr, prefix + ".learning_rate", cfg.learning_rate);
    config.apply(o_epochs, prefix + ".max_epochs", cfg.max_epochs);
    config.apply(o_batch, prefix + ".batch_size", cfg.batch_size);
    config.apply(o_seed, prefix + ".seed", cfg.seed);
    config.apply(o_patience, prefix + ".patience", cfg.patience);
    shared.resolve_into(config, prefix, cfg);
    return cfg;
  }
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    values.push_back(std::stoi(item));
  }
  return values;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    values.push_back(std::stod(item));
  }
  return values;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Answer-sentence-selection toolkit: dataset construction, "
               "two-step transfer/adapt fine-tuning, ranking metrics, and "
               "noise-robustness experiments"};
  app.set_version_flag("--version", tanda::kToolVersion);
  app.require_subcommand(1);

  std::string out_path;

  // ---- stats ----
  auto* stats_cmd = app.add_subcommand("stats", "dataset statistics");
  std::string stats_data, stats_mode = "raw";
  stats_cmd->add_option("data", stats_data, "AS2 TSV file")->required();
  stats_cmd->add_option("--mode", stats_mode, "raw|no-all-neg|clean");
  stats_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  // ---- evaluate ----
  auto* eval_cmd = app.add_subcommand("evaluate", "MAP/MRR/P@1 of a score file");
  std::string eval_data, eval_scores, eval_mode = "clean";
  eval_cmd->add_option("data", eval_data, "AS2 TSV file")->required();
  eval_cmd->add_option("scores", eval_scores, "one score per data line")
      ->required();
  eval_cmd->add_option("--mode", eval_mode, "raw|no-all-neg|clean");
  eval_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  // ---- inject-noise ----
  auto* noise_cmd = app.add_subcommand("inject-noise",
                                       "flip a seeded fraction of labels");
  std::string noise_in, noise_out, noise_manifest;
  double noise_fraction = 0.0;
  uint64_t noise_seed = 42;
  noise_cmd->add_option("input", noise_in, "AS2 TSV in")->required();
  noise_cmd->add_option("output", noise_out, "AS2 TSV out")->required();
  noise_cmd->add_option("--fraction", noise_fraction, "fraction to flip")
      ->required();
  noise_cmd->add_option("--seed", noise_seed, "RNG seed");
  noise_cmd->add_option("--manifest", noise_manifest, "manifest JSON path");
  noise_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  // ---- build-asnq ----
  auto* asnq_cmd = app.add_subcommand(
      "build-asnq", "NQ JSONL (optionally gzipped) to 4-label ASNQ TSV");
  std::string asnq_in, asnq_out, asnq_stats;
  bool asnq_lenient = false, asnq_ci = false;
  asnq_cmd->add_option("input", asnq_in, "NQ simplified JSONL[.gz]")->required();
  asnq_cmd->add_option("output", asnq_out, "ASNQ TSV out")->required();
  asnq_cmd->add_flag("--lenient", asnq_lenient, "skip malformed records");
  asnq_cmd->add_flag("--case-insensitive", asnq_ci,
                     "case-insensitive accidental-match test");
  asnq_cmd->add_option("--stats-out", asnq_stats, "stats JSON path");
  asnq_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  // ---- binarize ----
  auto* bin_cmd = app.add_subcommand("binarize",
                                     "4-label ASNQ TSV to binary AS2 TSV");
  std::string bin_in, bin_out, bin_negatives = "1,2,3";
  bin_cmd->add_option("input", bin_in, "ASNQ TSV in")->required();
  bin_cmd->add_option("output", bin_out, "AS2 TSV out")->required();
  bin_cmd->add_option("--negatives", bin_negatives,
                      "labels mapped to 0, e.g. 1,2,3 or 2,3");
  bin_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  // ---- synth ----
  auto* synth_cmd = app.add_subcommand("synth",
                                       "generate the synthetic AS2 task");
  tanda::SynthConfig synth_cfg;
  std::string synth_dir;
  synth_cmd->add_option("--out-dir", synth_dir, "output directory")->required();
  synth_cmd->add_option("--n", synth_cfg.n_questions, "transfer-train questions");
  synth_cmd->add_option("--candidates", synth_cfg.candidates_per_question,
                        "candidates per question");
  synth_cmd->add_option("--vocab-size", synth_cfg.vocab_size, "surface tokens");
  synth_cmd->add_option("--signal", synth_cfg.signal, "key-answer associations");
  synth_cmd->add_option("--shift", synth_cfg.domain_shift,
                        "fraction of vocab remapped in the target domain");
  synth_cmd->add_option("--noise", synth_cfg.noise, "train label flips");
  synth_cmd->add_option("--seed", synth_cfg.seed, "RNG seed");
  synth_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  // ---- train-ft ----
  auto* ft_cmd = app.add_subcommand("train-ft", "single-step fine-tuning");
  tanda::TrainFtOptions ft_opts;
  ModelFlags ft_model;
  SharedTrainFlags ft_shared;
  StageTrainFlags ft_train;
  bool ft_print_config = false;
  std::string ft_config_path;
  auto* ft_train_opt = ft_cmd->add_option("--train", ft_opts.train_path,
                                          "training AS2 TSV");
  auto* ft_dev_opt = ft_cmd->add_option("--dev", ft_opts.dev_path, "dev AS2 TSV");
  auto* ft_test_opt = ft_cmd->add_option("--test", ft_opts.test_path,
                                         "optional test AS2 TSV");
  auto* ft_init_opt = ft_cmd->add_option("--init", ft_opts.init_checkpoint,
                                         "initial checkpoint (fresh if absent)");
  auto* ft_out_dir_opt = ft_cmd->add_option("--out-dir", ft_opts.out_dir,
                                            "output directory");
  auto* ft_test_mode_opt = ft_cmd->add_option("--test-mode", ft_opts.test_mode,
                                              "test filtering mode");
  ft_model.attach(ft_cmd);
  ft_shared.attach(ft_cmd);
  ft_train.attach(ft_cmd, "", 2e-5, 9);
  ft_cmd->add_option("--config", ft_config_path,
                     "JSON config or run manifest; flags override");
  ft_cmd->add_flag("--print-config", ft_print_config,
                   "print the resolved config and exit");
  ft_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  // ---- train-tanda ----
  auto* tanda_cmd = app.add_subcommand(
      "train-tanda", "two-step fine-tuning: transfer then adapt");
  tanda::TrainTandaOptions tanda_opts = tanda::default_tanda_options();
  ModelFlags tanda_model;
  SharedTrainFlags tanda_shared;
  StageTrainFlags tanda_transfer, tanda_adapt;
  bool tanda_print_config = false;
  std::string tanda_config_path;
  auto* td_tt = tanda_cmd->add_option("--transfer-train",
                                      tanda_opts.transfer_train_path,
                                      "transfer-stage training TSV");
  auto* td_td = tanda_cmd->add_option(
      "--transfer-dev", tanda_opts.transfer_dev_path,
      "transfer-stage dev TSV (default: early-stop stage 1 on the target dev)");
  auto* td_gt = tanda_cmd->add_option("--target-train",
                                      tanda_opts.target_train_path,
                                      "adapt-stage training TSV");
  auto* td_gd = tanda_cmd->add_option("--target-dev", tanda_opts.target_dev_path,
                                      "adapt-stage dev TSV");
  auto* td_te = tanda_cmd->add_option("--test", tanda_opts.test_path,
                                      "optional test TSV");
  auto* td_init = tanda_cmd->add_option("--init", tanda_opts.init_checkpoint,
                                        "initial checkpoint (fresh if absent)");
  auto* td_out_dir = tanda_cmd->add_option("--out-dir", tanda_opts.out_dir,
                                           "output directory");
  auto* td_test_mode = tanda_cmd->add_option("--test-mode", tanda_opts.test_mode,
                                             "test filtering mode");
  auto* td_mlm_epochs = tanda_cmd->add_option(
      "--mlm-epochs", tanda_opts.mlm_epochs,
      "optional masked-lm pre-training epochs on the transfer data");
  auto* td_mlm_rate = tanda_cmd->add_option("--mlm-rate", tanda_opts.mlm_rate,
                                            "masked-lm mask rate");
  tanda_model.attach(tanda_cmd);
  tanda_shared.attach(tanda_cmd);
  tanda_transfer.attach(tanda_cmd, "transfer", 2e-5, 9);
  tanda_adapt.attach(tanda_cmd, "adapt", 1e-6, 3);
  tanda_cmd->add_option("--config", tanda_config_path,
                        "JSON config or run manifest; flags override");
  tanda_cmd->add_flag("--print-config", tanda_print_config,
                      "print the resolved config and exit");
  tanda_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  // ---- noise-exp ----
  auto* nx_cmd = app.add_subcommand(
      "noise-exp", "label-noise robustness: FT vs adapt-from-checkpoint");
  tanda::NoiseExpOptions nx_opts;
  ModelFlags nx_model;
  SharedTrainFlags nx_shared;
  StageTrainFlags nx_ft, nx_adapt;
  std::string nx_fractions = "0.1,0.2";
  std::string nx_config_path;
  bool nx_print_config = false;
  auto* nx_train = nx_cmd->add_option("--train", nx_opts.train_path,
                                      "target training TSV");
  auto* nx_dev = nx_cmd->add_option("--dev", nx_opts.dev_path, "dev TSV");
  auto* nx_test = nx_cmd->add_option("--test", nx_opts.test_path, "test TSV");
  auto* nx_base = nx_cmd->add_option(
      "--base", nx_opts.base_checkpoint,
      "transfer checkpoint for the adapt arm (fresh weights if absent)");
  auto* nx_out_dir = nx_cmd->add_option("--out-dir", nx_opts.out_dir,
                                        "output directory");
  auto* nx_fr = nx_cmd->add_option("--fractions", nx_fractions,
                                   "comma-separated noise fractions");
  auto* nx_seeds = nx_cmd->add_option("--seeds", nx_opts.experiment.n_seeds,
                                      "number of training seeds");
  auto* nx_seed_base = nx_cmd->add_option("--noise-seed-base",
                                          nx_opts.experiment.noise_seed_base,
                                          "base seed of the label flips");
  nx_model.attach(nx_cmd);
  nx_shared.attach(nx_cmd);
  nx_ft.attach(nx_cmd, "ft", 2e-5, 9);
  nx_adapt.attach(nx_cmd, "adapt", 1e-6, 3);
  nx_cmd->add_option("--config", nx_config_path,
                     "JSON config or run manifest; flags override");
  nx_cmd->add_flag("--print-config", nx_print_config,
                   "print the resolved config and exit");
  nx_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  // ---- stability-report ----
  auto* stab_cmd = app.add_subcommand(
      "stability-report", "MAP variance and max epoch-to-epoch change");
  std::vector<std::string> stab_curves;
  stab_cmd->add_option("curves", stab_curves,
                       "result.json files or epoch,map,mrr,loss CSVs")
      ->required();
  stab_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  // ---- grad-check ----
  auto* gc_cmd = app.add_subcommand(
      "grad-check", "compare analytic gradients with finite differences");
  tanda::GradCheckConfig gc_cfg;
  double gc_tolerance = 1e-5;
  bool gc_no_mlm = false;
  gc_cmd->add_option("--d-model", gc_cfg.d_model, "embedding width");
  gc_cmd->add_option("--blocks", gc_cfg.n_blocks, "encoder blocks");
  gc_cmd->add_option("--heads", gc_cfg.n_heads, "attention heads");
  gc_cmd->add_option("--vocab", gc_cfg.vocab_size, "vocab size");
  gc_cmd->add_option("--batch", gc_cfg.batch_size, "batch size");
  gc_cmd->add_option("--eps", gc_cfg.epsilon, "finite-difference step");
  gc_cmd->add_option("--seed", gc_cfg.seed, "RNG seed");
  gc_cmd->add_option("--init-sigma", gc_cfg.init_sigma,
                     "weight init scale of the probed model");
  gc_cmd->add_option("--tolerance", gc_tolerance, "max relative error");
  gc_cmd->add_flag("--no-mlm", gc_no_mlm, "skip the masked-lm loss path");
  gc_cmd->add_option("--out", out_path, "write JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints usage or help text
    return code == 0 ? 0 : 1;
  }

  if (stats_cmd->parsed()) {
    emit(tanda::run_stats(stats_data, stats_mode), out_path);
  } else if (eval_cmd->parsed()) {
    emit(tanda::run_evaluate(eval_data, eval_scores, eval_mode), out_path);
  } else if (noise_cmd->parsed()) {
    emit(tanda::run_inject_noise(noise_in, noise_out, noise_fraction,
                                 noise_seed, noise_manifest),
         out_path);
  } else if (asnq_cmd->parsed()) {
    emit(tanda::run_build_asnq(asnq_in, asnq_out, asnq_lenient, asnq_ci,
                               asnq_stats),
         out_path);
  } else if (bin_cmd->parsed()) {
    emit(tanda::run_binarize(bin_in, bin_out, parse_int_list(bin_negatives)),
         out_path);
  } else if (synth_cmd->parsed()) {
    emit(tanda::run_synth(synth_dir, synth_cfg), out_path);
  } else if (ft_cmd->parsed()) {
    const ConfigSource config = ConfigSource::load(ft_config_path);
    config.apply(ft_train_opt, "paths.train", ft_opts.train_path);
    config.apply(ft_dev_opt, "paths.dev", ft_opts.dev_path);
    config.apply(ft_test_opt, "paths.test", ft_opts.test_path);
    config.apply(ft_init_opt, "init_checkpoint", ft_opts.init_checkpoint);
    config.apply(ft_test_mode_opt, "test_mode", ft_opts.test_mode);
    config.apply(nullptr, "vocab.min_count", ft_opts.vocab_min_count);
    config.apply(nullptr, "vocab.max_size", ft_opts.vocab_max_size);
    ft_opts.model = ft_model.resolve(config, "model");
    ft_opts.train = ft_train.resolve(config, "train", ft_shared);
    if (ft_print_config) {
      emit(tanda::ft_config_json(ft_opts), out_path);
      return 0;
    }
    if (ft_opts.train_path.empty() || ft_opts.dev_path.empty() ||
        ft_opts.out_dir.empty()) {
      throw tanda::ConfigError("--train, --dev and --out-dir are required");
    }
    config.apply(ft_out_dir_opt, "paths.out_dir", ft_opts.out_dir);
    emit(tanda::run_train_ft(ft_opts), out_path);
  } else if (tanda_cmd->parsed()) {
    const ConfigSource config = ConfigSource::load(tanda_config_path);
    config.apply(td_tt, "paths.transfer_train", tanda_opts.transfer_train_path);
    config.apply(td_td, "paths.transfer_dev", tanda_opts.transfer_dev_path);
    config.apply(td_gt, "paths.target_train", tanda_opts.target_train_path);
    config.apply(td_gd, "paths.target_dev", tanda_opts.target_dev_path);
    config.apply(td_te, "paths.test", tanda_opts.test_path);
    config.apply(td_init, "init_checkpoint", tanda_opts.init_checkpoint);
    config.apply(td_test_mode, "test_mode", tanda_opts.test_mode);
    config.apply(td_mlm_epochs, "mlm_epochs", tanda_opts.mlm_epochs);
    config.apply(td_mlm_rate, "mlm_rate", tanda_opts.mlm_rate);
    config.apply(nullptr, "vocab.min_count", tanda_opts.vocab_min_count);
    config.apply(nullptr, "vocab.max_size", tanda_opts.vocab_max_size);
    tanda_opts.model = tanda_model.resolve(config, "model");
    tanda_opts.transfer =
        tanda_transfer.resolve(config, "transfer", tanda_shared);
    tanda_opts.adapt = tanda_adapt.resolve(config, "adapt", tanda_shared);
    if (tanda_print_config) {
      emit(tanda::tanda_config_json(tanda_opts), out_path);
      return 0;
    }
    if (tanda_opts.transfer_train_path.empty() ||
        tanda_opts.target_train_path.empty() ||
        tanda_opts.target_dev_path.empty() || tanda_opts.out_dir.empty()) {
      throw tanda::ConfigError(
          "--transfer-train, --target-train, --target-dev and --out-dir are "
          "required");
    }
    config.apply(td_out_dir, "paths.out_dir", tanda_opts.out_dir);
    emit(tanda::run_train_tanda(tanda_opts), out_path);
  } else if (nx_cmd->parsed()) {
    const ConfigSource config = ConfigSource::load(nx_config_path);
    config.apply(nx_train, "paths.train", nx_opts.train_path);
    config.apply(nx_dev, "paths.dev", nx_opts.dev_path);
    config.apply(nx_test, "paths.test", nx_opts.test_path);
    config.apply(nx_base, "base_checkpoint", nx_opts.base_checkpoint);
    config.apply(nx_seeds, "n_seeds", nx_opts.experiment.n_seeds);
    config.apply(nx_seed_base, "noise_seed_base",
                 nx_opts.experiment.noise_seed_base);
    config.apply(nullptr, "vocab.min_count", nx_opts.vocab_min_count);
    config.apply(nullptr, "vocab.max_size", nx_opts.vocab_max_size);
    if (nx_fr->count() == 0) {
      if (const json* node = config.find("fractions")) {
        nx_opts.experiment.fractions = node->get<std::vector<double>>();
      } else {
        nx_opts.experiment.fractions = parse_double_list(nx_fractions);
      }
    } else {
      nx_opts.experiment.fractions = parse_double_list(nx_fractions);
    }
    nx_opts.model = nx_model.resolve(config, "model");
    nx_opts.experiment.ft = nx_ft.resolve(config, "ft", nx_shared);
    nx_opts.experiment.adapt = nx_adapt.resolve(config, "adapt", nx_shared);
    nx_opts.experiment.test_mode = tanda::mode_from_string([&] {
      std::string mode = "clean";
      config.apply(nullptr, "test_mode", mode);
      return mode;
    }());
    if (nx_print_config) {
      emit(tanda::noise_config_json(nx_opts), out_path);
      return 0;
    }
    if (nx_opts.train_path.empty() || nx_opts.dev_path.empty() ||
        nx_opts.test_path.empty() || nx_opts.out_dir.empty()) {
      throw tanda::ConfigError(
          "--train, --dev, --test and --out-dir are required");
    }
    config.apply(nx_out_dir, "paths.out_dir", nx_opts.out_dir);
    emit(tanda::run_noise_exp(nx_opts), out_path);
  } else if (stab_cmd->parsed()) {
    emit(tanda::run_stability_report(stab_curves), out_path);
  } else if (gc_cmd->parsed()) {
    gc_cfg.include_mlm = !gc_no_mlm;
    emit(tanda::run_grad_check_json(gc_cfg, gc_tolerance), out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const tanda::ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 1;
  } catch (const tanda::DataError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return 2;
  } catch (const tanda::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
