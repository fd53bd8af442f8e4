#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tanda/gradcheck.hpp"
#include "tanda/trainer.hpp"

namespace tanda {

inline constexpr const char* kToolVersion = "0.1.0";

// File-level operations behind the CLI subcommands and the Python module.
// Every function returns the JSON it would print on stdout.

std::string run_stats(const std::string& data_path, const std::string& mode);

std::string run_evaluate(const std::string& data_path,
                         const std::string& scores_path,
                         const std::string& mode);

std::string run_inject_noise(const std::string& in_path,
                             const std::string& out_path, double fraction,
                             uint64_t seed,
                             const std::string& manifest_path = "");

std::string run_build_asnq(const std::string& in_path,
                           const std::string& out_path, bool lenient,
                           bool case_insensitive,
                           const std::string& stats_out = "");

std::string run_binarize(const std::string& in_path,
                         const std::string& out_path,
                         const std::vector<int>& negatives);

std::string run_synth(const std::string& out_dir, const SynthConfig& cfg);

struct TrainFtOptions {
  std::string train_path;
  std::string dev_path;
  std::string test_path;       // optional
  std::string init_checkpoint; // fresh model when empty
  std::string out_dir;
  ModelConfig model;
  TrainConfig train;
  std::string test_mode = "clean";
  size_t vocab_max_size = 30000;
  size_t vocab_min_count = 1;
};

std::string run_train_ft(const TrainFtOptions& opts);

struct TrainTandaOptions {
  std::string transfer_train_path;
  std::string transfer_dev_path;  // optional; target dev steers both stages
  std::string target_train_path;
  std::string target_dev_path;
  std::string test_path;          // optional
  std::string init_checkpoint;    // fresh model when empty
  std::string out_dir;
  ModelConfig model;
  TrainConfig transfer;           // lr 2e-5, 9 epochs
  TrainConfig adapt;              // lr 1e-6, 3 epochs
  int mlm_epochs = 0;             // optional pre-training stage
  double mlm_rate = 0.15;
  std::string test_mode = "clean";
  size_t vocab_max_size = 30000;
  size_t vocab_min_count = 1;
};

TrainTandaOptions default_tanda_options();

std::string run_train_tanda(const TrainTandaOptions& opts);

struct NoiseExpOptions {
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string base_checkpoint;  // adapt arm starts fresh when empty
  std::string out_dir;
  ModelConfig model;
  NoiseExperimentConfig experiment;
  size_t vocab_max_size = 30000;
  size_t vocab_min_count = 1;
};

std::string run_noise_exp(const NoiseExpOptions& opts);

// Resolved-config nodes, as embedded in the run manifests. `--config` files
// (or manifests themselves) feed these back into the CLI.
std::string ft_config_json(const TrainFtOptions& opts);
std::string tanda_config_json(const TrainTandaOptions& opts);
std::string noise_config_json(const NoiseExpOptions& opts);

// Accepts train-ft/train-tanda result JSONs (preferred, carries the
// degenerate flags) or bare `epoch,map,mrr,loss` CSV curves.
std::string run_stability_report(const std::vector<std::string>& curve_paths);

std::string run_grad_check_json(const GradCheckConfig& cfg, double tolerance);

void write_curve_csv(const std::vector<EpochPoint>& curve,
                     const std::string& path);
std::vector<EpochPoint> read_curve_csv(const std::string& path);

// Reproducibility record written next to every experiment output.
struct RunManifest {
  std::string command;
  std::string config_json;  // resolved configuration
  std::vector<std::string> input_paths;
  double wall_clock_sec = 0.0;

  std::string to_json() const;  // adds tool version and input digests
};

void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace tanda
