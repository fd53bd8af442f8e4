#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tanda/checkpoint.hpp"
#include "tanda/corpus.hpp"
#include "tanda/metrics.hpp"
#include "tanda/synth.hpp"

namespace tanda {

struct TrainConfig {
  double learning_rate = 2e-5;
  int max_epochs = 9;
  int batch_size = 32;
  uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  DatasetMode dev_mode = DatasetMode::Clean;
  bool deterministic = true;  // single-threaded training, dropout off
  double dropout = 0.0;       // active only when deterministic is off
  int patience = 0;           // stop after this many epochs without a new
                              // best dev MAP; 0 runs every epoch
  int threads = 1;            // dev scoring only; does not affect results
  bool oversample_positives = false;

  void validate() const;
};

struct EpochPoint {
  double dev_map = 0.0;
  double dev_mrr = 0.0;
  double train_loss = 0.0;
  bool degenerate = false;  // one predicted class for every dev pair
};

struct TrainResult {
  std::vector<EpochPoint> curve;
  int best_epoch = 0;  // 1-based; argmax dev MAP, earliest on ties
  Checkpoint best;
  bool stopped_early = false;
};

struct TandaResult {
  TrainResult transfer;
  TrainResult adapt;
};

// 1-based argmax of dev MAP; earlier epoch wins ties.
int best_epoch_of(const std::vector<EpochPoint>& curve);

// Minibatch Adam on the pair cross-entropy with epoch-level dev scoring.
// Returns the checkpoint of the best dev-MAP epoch. Deterministic given the
// config seed; throws NumericError naming epoch/step on divergence.
TrainResult train(const Dataset& train_data, const Dataset& dev_data,
                  const Checkpoint& init, const TrainConfig& cfg);

// Optional masked-LM pre-training pass over the pairs of `data`; updates the
// checkpoint in place and returns the per-epoch mean losses.
std::vector<double> mlm_pretrain(Checkpoint& ckpt, const Dataset& data,
                                 int epochs, double mask_rate,
                                 const TrainConfig& cfg);

// Vocabulary and fresh weights from a training corpus.
Checkpoint checkpoint_from_corpus(const Dataset& corpus, ModelConfig config,
                                  uint64_t seed, size_t vocab_min_count = 1,
                                  size_t vocab_max_size = 30000);

// Two-step fine-tuning: stage 1 on the transfer data, stage 2 on the target
// data starting from the stage-1 best checkpoint. Early stopping of both
// stages uses the target dev set unless `transfer_dev_for_transfer` is set.
TandaResult tanda(const Splits& transfer, const Splits& target,
                  const Checkpoint& init, const TrainConfig& cfg_transfer,
                  const TrainConfig& cfg_adapt,
                  bool transfer_dev_for_transfer = false);

// p(q, s) for every pair, in dataset order. `threads` splits batches across
// workers; outputs are written by index so the result is identical to the
// sequential run.
std::vector<double> score_pairs(const Checkpoint& ckpt, const Dataset& data,
                                int threads = 1);

MetricReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& data,
                                 DatasetMode mode, int threads = 1);

struct StabilityEntry {
  double map_variance = 0.0;        // population variance over the curve
  double max_consecutive_delta = 0.0;
  bool on_off = false;              // any degenerate epoch
};

struct StabilityReport {
  std::vector<StabilityEntry> entries;  // aligned with the input results
};

StabilityEntry stability_from_curve(const std::vector<EpochPoint>& curve);
StabilityReport stability_report(const std::vector<TrainResult>& results);

// Robustness protocol: for each noise fraction and seed, flip target-train
// labels, fine-tune both arms (FT from fresh weights, adapt from `base` when
// given), and evaluate on the clean test set.
struct NoiseExperimentConfig {
  std::vector<double> fractions = {0.1, 0.2};
  int n_seeds = 5;
  TrainConfig ft;
  TrainConfig adapt;
  uint64_t noise_seed_base = 1000;
  DatasetMode test_mode = DatasetMode::Clean;
};

struct NoiseArmResult {
  double mean_map = 0.0;
  double mean_mrr = 0.0;
  double mean_map_drop_pct = 0.0;  // 100 * (clean - noisy) / clean, per seed
  double mean_mrr_drop_pct = 0.0;
};

struct NoiseCell {
  double fraction = 0.0;
  NoiseArmResult ft;
  NoiseArmResult adapt;
};

struct NoiseReport {
  std::vector<NoiseCell> cells;  // fraction 0 first
  std::string to_json() const;
};

NoiseReport noise_experiment(const Dataset& target_train, const Dataset& dev,
                             const Dataset& test,
                             const std::optional<Checkpoint>& base,
                             const Checkpoint& reference,
                             const NoiseExperimentConfig& cfg);

}  // namespace tanda
