#include "tanda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <nlohmann/json.hpp>

#include "tanda/errors.hpp"
#include "tanda/noise.hpp"
#include "tanda/rng.hpp"

namespace tanda {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0) {
    throw ConfigError("adam betas must lie in (0, 1)");
  }
  if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
  if (patience < 0) throw ConfigError("patience must be non-negative");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

int best_epoch_of(const std::vector<EpochPoint>& curve) {
  if (curve.empty()) throw ConfigError("empty training curve");
  int best = 1;
  for (size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].dev_map > curve[static_cast<size_t>(best - 1)].dev_map) {
      best = static_cast<int>(i) + 1;
    }
  }
  return best;
}

namespace {

struct EncodedSet {
  std::vector<InputSequence> sequences;
  std::vector<int> labels;
};

EncodedSet encode_dataset(const Dataset& data, const Vocab& vocab, int max_len) {
  EncodedSet set;
  for (const auto& g : data) {
    for (const auto& c : g.candidates) {
      set.sequences.push_back(
          encode_pair(g.question_text, c.sentence_text, vocab, max_len));
      set.labels.push_back(c.label);
    }
  }
  return set;
}

struct AdamState {
  ModelParams m;
  ModelParams v;
  int64_t t = 0;
};

std::vector<MatRM<float>*> tensor_list(ModelParams& params) {
  std::vector<MatRM<float>*> tensors;
  params.for_each_tensor(
      [&](const std::string&, MatRM<float>& t) { tensors.push_back(&t); });
  return tensors;
}

void adam_step(ModelParams& params, ModelParams& grads, AdamState& state,
               const TrainConfig& cfg) {
  ++state.t;
  const float b1 = static_cast<float>(cfg.beta1);
  const float b2 = static_cast<float>(cfg.beta2);
  const float correction1 = 1.0f - std::pow(b1, static_cast<float>(state.t));
  const float correction2 = 1.0f - std::pow(b2, static_cast<float>(state.t));
  const float lr = static_cast<float>(cfg.learning_rate);
  const float eps = static_cast<float>(cfg.adam_eps);

  const auto tensors = tensor_list(params);
  const auto grad_tensors = tensor_list(grads);
  const auto m_tensors = tensor_list(state.m);
  const auto v_tensors = tensor_list(state.v);
  for (size_t i = 0; i < tensors.size(); ++i) {
    auto& g = *grad_tensors[i];
    auto& m = *m_tensors[i];
    auto& v = *v_tensors[i];
    m = b1 * m + (1.0f - b1) * g;
    v = (b2 * v.array() + (1.0f - b2) * g.array().square()).matrix();
    tensors[i]->array() -= lr * (m.array() / correction1) /
                           ((v.array() / correction2).sqrt() + eps);
  }
}

std::vector<size_t> oversampled_indices(const std::vector<int>& labels) {
  size_t pos = 0;
  for (int l : labels) pos += static_cast<size_t>(l);
  const size_t neg = labels.size() - pos;
  std::vector<size_t> indices(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) indices[i] = i;
  if (pos == 0 || neg == 0 || pos >= neg) return indices;
  const size_t copies = neg / pos;  // bring positives roughly level
  for (size_t extra = 1; extra < copies; ++extra) {
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == 1) indices.push_back(i);
    }
  }
  return indices;
}

}  // namespace

std::vector<double> score_pairs(const Checkpoint& ckpt, const Dataset& data,
                                int threads) {
  constexpr size_t kScoreBatch = 64;
  EncodedSet set = encode_dataset(data, ckpt.vocab, ckpt.config.max_len);
  std::vector<double> scores(set.sequences.size());
  const size_t n_batches = (set.sequences.size() + kScoreBatch - 1) / kScoreBatch;

  auto score_batch = [&](size_t batch_index) {
    const size_t begin = batch_index * kScoreBatch;
    const size_t end = std::min(begin + kScoreBatch, set.sequences.size());
    std::vector<InputSequence> batch(set.sequences.begin() + static_cast<long>(begin),
                                     set.sequences.begin() + static_cast<long>(end));
    const MatRM<float> probs = forward(ckpt.params, ckpt.config, batch);
    for (size_t i = begin; i < end; ++i) {
      scores[i] = static_cast<double>(probs(static_cast<Eigen::Index>(i - begin), 1));
    }
  };

  if (threads <= 1 || n_batches <= 1) {
    for (size_t b = 0; b < n_batches; ++b) score_batch(b);
  } else {
    // Each batch writes its own slots, so results match the sequential run.
    const size_t n_workers = std::min<size_t>(static_cast<size_t>(threads), n_batches);
    std::vector<std::thread> workers;
    for (size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&, w] {
        for (size_t b = w; b < n_batches; b += n_workers) score_batch(b);
      });
    }
    for (auto& t : workers) t.join();
  }
  return scores;
}

MetricReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& data,
                                 DatasetMode mode, int threads) {
  Dataset scored = data;
  attach_scores(scored, score_pairs(ckpt, data, threads));
  return evaluate(scored, mode);
}

TrainResult train(const Dataset& train_data, const Dataset& dev_data,
                  const Checkpoint& init, const TrainConfig& cfg) {
  cfg.validate();
  if (train_data.empty()) throw ConfigError("empty training dataset");
  if (dev_data.empty()) throw ConfigError("empty dev dataset");

  Checkpoint current = init;
  EncodedSet set =
      encode_dataset(train_data, current.vocab, current.config.max_len);
  std::vector<size_t> base_indices =
      cfg.oversample_positives ? oversampled_indices(set.labels)
                               : std::vector<size_t>{};
  if (base_indices.empty()) {
    base_indices.resize(set.labels.size());
    for (size_t i = 0; i < base_indices.size(); ++i) base_indices[i] = i;
  }

  AdamState adam{ModelParams::zeros(current.config),
                 ModelParams::zeros(current.config)};
  auto shuffle_rng = Xoshiro256ss::seeded(cfg.seed);
  uint64_t dropout_chain = cfg.seed ^ 0x9e3779b97f4a7c15ULL;

  TrainResult result;
  result.best = current;
  double best_map = -1.0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<size_t> order = base_indices;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    size_t loss_count = 0;
    const size_t batch_size = static_cast<size_t>(cfg.batch_size);
    for (size_t start = 0, step = 0; start < order.size();
         start += batch_size, ++step) {
      const size_t end = std::min(start + batch_size, order.size());
      std::vector<InputSequence> batch;
      std::vector<int> labels;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        batch.push_back(set.sequences[order[i]]);
        labels.push_back(set.labels[order[i]]);
      }
      ModelParams grads = ModelParams::zeros(current.config);
      DropoutSpec dropout;
      if (!cfg.deterministic && cfg.dropout > 0.0) {
        dropout = {true, cfg.dropout, splitmix64_next(dropout_chain)};
      }
      float loss;
      try {
        loss = loss_and_grad(current.params, current.config, batch, labels,
                             grads, dropout);
      } catch (const NumericError& e) {
        throw NumericError("divergence at epoch " + std::to_string(epoch) +
                           " step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(loss)) {
        throw NumericError("divergence at epoch " + std::to_string(epoch) +
                           " step " + std::to_string(step));
      }
      adam_step(current.params, grads, adam, cfg);
      loss_sum += static_cast<double>(loss) * static_cast<double>(end - start);
      loss_count += end - start;
    }

    const std::vector<double> dev_scores =
        score_pairs(current, dev_data, cfg.threads);
    bool all_pos = true, all_neg = true;
    for (double s : dev_scores) {
      (s >= 0.5 ? all_neg : all_pos) = false;
    }
    Dataset dev_scored = dev_data;
    attach_scores(dev_scored, dev_scores);
    const MetricReport dev_report = evaluate(dev_scored, cfg.dev_mode);

    EpochPoint point;
    point.dev_map = dev_report.map;
    point.dev_mrr = dev_report.mrr;
    point.train_loss = loss_sum / static_cast<double>(loss_count);
    point.degenerate = all_pos || all_neg;
    result.curve.push_back(point);

    if (point.dev_map > best_map) {
      best_map = point.dev_map;
      result.best_epoch = epoch;
      result.best = current;
    } else if (cfg.patience > 0 && epoch - result.best_epoch >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

std::vector<double> mlm_pretrain(Checkpoint& ckpt, const Dataset& data,
                                 int epochs, double mask_rate,
                                 const TrainConfig& cfg) {
  cfg.validate();
  if (epochs < 1) throw ConfigError("mlm epochs must be at least 1");
  EncodedSet set = encode_dataset(data, ckpt.vocab, ckpt.config.max_len);
  std::vector<size_t> indices(set.sequences.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  AdamState adam{ModelParams::zeros(ckpt.config), ModelParams::zeros(ckpt.config)};
  auto shuffle_rng = Xoshiro256ss::seeded(cfg.seed ^ 0x6d4c7a716aa1f0d1ULL);
  uint64_t mask_chain = cfg.seed;

  std::vector<double> epoch_losses;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::vector<size_t> order = indices;
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    size_t count = 0;
    const size_t batch_size = static_cast<size_t>(cfg.batch_size);
    for (size_t start = 0; start < order.size(); start += batch_size) {
      const size_t end = std::min(start + batch_size, order.size());
      std::vector<InputSequence> batch;
      for (size_t i = start; i < end; ++i) batch.push_back(set.sequences[order[i]]);
      ModelParams grads = ModelParams::zeros(ckpt.config);
      const float loss =
          mlm_loss_and_grad(ckpt.params, ckpt.config, batch, mask_rate,
                            splitmix64_next(mask_chain), grads);
      adam_step(ckpt.params, grads, adam, cfg);
      loss_sum += static_cast<double>(loss) * static_cast<double>(end - start);
      count += end - start;
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(count));
  }
  return epoch_losses;
}

Checkpoint checkpoint_from_corpus(const Dataset& corpus, ModelConfig config,
                                  uint64_t seed, size_t vocab_min_count,
                                  size_t vocab_max_size) {
  std::vector<std::string> texts;
  texts.reserve(corpus.size() * 2);
  for (const auto& g : corpus) {
    texts.push_back(g.question_text);
    for (const auto& c : g.candidates) texts.push_back(c.sentence_text);
  }
  Vocab vocab = Vocab::build(texts, vocab_min_count, vocab_max_size);
  return fresh_checkpoint(config, std::move(vocab), seed);
}

TandaResult tanda(const Splits& transfer, const Splits& target,
                  const Checkpoint& init, const TrainConfig& cfg_transfer,
                  const TrainConfig& cfg_adapt, bool transfer_dev_for_transfer) {
  TandaResult result;
  const Dataset& transfer_dev =
      transfer_dev_for_transfer ? transfer.dev : target.dev;
  result.transfer = train(transfer.train, transfer_dev, init, cfg_transfer);
  result.adapt = train(target.train, target.dev, result.transfer.best, cfg_adapt);
  return result;
}

StabilityEntry stability_from_curve(const std::vector<EpochPoint>& curve) {
  if (curve.size() < 2) {
    throw ConfigError("stability needs a curve of at least 2 epochs");
  }
  StabilityEntry entry;
  double mean = 0.0;
  for (const auto& p : curve) mean += p.dev_map;
  mean /= static_cast<double>(curve.size());
  for (const auto& p : curve) {
    entry.map_variance += (p.dev_map - mean) * (p.dev_map - mean);
    entry.on_off = entry.on_off || p.degenerate;
  }
  entry.map_variance /= static_cast<double>(curve.size());
  for (size_t i = 1; i < curve.size(); ++i) {
    entry.max_consecutive_delta =
        std::max(entry.max_consecutive_delta,
                 std::abs(curve[i].dev_map - curve[i - 1].dev_map));
  }
  return entry;
}

StabilityReport stability_report(const std::vector<TrainResult>& results) {
  StabilityReport report;
  for (const auto& r : results) {
    report.entries.push_back(stability_from_curve(r.curve));
  }
  return report;
}

std::string NoiseReport::to_json() const {
  nlohmann::json cells_json = nlohmann::json::array();
  for (const auto& cell : cells) {
    auto arm = [](const NoiseArmResult& a) {
      return nlohmann::json{{"mean_map", a.mean_map},
                            {"mean_mrr", a.mean_mrr},
                            {"map_drop_pct", a.mean_map_drop_pct},
                            {"mrr_drop_pct", a.mean_mrr_drop_pct}};
    };
    cells_json.push_back({{"fraction", cell.fraction},
                          {"ft", arm(cell.ft)},
                          {"tanda_adapt", arm(cell.adapt)}});
  }
  return nlohmann::json{{"cells", cells_json}}.dump(2);
}

NoiseReport noise_experiment(const Dataset& target_train, const Dataset& dev,
                             const Dataset& test,
                             const std::optional<Checkpoint>& base,
                             const Checkpoint& reference,
                             const NoiseExperimentConfig& cfg) {
  if (cfg.n_seeds < 1) throw ConfigError("noise experiment needs n_seeds >= 1");
  for (double f : cfg.fractions) {
    if (f < 0.0 || f >= 1.0) throw ConfigError("noise fractions must lie in [0, 1)");
  }

  std::vector<double> fractions = {0.0};
  for (double f : cfg.fractions) {
    if (f != 0.0) fractions.push_back(f);
  }

  // [fraction][seed] -> (map, mrr) per arm
  struct RunScore { double map, mrr; };
  std::vector<std::vector<RunScore>> ft_runs(fractions.size());
  std::vector<std::vector<RunScore>> adapt_runs(fractions.size());

  const std::vector<QAPair> flat = flatten(target_train);
  for (int seed_index = 0; seed_index < cfg.n_seeds; ++seed_index) {
    TrainConfig ft_cfg = cfg.ft;
    TrainConfig adapt_cfg = cfg.adapt;
    ft_cfg.seed = cfg.ft.seed + static_cast<uint64_t>(seed_index);
    adapt_cfg.seed = cfg.adapt.seed + static_cast<uint64_t>(seed_index);
    const Checkpoint fresh = fresh_checkpoint(
        reference.config, reference.vocab, ft_cfg.seed ^ 0xABCDEF12u);
    const Checkpoint& adapt_init = base.has_value() ? *base : fresh;

    for (size_t fi = 0; fi < fractions.size(); ++fi) {
      Dataset noisy = target_train;
      if (fractions[fi] > 0.0) {
        const uint64_t noise_seed = cfg.noise_seed_base +
                                    100 * static_cast<uint64_t>(seed_index) +
                                    static_cast<uint64_t>(fractions[fi] * 100.0);
        noisy = regroup(inject_noise(flat, fractions[fi], noise_seed).first);
      }
      const TrainResult ft_res = train(noisy, dev, fresh, ft_cfg);
      const TrainResult adapt_res = train(noisy, dev, adapt_init, adapt_cfg);
      const MetricReport ft_eval =
          evaluate_checkpoint(ft_res.best, test, cfg.test_mode, cfg.ft.threads);
      const MetricReport adapt_eval = evaluate_checkpoint(
          adapt_res.best, test, cfg.test_mode, cfg.adapt.threads);
      ft_runs[fi].push_back({ft_eval.map, ft_eval.mrr});
      adapt_runs[fi].push_back({adapt_eval.map, adapt_eval.mrr});
    }
  }

  NoiseReport report;
  for (size_t fi = 0; fi < fractions.size(); ++fi) {
    NoiseCell cell;
    cell.fraction = fractions[fi];
    auto fill = [&](const std::vector<std::vector<RunScore>>& runs,
                    NoiseArmResult& arm) {
      const auto& clean = runs[0];
      const auto& here = runs[fi];
      for (size_t s = 0; s < here.size(); ++s) {
        arm.mean_map += here[s].map;
        arm.mean_mrr += here[s].mrr;
        if (clean[s].map > 0.0) {
          arm.mean_map_drop_pct +=
              100.0 * (clean[s].map - here[s].map) / clean[s].map;
        }
        if (clean[s].mrr > 0.0) {
          arm.mean_mrr_drop_pct +=
              100.0 * (clean[s].mrr - here[s].mrr) / clean[s].mrr;
        }
      }
      const double n = static_cast<double>(here.size());
      arm.mean_map /= n;
      arm.mean_mrr /= n;
      arm.mean_map_drop_pct /= n;
      arm.mean_mrr_drop_pct /= n;
    };
    fill(ft_runs, cell.ft);
    fill(adapt_runs, cell.adapt);
    report.cells.push_back(cell);
  }
  return report;
}

}  // namespace tanda
