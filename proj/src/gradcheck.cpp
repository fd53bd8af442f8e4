#include "tanda/gradcheck.hpp"

#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "tanda/model.hpp"
#include "tanda/rng.hpp"

namespace tanda {

namespace {

using Params64 = ModelParamsT<double>;

std::vector<InputSequence> random_batch(const GradCheckConfig& cfg,
                                        Xoshiro256ss& rng) {
  std::vector<InputSequence> batch;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const int q_len = 2 + static_cast<int>(rng.bounded(3));
    const int s_len = 2 + static_cast<int>(rng.bounded(3));
    InputSequence seq;
    seq.ids.push_back(Vocab::kCls);
    for (int i = 0; i < q_len; ++i) {
      seq.ids.push_back(Vocab::kNumSpecials +
                        static_cast<int32_t>(rng.bounded(
                            static_cast<uint64_t>(cfg.vocab_size - Vocab::kNumSpecials))));
    }
    seq.ids.push_back(Vocab::kSep);
    const size_t split = seq.ids.size();
    for (int i = 0; i < s_len; ++i) {
      seq.ids.push_back(Vocab::kNumSpecials +
                        static_cast<int32_t>(rng.bounded(
                            static_cast<uint64_t>(cfg.vocab_size - Vocab::kNumSpecials))));
    }
    seq.ids.push_back(Vocab::kEos);
    seq.segments.assign(seq.ids.size(), 1);
    for (size_t i = 0; i < split; ++i) seq.segments[i] = 0;
    batch.push_back(std::move(seq));
  }
  return batch;
}

}  // namespace

std::string GradCheckResult::to_json() const {
  nlohmann::json per_tensor;
  for (const auto& e : entries) {
    per_tensor[e.tensor] = {{"max_rel_err", e.max_rel_err},
                            {"analytic", e.analytic_at_worst},
                            {"fd", e.fd_at_worst},
                            {"l2_rel_err", e.l2_rel_err},
                            {"analytic_l2", e.analytic_l2}};
  }
  return nlohmann::json{{"worst", worst},
                        {"seconds", seconds},
                        {"loss_at_check", loss_at_check},
                        {"per_tensor", per_tensor}}
      .dump(2);
}

GradCheckResult run_grad_check(const GradCheckConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();

  ModelConfig model_cfg;
  model_cfg.d_model = cfg.d_model;
  model_cfg.n_blocks = cfg.n_blocks;
  model_cfg.n_heads = cfg.n_heads;
  model_cfg.vocab_size = cfg.vocab_size;
  model_cfg.max_len = cfg.max_len;
  model_cfg.precision = Precision::F64;
  model_cfg.validate();

  auto rng = Xoshiro256ss::seeded(cfg.seed);
  Params64 params = Params64::init(model_cfg, cfg.seed, cfg.init_sigma);
  const std::vector<InputSequence> batch = random_batch(cfg, rng);
  std::vector<int> labels;
  for (int b = 0; b < cfg.batch_size; ++b) {
    labels.push_back(static_cast<int>(rng.bounded(2)));
  }
  const uint64_t mlm_seed = cfg.seed + 17;
  const double mask_rate = 0.4;

  double loss_at_check = 0.0;
  {
    Params64 scratch = Params64::zeros(model_cfg);
    loss_at_check = loss_and_grad(params, model_cfg, batch, labels, scratch, {});
  }

  struct LossFn {
    const char* name;
    bool mlm;
  };
  std::vector<LossFn> losses = {{"classifier", false}};
  if (cfg.include_mlm) losses.push_back({"masked_lm", true});

  GradCheckResult result;
  bool first_loss = true;
  for (const auto& loss_fn : losses) {
    auto eval_loss = [&](const Params64& p) -> double {
      Params64 scratch = Params64::zeros(model_cfg);
      if (loss_fn.mlm) {
        return mlm_loss_and_grad(p, model_cfg, batch, mask_rate, mlm_seed,
                                 scratch);
      }
      return loss_and_grad(p, model_cfg, batch, labels, scratch, {});
    };

    Params64 analytic = Params64::zeros(model_cfg);
    if (loss_fn.mlm) {
      mlm_loss_and_grad(params, model_cfg, batch, mask_rate, mlm_seed, analytic);
    } else {
      loss_and_grad(params, model_cfg, batch, labels, analytic, {});
    }

    std::vector<MatRM<double>*> param_tensors;
    params.for_each_tensor([&](const std::string&, MatRM<double>& t) {
      param_tensors.push_back(&t);
    });
    std::vector<std::pair<std::string, const MatRM<double>*>> analytic_tensors;
    analytic.for_each_tensor([&](const std::string& name, const MatRM<double>& t) {
      analytic_tensors.emplace_back(name, &t);
    });

    for (size_t ti = 0; ti < param_tensors.size(); ++ti) {
      MatRM<double>& tensor = *param_tensors[ti];
      const MatRM<double>& ga = *analytic_tensors[ti].second;
      double max_rel = 0.0;
      double worst_a = 0.0, worst_fd = 0.0;
      double err_sq = 0.0, fd_sq = 0.0;
      for (Eigen::Index idx = 0; idx < tensor.size(); ++idx) {
        double* coord = tensor.data() + idx;
        const double saved = *coord;
        *coord = saved + cfg.epsilon;
        const double plus = eval_loss(params);
        *coord = saved - cfg.epsilon;
        const double minus = eval_loss(params);
        *coord = saved;
        const double fd = (plus - minus) / (2.0 * cfg.epsilon);
        const double a = *(ga.data() + idx);
        err_sq += (a - fd) * (a - fd);
        fd_sq += fd * fd;
        const double rel =
            std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd));
        if (rel > max_rel) {
          max_rel = rel;
          worst_a = a;
          worst_fd = fd;
        }
      }
      const double ga_l2 = ga.norm();
      const double l2_rel = std::sqrt(err_sq) /
                            std::max(1e-8, ga_l2 + std::sqrt(fd_sq));
      if (first_loss) {
        result.entries.push_back({analytic_tensors[ti].first, max_rel, worst_a,
                                  worst_fd, l2_rel, ga_l2});
      } else {
        auto& entry = result.entries[ti];
        if (max_rel > entry.max_rel_err) {
          entry.max_rel_err = max_rel;
          entry.analytic_at_worst = worst_a;
          entry.fd_at_worst = worst_fd;
        }
        if (l2_rel > entry.l2_rel_err) {
          entry.l2_rel_err = l2_rel;
          entry.analytic_l2 = ga_l2;
        }
      }
      result.worst = std::max(result.worst, max_rel);
    }
    first_loss = false;
  }

  result.loss_at_check = loss_at_check;
  result.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return result;
}

}  // namespace tanda
