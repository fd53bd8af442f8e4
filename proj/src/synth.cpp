#include "tanda/synth.hpp"

#include <algorithm>
#include <cstdio>

#include "tanda/errors.hpp"
#include "tanda/noise.hpp"
#include "tanda/rng.hpp"

namespace tanda {

void SynthConfig::validate() const {
  if (n_questions == 0) throw ConfigError("n_questions must be positive");
  if (candidates_per_question < 2) {
    throw ConfigError("need at least 2 candidates per question");
  }
  if (signal == 0) throw ConfigError("signal must be positive");
  if (vocab_size < 2 * signal + 8) {
    throw ConfigError("vocab too small for signal count: need at least " +
                      std::to_string(2 * signal + 8) + " tokens");
  }
  if (domain_shift < 0.0 || domain_shift >= 1.0) {
    throw ConfigError("domain_shift must lie in [0, 1)");
  }
  if (noise < 0.0 || noise >= 1.0) {
    throw ConfigError("noise must lie in [0, 1)");
  }
}

namespace {

constexpr size_t kFillersPerText = 1;

std::string token_name(size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "t%04zu", index);
  return buf;
}

// Surface map for a domain: identity, or a cycle over a seeded subset.
std::vector<size_t> surface_map(const SynthConfig& cfg, Xoshiro256ss& rng) {
  std::vector<size_t> map(cfg.vocab_size);
  for (size_t i = 0; i < map.size(); ++i) map[i] = i;
  const size_t remapped = static_cast<size_t>(
      cfg.domain_shift * static_cast<double>(cfg.vocab_size));
  if (remapped < 2) return map;
  std::vector<size_t> selected =
      sample_without_replacement(cfg.vocab_size, remapped, rng);
  rng.shuffle(selected);
  for (size_t i = 0; i < selected.size(); ++i) {
    map[selected[i]] = selected[(i + 1) % selected.size()];
  }
  return map;
}

struct DomainWriter {
  const SynthConfig& cfg;
  const std::vector<size_t>& surface;
  Xoshiro256ss& rng;

  std::string surface_token(size_t latent) const {
    return token_name(surface[latent]);
  }

  size_t random_filler() {
    const size_t n_fillers = cfg.vocab_size - 2 * cfg.signal;
    return 2 * cfg.signal + static_cast<size_t>(rng.bounded(n_fillers));
  }

  std::string text_with(size_t content_latent) {
    std::vector<size_t> latents{content_latent};
    for (size_t i = 0; i < kFillersPerText; ++i) latents.push_back(random_filler());
    rng.shuffle(latents);
    std::string text;
    for (size_t latent : latents) {
      if (!text.empty()) text.push_back(' ');
      text += surface_token(latent);
    }
    return text;
  }

  QuestionGroup make_question(const std::string& id) {
    const size_t assoc = static_cast<size_t>(rng.bounded(cfg.signal));
    QuestionGroup g;
    g.question_id = id;
    g.question_text = text_with(assoc);  // key token = latent id `assoc`
    const size_t positive_slot =
        static_cast<size_t>(rng.bounded(cfg.candidates_per_question));
    for (size_t c = 0; c < cfg.candidates_per_question; ++c) {
      size_t answer_latent;
      if (c == positive_slot) {
        answer_latent = cfg.signal + assoc;
      } else {
        size_t other = static_cast<size_t>(rng.bounded(cfg.signal - 1));
        if (other >= assoc) ++other;  // any association but this one
        answer_latent = cfg.signal + other;
      }
      g.candidates.push_back({text_with(answer_latent),
                              c == positive_slot ? 1 : 0});
    }
    return g;
  }

  Dataset make_split(const std::string& prefix, size_t count) {
    Dataset data;
    data.reserve(count);
    for (size_t i = 0; i < count; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s-%06zu", prefix.c_str(), i);
      data.push_back(make_question(id));
    }
    return data;
  }
};

Dataset flip_train_labels(Dataset data, double fraction, uint64_t seed) {
  if (fraction <= 0.0) return data;
  auto [pairs, manifest] = inject_noise(flatten(data), fraction, seed);
  (void)manifest;
  return regroup(pairs);
}

}  // namespace

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  uint64_t chain = cfg.seed;
  const uint64_t seed_shift = splitmix64_next(chain);
  const uint64_t seed_transfer = splitmix64_next(chain);
  const uint64_t seed_target = splitmix64_next(chain);
  const uint64_t seed_noise = splitmix64_next(chain);

  std::vector<size_t> identity(cfg.vocab_size);
  for (size_t i = 0; i < identity.size(); ++i) identity[i] = i;
  auto shift_rng = Xoshiro256ss::seeded(seed_shift);
  const std::vector<size_t> shifted = surface_map(cfg, shift_rng);

  const size_t tenth = std::max<size_t>(4, cfg.n_questions / 10);
  const size_t fiftieth = std::max<size_t>(4, cfg.n_questions / 50);

  SynthData data;
  auto transfer_rng = Xoshiro256ss::seeded(seed_transfer);
  DomainWriter transfer_writer{cfg, identity, transfer_rng};
  data.transfer.train = transfer_writer.make_split("syn-tt", cfg.n_questions);
  data.transfer.dev = transfer_writer.make_split("syn-td", tenth);

  auto target_rng = Xoshiro256ss::seeded(seed_target);
  DomainWriter target_writer{cfg, shifted, target_rng};
  data.target_train = target_writer.make_split("syn-gt", fiftieth);
  data.target_dev = target_writer.make_split("syn-gd", fiftieth);
  data.target_test = target_writer.make_split("syn-ge", tenth);

  for (size_t i = 0; i < cfg.signal; ++i) {
    data.transfer_rule.emplace_back(token_name(identity[i]),
                                    token_name(identity[cfg.signal + i]));
    data.target_rule.emplace_back(token_name(shifted[i]),
                                  token_name(shifted[cfg.signal + i]));
  }

  if (cfg.noise > 0.0) {
    data.transfer.train =
        flip_train_labels(std::move(data.transfer.train), cfg.noise, seed_noise);
    data.target_train = flip_train_labels(std::move(data.target_train),
                                          cfg.noise, seed_noise ^ 1);
  }
  return data;
}

}  // namespace tanda
