#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tanda/corpus.hpp"

namespace tanda {

struct Splits {
  Dataset train;
  Dataset dev;
};

// Seeded generator of a learnable desk-scale task. Every question embeds one
// key token; exactly one of its candidates contains the answer token paired
// with that key, the rest carry answer tokens of other keys, so ranking
// requires the key-answer association and not candidate word statistics.
// The target domain rewrites a seeded fraction of the surface vocabulary
// through a bijective token remap (a cycle over the selected tokens).
struct SynthConfig {
  size_t n_questions = 5000;            // transfer-train questions
  size_t candidates_per_question = 10;  // one positive, rest distractors
  size_t vocab_size = 64;               // total surface tokens
  size_t signal = 8;                    // key-answer associations
  double domain_shift = 0.1;            // fraction of vocab remapped
  double noise = 0.0;                   // label flips on the train splits
  uint64_t seed = 7;

  void validate() const;
};

struct SynthData {
  Splits transfer;
  Dataset target_train;
  Dataset target_dev;
  Dataset target_test;
  // key token -> answer token, in each domain's surface forms
  std::vector<std::pair<std::string, std::string>> transfer_rule;
  std::vector<std::pair<std::string, std::string>> target_rule;
};

// Split sizes are derived from n_questions: transfer dev and target test are
// n/10, target train and dev are n/50 (floored, at least 4). Question ids are
// disjoint across splits.
SynthData generate(const SynthConfig& cfg);

}  // namespace tanda
