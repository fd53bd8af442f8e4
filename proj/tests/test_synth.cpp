#include <doctest.h>

#include <set>

#include "tanda/errors.hpp"
#include "tanda/metrics.hpp"
#include "tanda/synth.hpp"
#include "tanda/vocab.hpp"

using namespace tanda;

namespace {

SynthConfig tiny_config() {
  SynthConfig cfg;
  cfg.n_questions = 120;
  cfg.candidates_per_question = 6;
  cfg.vocab_size = 96;
  cfg.signal = 12;
  cfg.domain_shift = 0.2;
  cfg.seed = 5;
  return cfg;
}

// Scores every candidate by the generating rule: 1 when it contains the
// answer token associated with the question's key token.
void attach_rule_scores(
    Dataset& data,
    const std::vector<std::pair<std::string, std::string>>& rule) {
  for (auto& g : data) {
    std::string answer;
    for (const auto& token : tokenize(g.question_text)) {
      for (const auto& [key, ans] : rule) {
        if (token == key) answer = ans;
      }
    }
    REQUIRE_FALSE(answer.empty());
    g.scores.clear();
    for (const auto& c : g.candidates) {
      double score = 0.0;
      for (const auto& token : tokenize(c.sentence_text)) {
        if (token == answer) score = 1.0;
      }
      g.scores.push_back(score);
    }
  }
}

}  // namespace

TEST_CASE("synth: every question has exactly one positive") {
  const auto data = generate(tiny_config());
  for (const Dataset* split :
       {&data.transfer.train, &data.transfer.dev, &data.target_train,
        &data.target_dev, &data.target_test}) {
    for (const auto& g : *split) {
      CHECK(g.positives() == 1);
      CHECK(g.candidates.size() == 6);
    }
  }
}

TEST_CASE("synth: CLEAN filtering is a no-op on generated data") {
  const auto data = generate(tiny_config());
  const auto filtered = filter_mode(data.transfer.train, DatasetMode::Clean);
  CHECK(filtered.size() == data.transfer.train.size());
}

TEST_CASE("synth: deterministic under the seed, ids disjoint across splits") {
  const auto a = generate(tiny_config());
  const auto b = generate(tiny_config());
  CHECK(serialize_as2_tsv(a.transfer.train) == serialize_as2_tsv(b.transfer.train));
  CHECK(serialize_as2_tsv(a.target_test) == serialize_as2_tsv(b.target_test));

  auto different = tiny_config();
  different.seed = 6;
  const auto c = generate(different);
  CHECK(serialize_as2_tsv(a.transfer.train) != serialize_as2_tsv(c.transfer.train));

  std::set<std::string> ids;
  size_t total = 0;
  for (const Dataset* split :
       {&a.transfer.train, &a.transfer.dev, &a.target_train, &a.target_dev,
        &a.target_test}) {
    for (const auto& g : *split) {
      ids.insert(g.question_id);
      ++total;
    }
  }
  CHECK(ids.size() == total);
}

TEST_CASE("synth: zero domain shift keeps the surface rule identical") {
  auto cfg = tiny_config();
  cfg.domain_shift = 0.0;
  const auto data = generate(cfg);
  CHECK(data.transfer_rule == data.target_rule);
}

TEST_CASE("synth: domain shift remaps part of the rule bijectively") {
  const auto data = generate(tiny_config());
  CHECK(data.transfer_rule != data.target_rule);
  std::set<std::string> keys, answers;
  for (const auto& [k, a] : data.target_rule) {
    keys.insert(k);
    answers.insert(a);
  }
  CHECK(keys.size() == data.target_rule.size());
  CHECK(answers.size() == data.target_rule.size());
}

TEST_CASE("synth: the generating rule scores to MAP 1 on noiseless data") {
  const auto data = generate(tiny_config());
  Dataset transfer = data.transfer.train;
  attach_rule_scores(transfer, data.transfer_rule);
  CHECK(evaluate(transfer, DatasetMode::Clean).map == doctest::Approx(1.0));

  Dataset target = data.target_test;
  attach_rule_scores(target, data.target_rule);
  const auto report = evaluate(target, DatasetMode::Clean);
  CHECK(report.map == doctest::Approx(1.0));
  CHECK(report.mrr == doctest::Approx(1.0));
  CHECK(report.p_at_1 == doctest::Approx(1.0));
}

TEST_CASE("synth: label noise flips the configured fraction of train pairs") {
  auto cfg = tiny_config();
  cfg.noise = 0.25;
  const auto clean = generate(tiny_config());
  const auto noisy = generate(cfg);
  size_t flips = 0;
  REQUIRE(clean.target_train.size() == noisy.target_train.size());
  for (size_t i = 0; i < clean.target_train.size(); ++i) {
    for (size_t c = 0; c < clean.target_train[i].candidates.size(); ++c) {
      flips += clean.target_train[i].candidates[c].label !=
               noisy.target_train[i].candidates[c].label;
    }
  }
  const size_t pairs = dataset_stats(clean.target_train).n_pairs;
  CHECK(flips == pairs / 4);
  // dev and test stay clean
  CHECK(serialize_as2_tsv(clean.target_test) == serialize_as2_tsv(noisy.target_test));
}

TEST_CASE("synth: vocab too small for the signal count is a config error") {
  auto cfg = tiny_config();
  cfg.vocab_size = 2 * cfg.signal + 4;
  CHECK_THROWS_AS(generate(cfg), ConfigError);
}

TEST_CASE("synth: defaults match the acceptance geometry") {
  const SynthConfig defaults;
  CHECK(defaults.n_questions == 5000);
  CHECK(defaults.candidates_per_question == 10);
}
