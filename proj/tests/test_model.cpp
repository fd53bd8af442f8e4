#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "tanda/checkpoint.hpp"
#include "tanda/errors.hpp"
#include "tanda/gradcheck.hpp"
#include "tanda/hash.hpp"
#include "tanda/model.hpp"
#include "tanda/rng.hpp"

using namespace tanda;

namespace {

Vocab small_vocab() {
  return Vocab::build({"alpha beta gamma delta epsilon zeta eta theta"}, 1, 100);
}

ModelConfig small_config(const Vocab& vocab) {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.max_len = 24;
  cfg.vocab_size = static_cast<int>(vocab.size());
  return cfg;
}

}  // namespace

TEST_CASE("build_vocab: empty corpus keeps only the specials") {
  const Vocab vocab = Vocab::build({}, 1, 100);
  CHECK(vocab.size() == 6);
  CHECK(vocab.id("anything") == Vocab::kUnk);
}

TEST_CASE("build_vocab: min_count filters and frequency orders") {
  const Vocab vocab = Vocab::build({"a a b"}, 2, 100);
  CHECK(vocab.size() == 7);  // specials + "a"
  CHECK(vocab.id("a") == 6);
  CHECK(vocab.id("b") == Vocab::kUnk);
}

TEST_CASE("build_vocab: max_size caps the total entry count") {
  const Vocab vocab = Vocab::build({"x y z"}, 1, 7);
  CHECK(vocab.size() == 7);
}

TEST_CASE("build_vocab: lowercases and breaks ties by token text") {
  const Vocab vocab = Vocab::build({"B b A a"}, 1, 100);
  CHECK(vocab.size() == 8);
  CHECK(vocab.id("a") == 6);  // counts equal, "a" < "b"
  CHECK(vocab.id("b") == 7);
  // id lookup is exact; tokenize() is where case folding happens
  CHECK(vocab.id("B") == Vocab::kUnk);
  CHECK(tokenize("B A")[0] == "b");
}

TEST_CASE("encode_pair: direct packing") {
  const Vocab vocab = small_vocab();
  const auto seq = encode_pair("alpha", "beta", vocab, 16);
  REQUIRE(seq.ids.size() == 5);
  CHECK(seq.ids[0] == Vocab::kCls);
  CHECK(seq.ids[1] == vocab.id("alpha"));
  CHECK(seq.ids[2] == Vocab::kSep);
  CHECK(seq.ids[3] == vocab.id("beta"));
  CHECK(seq.ids[4] == Vocab::kEos);
  CHECK(seq.segments == std::vector<int8_t>{0, 0, 0, 1, 1});
}

TEST_CASE("encode_pair: longest-first truncation to 63/62 at max_len 128") {
  std::string q, s;
  for (int i = 0; i < 100; ++i) {
    q += "alpha ";
    s += "beta ";
  }
  const Vocab vocab = small_vocab();
  const auto seq = encode_pair(q, s, vocab, 128);
  CHECK(seq.ids.size() == 128);
  size_t q_len = 0, s_len = 0;
  for (size_t i = 1; i < seq.ids.size(); ++i) {
    if (seq.ids[i] == vocab.id("alpha")) ++q_len;
    if (seq.ids[i] == vocab.id("beta")) ++s_len;
  }
  CHECK(q_len == 63);
  CHECK(s_len == 62);
}

TEST_CASE("encode_pair: empty question degenerates cleanly") {
  const Vocab vocab = small_vocab();
  const auto seq = encode_pair("", "gamma", vocab, 16);
  REQUIRE(seq.ids.size() == 4);
  CHECK(seq.ids[0] == Vocab::kCls);
  CHECK(seq.ids[1] == Vocab::kSep);
  CHECK(seq.ids[2] == vocab.id("gamma"));
  CHECK(seq.ids[3] == Vocab::kEos);
  CHECK(seq.segments == std::vector<int8_t>{0, 0, 1, 1});
}

TEST_CASE("forward: zeroed classifier gives 0.5/0.5 for any input") {
  const Vocab vocab = small_vocab();
  const ModelConfig cfg = small_config(vocab);
  ModelParams params = ModelParams::init(cfg, 7);
  params.cls_w.setZero();
  params.cls_b.setZero();
  const auto probs = forward(
      params, cfg, {encode_pair("alpha beta", "gamma", vocab, cfg.max_len)});
  CHECK(probs(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(probs(0, 1) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("forward: probability rows sum to 1") {
  const Vocab vocab = small_vocab();
  const ModelConfig cfg = small_config(vocab);
  const ModelParams params = ModelParams::init(cfg, 3);
  std::vector<InputSequence> batch = {
      encode_pair("alpha beta gamma", "delta", vocab, cfg.max_len),
      encode_pair("zeta", "eta theta alpha", vocab, cfg.max_len),
      encode_pair("beta", "beta", vocab, cfg.max_len)};
  const auto probs = forward(params, cfg, batch);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    CHECK(std::abs(probs.row(r).sum() - 1.0f) < 1e-6f);
  }
}

TEST_CASE("forward: adding a constant to both logits changes nothing") {
  const Vocab vocab = small_vocab();
  const ModelConfig cfg = small_config(vocab);
  ModelParams params = ModelParams::init(cfg, 3);
  const auto seq = encode_pair("alpha", "beta gamma", vocab, cfg.max_len);
  const auto before = forward(params, cfg, {seq});
  params.cls_b.array() += 0.37f;
  const auto after = forward(params, cfg, {seq});
  CHECK(std::abs(before(0, 1) - after(0, 1)) < 1e-7f);
}

TEST_CASE("forward: outputs are padding-invariant within the batch") {
  const Vocab vocab = small_vocab();
  const ModelConfig cfg = small_config(vocab);
  const ModelParams params = ModelParams::init(cfg, 5);
  const auto short_seq = encode_pair("alpha", "beta", vocab, cfg.max_len);
  const auto long_seq =
      encode_pair("alpha beta gamma delta", "epsilon zeta eta", vocab, cfg.max_len);

  // alone (no padding) vs padded next to a longer sequence
  const auto alone = forward(params, cfg, {short_seq});
  const auto padded = forward(params, cfg, {short_seq, long_seq});
  CHECK(std::abs(alone(0, 0) - padded(0, 0)) < 1e-6f);
  CHECK(std::abs(alone(0, 1) - padded(0, 1)) < 1e-6f);
}

TEST_CASE("forward: batch permutation permutes the outputs") {
  const Vocab vocab = small_vocab();
  const ModelConfig cfg = small_config(vocab);
  const ModelParams params = ModelParams::init(cfg, 5);
  std::vector<InputSequence> batch = {
      encode_pair("alpha", "beta", vocab, cfg.max_len),
      encode_pair("gamma delta", "epsilon", vocab, cfg.max_len),
      encode_pair("zeta eta", "theta alpha beta", vocab, cfg.max_len)};
  const auto straight = forward(params, cfg, batch);
  std::vector<InputSequence> shuffled = {batch[2], batch[0], batch[1]};
  const auto permuted = forward(params, cfg, shuffled);
  CHECK(std::abs(straight(0, 1) - permuted(1, 1)) < 1e-6f);
  CHECK(std::abs(straight(1, 1) - permuted(2, 1)) < 1e-6f);
  CHECK(std::abs(straight(2, 1) - permuted(0, 1)) < 1e-6f);
}

TEST_CASE("loss_and_grad: uniform prediction costs ln 2") {
  const Vocab vocab = small_vocab();
  const ModelConfig cfg = small_config(vocab);
  ModelParams params = ModelParams::init(cfg, 7);
  params.cls_w.setZero();
  params.cls_b.setZero();
  ModelParams grads = ModelParams::zeros(cfg);
  const float loss = loss_and_grad(
      params, cfg,
      {encode_pair("alpha", "beta", vocab, cfg.max_len),
       encode_pair("gamma", "delta", vocab, cfg.max_len)},
      {0, 1}, grads);
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("loss_and_grad: confident correct prediction costs ~0") {
  const Vocab vocab = small_vocab();
  const ModelConfig cfg = small_config(vocab);
  ModelParams params = ModelParams::init(cfg, 7);
  params.cls_w.setZero();
  params.cls_b(0, 0) = -20.0f;
  params.cls_b(0, 1) = 20.0f;
  ModelParams grads = ModelParams::zeros(cfg);
  const float loss =
      loss_and_grad(params, cfg,
                    {encode_pair("alpha", "beta", vocab, cfg.max_len)}, {1},
                    grads);
  CHECK(loss <= 1e-6f);
}

TEST_CASE("grad check: finite differences agree and errors shrink as eps^2") {
  GradCheckConfig cfg;
  cfg.include_mlm = true;
  const auto at_eps = run_grad_check(cfg);
  GradCheckConfig coarse = cfg;
  coarse.epsilon = 3e-3;
  const auto at_3eps = run_grad_check(coarse);

  // truncation-dominated: tripling eps scales the worst error by ~9
  const double ratio = at_3eps.worst / at_eps.worst;
  CHECK(ratio > 4.0);
  CHECK(ratio < 20.0);

  // aggregate per-tensor error is tiny for every tensor with real gradient
  for (const auto& entry : at_eps.entries) {
    if (entry.analytic_l2 > 1e-6) {
      CHECK(entry.l2_rel_err < 1e-5);
    }
  }
  CHECK(at_eps.seconds < 30.0);
}

TEST_CASE("mlm: masked-position counts follow the floor rule") {
  const Vocab vocab = small_vocab();
  ModelConfig cfg = small_config(vocab);
  cfg.max_len = 32;

  // 20 non-special tokens at rate 0.15 -> exactly 3 masked
  std::string text;
  for (int i = 0; i < 10; ++i) text += "alpha ";
  const auto seq = encode_pair(text, text, vocab, cfg.max_len);
  size_t non_special = 0;
  for (int32_t id : seq.ids) non_special += !Vocab::is_special(id);
  REQUIRE(non_special == 20);

  CHECK(mlm_mask_positions({seq}, 0.15, 5).size() == 3);
  CHECK(mlm_mask_positions({seq}, 0.05, 5).size() == 1);
  CHECK(mlm_mask_positions({seq, seq}, 0.15, 5).size() == 6);
  // positions index non-special tokens and remember the original id
  for (const auto& pos : mlm_mask_positions({seq}, 0.15, 5)) {
    CHECK_FALSE(Vocab::is_special(seq.ids[pos.pos]));
    CHECK(pos.original == seq.ids[pos.pos]);
  }

  const ModelParams params = ModelParams::init(cfg, 11);
  ModelParams grads = ModelParams::zeros(cfg);
  const float loss = mlm_loss_and_grad(params, cfg, {seq}, 0.15, 5, grads);
  CHECK(std::isfinite(loss));
  CHECK(grads.lm_w.cwiseAbs().sum() > 0);
}

TEST_CASE("mlm: zero maskable positions is an error") {
  const Vocab vocab = small_vocab();
  const ModelConfig cfg = small_config(vocab);
  const ModelParams params = ModelParams::init(cfg, 11);
  const auto seq = encode_pair("alpha beta", "gamma", vocab, cfg.max_len);
  ModelParams grads = ModelParams::zeros(cfg);
  // rate low enough that floor(0.01 * 3) == 0 for every sequence
  CHECK_THROWS_AS(mlm_loss_and_grad(params, cfg, {seq}, 0.01, 5, grads),
                  ConfigError);
}

TEST_CASE("mlm: untrained loss sits near ln(vocab_size)") {
  Vocab vocab = Vocab::build(
      {"a b c d e f g h i j k l m n o p q r s t u v w x y z "
       "aa bb cc dd ee ff gg hh ii jj kk ll mm nn oo pp qq rr ss tt"},
      1, 1000);
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_blocks = 1;
  cfg.n_heads = 2;
  cfg.max_len = 32;
  cfg.vocab_size = static_cast<int>(vocab.size());
  const ModelParams params = ModelParams::init(cfg, 13);

  std::vector<InputSequence> batch;
  auto rng = Xoshiro256ss::seeded(4);
  for (int b = 0; b < 8; ++b) {
    std::string q, s;
    for (int i = 0; i < 8; ++i) {
      q += vocab.token(static_cast<int>(
               Vocab::kNumSpecials +
               rng.bounded(vocab.size() - Vocab::kNumSpecials))) +
           " ";
      s += vocab.token(static_cast<int>(
               Vocab::kNumSpecials +
               rng.bounded(vocab.size() - Vocab::kNumSpecials))) +
           " ";
    }
    batch.push_back(encode_pair(q, s, vocab, cfg.max_len));
  }
  ModelParams grads = ModelParams::zeros(cfg);
  const float loss = mlm_loss_and_grad(params, cfg, batch, 0.3, 17, grads);
  const float expected = std::log(static_cast<float>(vocab.size()));
  CHECK(loss == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("checkpoint: save -> load -> save is byte-identical") {
  const Vocab vocab = small_vocab();
  const ModelConfig cfg = small_config(vocab);
  const Checkpoint ckpt = fresh_checkpoint(cfg, vocab, 21);
  const std::string bytes = serialize_checkpoint(ckpt);
  const Checkpoint loaded = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(loaded) == bytes);
  CHECK(loaded.vocab.size() == vocab.size());
  CHECK(loaded.config.d_model == cfg.d_model);
}

TEST_CASE("checkpoint: truncation and corruption are detected") {
  const Vocab vocab = small_vocab();
  const Checkpoint ckpt = fresh_checkpoint(small_config(vocab), vocab, 2);
  std::string bytes = serialize_checkpoint(ckpt);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)),
                  DataError);
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint("not a checkpoint"), DataError);
}

TEST_CASE("model config validation") {
  ModelConfig cfg;
  cfg.vocab_size = 50;
  cfg.n_heads = 3;  // does not divide 64
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.n_heads = 4;
  cfg.max_len = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.max_len = 128;
  CHECK_NOTHROW(cfg.validate());
}
