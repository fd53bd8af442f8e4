#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tanda/vocab.hpp"

namespace tanda {

enum class Precision { F32, F64 };

Precision precision_from_string(std::string_view name);
std::string to_string(Precision p);

struct ModelConfig {
  int d_model = 64;
  int n_blocks = 2;
  int n_heads = 4;
  int max_len = 128;
  int vocab_size = 0;
  double dropout = 0.0;
  Precision precision = Precision::F32;

  int ffn_dim() const { return 4 * d_model; }
  void validate() const;
};

// Packed text pair: [CLS] q-tokens [SEP] s-tokens [EOS]. Segment 0 up to and
// including the [SEP], segment 1 after. No padding is stored; batching pads.
struct InputSequence {
  std::vector<int32_t> ids;
  std::vector<int8_t> segments;
  size_t size() const { return ids.size(); }
};

// Over-length pairs are truncated by repeatedly dropping the last token of
// the currently longer segment (the sentence on ties) until they fit.
InputSequence encode_pair(const std::string& question,
                          const std::string& sentence, const Vocab& vocab,
                          int max_len);

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct BlockParamsT {
  MatRM<S> wq, wk, wv, wo;      // d x d
  MatRM<S> bq, bk, bv, bo;      // 1 x d
  MatRM<S> ln1_gain, ln1_bias;  // 1 x d
  MatRM<S> ff1_w;               // d x 4d
  MatRM<S> ff1_b;               // 1 x 4d
  MatRM<S> ff2_w;               // 4d x d
  MatRM<S> ff2_b;               // 1 x d
  MatRM<S> ln2_gain, ln2_bias;  // 1 x d
};

// All trainable tensors. The classifier stores W_T transposed (d x 2) so the
// head computes logits = tanh(x) * cls_w + cls_b on row vectors.
template <class S>
struct ModelParamsT {
  MatRM<S> tok_emb;                     // V x d
  MatRM<S> pos_emb;                     // max_len x d
  MatRM<S> seg_emb;                     // 2 x d
  MatRM<S> ln_emb_gain, ln_emb_bias;    // 1 x d
  std::vector<BlockParamsT<S>> blocks;
  MatRM<S> cls_w;                       // d x 2
  MatRM<S> cls_b;                       // 1 x 2
  MatRM<S> lm_w;                        // d x V
  MatRM<S> lm_b;                        // 1 x V

  static ModelParamsT init(const ModelConfig& cfg, uint64_t seed,
                           double sigma = 0.02);
  static ModelParamsT zeros(const ModelConfig& cfg);

  size_t parameter_count() const;

  template <class F>
  void for_each_tensor(F&& fn) {
    fn("tok_emb", tok_emb);
    fn("pos_emb", pos_emb);
    fn("seg_emb", seg_emb);
    fn("ln_emb_gain", ln_emb_gain);
    fn("ln_emb_bias", ln_emb_bias);
    for (size_t i = 0; i < blocks.size(); ++i) {
      const std::string prefix = "block" + std::to_string(i) + ".";
      auto& b = blocks[i];
      fn(prefix + "wq", b.wq);
      fn(prefix + "wk", b.wk);
      fn(prefix + "wv", b.wv);
      fn(prefix + "wo", b.wo);
      fn(prefix + "bq", b.bq);
      fn(prefix + "bk", b.bk);
      fn(prefix + "bv", b.bv);
      fn(prefix + "bo", b.bo);
      fn(prefix + "ln1_gain", b.ln1_gain);
      fn(prefix + "ln1_bias", b.ln1_bias);
      fn(prefix + "ff1_w", b.ff1_w);
      fn(prefix + "ff1_b", b.ff1_b);
      fn(prefix + "ff2_w", b.ff2_w);
      fn(prefix + "ff2_b", b.ff2_b);
      fn(prefix + "ln2_gain", b.ln2_gain);
      fn(prefix + "ln2_bias", b.ln2_bias);
    }
    fn("cls_w", cls_w);
    fn("cls_b", cls_b);
    fn("lm_w", lm_w);
    fn("lm_b", lm_b);
  }

  template <class F>
  void for_each_tensor(F&& fn) const {
    const_cast<ModelParamsT*>(this)->for_each_tensor(
        [&](const std::string& name, MatRM<S>& tensor) {
          fn(name, static_cast<const MatRM<S>&>(tensor));
        });
  }

  template <class T>
  ModelParamsT<T> cast() const {
    ModelParamsT<T> out;
    auto convert = [](const MatRM<S>& m) { return m.template cast<T>().eval(); };
    out.tok_emb = convert(tok_emb);
    out.pos_emb = convert(pos_emb);
    out.seg_emb = convert(seg_emb);
    out.ln_emb_gain = convert(ln_emb_gain);
    out.ln_emb_bias = convert(ln_emb_bias);
    for (const auto& b : blocks) {
      BlockParamsT<T> nb;
      nb.wq = convert(b.wq);
      nb.wk = convert(b.wk);
      nb.wv = convert(b.wv);
      nb.wo = convert(b.wo);
      nb.bq = convert(b.bq);
      nb.bk = convert(b.bk);
      nb.bv = convert(b.bv);
      nb.bo = convert(b.bo);
      nb.ln1_gain = convert(b.ln1_gain);
      nb.ln1_bias = convert(b.ln1_bias);
      nb.ff1_w = convert(b.ff1_w);
      nb.ff1_b = convert(b.ff1_b);
      nb.ff2_w = convert(b.ff2_w);
      nb.ff2_b = convert(b.ff2_b);
      nb.ln2_gain = convert(b.ln2_gain);
      nb.ln2_bias = convert(b.ln2_bias);
      out.blocks.push_back(std::move(nb));
    }
    out.cls_w = convert(cls_w);
    out.cls_b = convert(cls_b);
    out.lm_w = convert(lm_w);
    out.lm_b = convert(lm_b);
    return out;
  }
};

using ModelParams = ModelParamsT<float>;

// Dropout is active only when `enabled` (training with the nondeterministic
// path); the mask stream is seeded so a given step is reproducible.
struct DropoutSpec {
  bool enabled = false;
  double rate = 0.0;
  uint64_t seed = 0;
};

// Class probabilities, one row per sequence, rows sum to 1. p(q,s) is
// column 1.
template <class S>
MatRM<S> forward(const ModelParamsT<S>& params, const ModelConfig& cfg,
                 const std::vector<InputSequence>& batch,
                 const DropoutSpec& dropout = {});

// Mean cross-entropy over the batch plus gradients for every tensor
// (accumulated into `grads`, which must be zeros-shaped like params).
// Throws NumericError if the loss is not finite.
template <class S>
S loss_and_grad(const ModelParamsT<S>& params, const ModelConfig& cfg,
                const std::vector<InputSequence>& batch,
                const std::vector<int>& labels, ModelParamsT<S>& grads,
                const DropoutSpec& dropout = {});

// Seeded mask selection: per sequence, floor(mask_rate * n) of its n
// non-special tokens, chosen with the shared sampler in batch order.
struct MaskedPosition {
  size_t seq;
  size_t pos;
  int32_t original;
};
std::vector<MaskedPosition> mlm_mask_positions(
    const std::vector<InputSequence>& batch, double mask_rate, uint64_t seed);

// Masked-LM objective: the selected positions are replaced by [MASK] and the
// loss is the mean cross-entropy of the original ids there. Throws
// ConfigError when the batch has no maskable position.
template <class S>
S mlm_loss_and_grad(const ModelParamsT<S>& params, const ModelConfig& cfg,
                    const std::vector<InputSequence>& batch, double mask_rate,
                    uint64_t seed, ModelParamsT<S>& grads);

}  // namespace tanda
