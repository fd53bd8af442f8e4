#include "tanda/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tanda/errors.hpp"
#include "tanda/rng.hpp"

namespace tanda {

Precision precision_from_string(std::string_view name) {
  if (name == "f32") return Precision::F32;
  if (name == "f64") return Precision::F64;
  throw ConfigError("unknown precision: " + std::string(name));
}

std::string to_string(Precision p) {
  return p == Precision::F32 ? "f32" : "f64";
}

void ModelConfig::validate() const {
  if (d_model <= 0) throw ConfigError("d_model must be positive");
  if (n_blocks <= 0) throw ConfigError("n_blocks must be positive");
  if (n_heads <= 0 || d_model % n_heads != 0) {
    throw ConfigError("n_heads must divide d_model");
  }
  if (max_len < 4) throw ConfigError("max_len must be at least 4");
  if (vocab_size < Vocab::kNumSpecials) {
    throw ConfigError("vocab_size smaller than the special-token table");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
}

InputSequence encode_pair(const std::string& question,
                          const std::string& sentence, const Vocab& vocab,
                          int max_len) {
  if (max_len < 4) throw ConfigError("max_len must be at least 4");
  std::vector<int32_t> q_ids, s_ids;
  for (const auto& tok : tokenize(question)) q_ids.push_back(vocab.id(tok));
  for (const auto& tok : tokenize(sentence)) s_ids.push_back(vocab.id(tok));

  const size_t budget = static_cast<size_t>(max_len) - 3;
  while (q_ids.size() + s_ids.size() > budget) {
    if (q_ids.size() > s_ids.size()) {
      q_ids.pop_back();
    } else {
      s_ids.pop_back();
    }
  }

  InputSequence seq;
  seq.ids.reserve(q_ids.size() + s_ids.size() + 3);
  seq.ids.push_back(Vocab::kCls);
  seq.ids.insert(seq.ids.end(), q_ids.begin(), q_ids.end());
  seq.ids.push_back(Vocab::kSep);
  const size_t segment_split = seq.ids.size();  // [SEP] still segment 0
  seq.ids.insert(seq.ids.end(), s_ids.begin(), s_ids.end());
  seq.ids.push_back(Vocab::kEos);
  seq.segments.assign(seq.ids.size(), 1);
  for (size_t i = 0; i < segment_split; ++i) seq.segments[i] = 0;
  return seq;
}

template <class S>
ModelParamsT<S> ModelParamsT<S>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model;
  const int f = cfg.ffn_dim();
  ModelParamsT<S> p;
  p.tok_emb = MatRM<S>::Zero(cfg.vocab_size, d);
  p.pos_emb = MatRM<S>::Zero(cfg.max_len, d);
  p.seg_emb = MatRM<S>::Zero(2, d);
  p.ln_emb_gain = MatRM<S>::Zero(1, d);
  p.ln_emb_bias = MatRM<S>::Zero(1, d);
  p.blocks.resize(static_cast<size_t>(cfg.n_blocks));
  for (auto& b : p.blocks) {
    b.wq = MatRM<S>::Zero(d, d);
    b.wk = MatRM<S>::Zero(d, d);
    b.wv = MatRM<S>::Zero(d, d);
    b.wo = MatRM<S>::Zero(d, d);
    b.bq = MatRM<S>::Zero(1, d);
    b.bk = MatRM<S>::Zero(1, d);
    b.bv = MatRM<S>::Zero(1, d);
    b.bo = MatRM<S>::Zero(1, d);
    b.ln1_gain = MatRM<S>::Zero(1, d);
    b.ln1_bias = MatRM<S>::Zero(1, d);
    b.ff1_w = MatRM<S>::Zero(d, f);
    b.ff1_b = MatRM<S>::Zero(1, f);
    b.ff2_w = MatRM<S>::Zero(f, d);
    b.ff2_b = MatRM<S>::Zero(1, d);
    b.ln2_gain = MatRM<S>::Zero(1, d);
    b.ln2_bias = MatRM<S>::Zero(1, d);
  }
  p.cls_w = MatRM<S>::Zero(d, 2);
  p.cls_b = MatRM<S>::Zero(1, 2);
  p.lm_w = MatRM<S>::Zero(d, cfg.vocab_size);
  p.lm_b = MatRM<S>::Zero(1, cfg.vocab_size);
  return p;
}

template <class S>
ModelParamsT<S> ModelParamsT<S>::init(const ModelConfig& cfg, uint64_t seed,
                                      double sigma) {
  ModelParamsT<S> p = zeros(cfg);
  auto rng = Xoshiro256ss::seeded(seed);
  // Truncated normal for weights, zeros for biases, ones for layer-norm
  // gains. Tensor order is the for_each_tensor order.
  p.for_each_tensor([&](const std::string& name, MatRM<S>& tensor) {
    const size_t dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    const bool is_gain = leaf.find("gain") != std::string::npos;
    const bool is_bias = leaf.find("bias") != std::string::npos ||
                         leaf.ends_with("_b") ||
                         (leaf.size() == 2 && leaf[0] == 'b');
    if (is_gain) {
      tensor.setOnes();
    } else if (is_bias) {
      tensor.setZero();
    } else {
      for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
        for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
          tensor(r, c) = static_cast<S>(rng.truncated_normal(sigma));
        }
      }
    }
  });
  return p;
}

template <class S>
size_t ModelParamsT<S>::parameter_count() const {
  size_t count = 0;
  for_each_tensor([&](const std::string&, const MatRM<S>& tensor) {
    count += static_cast<size_t>(tensor.size());
  });
  return count;
}

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <class S>
struct PackedBatch {
  Eigen::Index n_seqs = 0;
  Eigen::Index width = 0;  // max sequence length in the batch
  std::vector<Eigen::Index> len;
  std::vector<int32_t> ids;   // n_seqs * width, PAD filled
  std::vector<int8_t> segs;   // n_seqs * width, 0 filled
  Eigen::Index rows() const { return n_seqs * width; }
};

template <class S>
PackedBatch<S> pack(const std::vector<InputSequence>& batch,
                    const ModelConfig& cfg) {
  PackedBatch<S> packed;
  packed.n_seqs = static_cast<Eigen::Index>(batch.size());
  for (const auto& seq : batch) {
    if (seq.ids.empty() || seq.ids.size() != seq.segments.size()) {
      throw ConfigError("malformed input sequence");
    }
    if (seq.ids.size() > static_cast<size_t>(cfg.max_len)) {
      throw ConfigError("sequence longer than max_len");
    }
    packed.width = std::max(packed.width,
                            static_cast<Eigen::Index>(seq.ids.size()));
  }
  packed.ids.assign(static_cast<size_t>(packed.rows()), Vocab::kPad);
  packed.segs.assign(static_cast<size_t>(packed.rows()), 0);
  packed.len.resize(batch.size());
  for (size_t b = 0; b < batch.size(); ++b) {
    packed.len[b] = static_cast<Eigen::Index>(batch[b].ids.size());
    const size_t base = b * static_cast<size_t>(packed.width);
    for (size_t t = 0; t < batch[b].ids.size(); ++t) {
      const int32_t id = batch[b].ids[t];
      if (id < 0 || id >= cfg.vocab_size) {
        throw ConfigError("token id out of vocab range");
      }
      packed.ids[base + t] = id;
      packed.segs[base + t] = batch[b].segments[t];
    }
  }
  return packed;
}

template <class S>
struct LnCache {
  MatRM<S> xhat;          // normalized rows
  std::vector<S> rstd;    // per row
};

template <class S>
void layer_norm_forward(const MatRM<S>& x, const MatRM<S>& gain,
                        const MatRM<S>& bias, MatRM<S>& y, LnCache<S>& cache) {
  const Eigen::Index cols = x.cols();
  y.resize(x.rows(), cols);
  cache.xhat.resize(x.rows(), cols);
  cache.rstd.resize(static_cast<size_t>(x.rows()));
  const S inv_d = S(1) / static_cast<S>(cols);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S mu = x.row(r).sum() * inv_d;
    const auto centered = (x.row(r).array() - mu).eval();
    const S var = (centered * centered).sum() * inv_d;
    const S rstd = S(1) / std::sqrt(var + static_cast<S>(kLnEps));
    cache.rstd[static_cast<size_t>(r)] = rstd;
    cache.xhat.row(r) = (centered * rstd).matrix();
    y.row(r) = (cache.xhat.row(r).array() * gain.row(0).array() +
                bias.row(0).array())
                   .matrix();
  }
}

template <class S>
void layer_norm_backward(const MatRM<S>& dy, const LnCache<S>& cache,
                         const MatRM<S>& gain, MatRM<S>& dx, MatRM<S>& dgain,
                         MatRM<S>& dbias) {
  const Eigen::Index cols = dy.cols();
  dx.resize(dy.rows(), cols);
  const S inv_d = S(1) / static_cast<S>(cols);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const auto dxhat = (dy.row(r).array() * gain.row(0).array()).eval();
    const auto xhat = cache.xhat.row(r).array();
    const S mean_dxhat = dxhat.sum() * inv_d;
    const S mean_dxhat_xhat = (dxhat * xhat).sum() * inv_d;
    dx.row(r) = (cache.rstd[static_cast<size_t>(r)] *
                 (dxhat - mean_dxhat - xhat * mean_dxhat_xhat))
                    .matrix();
    dgain.row(0).array() += dy.row(r).array() * xhat;
    dbias.row(0).array() += dy.row(r).array();
  }
}

template <class S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * static_cast<S>(kInvSqrt2)));
}

template <class S>
S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * static_cast<S>(kInvSqrt2)));
  const S pdf = std::exp(S(-0.5) * x * x) * static_cast<S>(kInvSqrt2Pi);
  return cdf + x * pdf;
}

template <class S>
void softmax_rows_inplace(Eigen::Ref<MatRM<S>> m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const S max = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - max).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

template <class S>
struct BlockCache {
  MatRM<S> input;                           // rows x d
  MatRM<S> q, k, v, ctx;                    // rows x d, valid per-seq slices
  std::vector<std::vector<MatRM<S>>> probs; // [seq][head], len x len
  MatRM<S> attn_drop_mask;
  MatRM<S> h1;                              // post LN1
  LnCache<S> ln1;
  MatRM<S> z;                               // rows x 4d pre-gelu
  MatRM<S> act;                             // rows x 4d post-gelu
  MatRM<S> ffn_drop_mask;
  LnCache<S> ln2;
  MatRM<S> output;                          // rows x d
};

template <class S>
struct EncoderCache {
  PackedBatch<S> packed;
  MatRM<S> x0;             // embedding sum, pre-LN
  LnCache<S> ln_emb;
  MatRM<S> h0;             // post embedding LN (and dropout)
  MatRM<S> emb_drop_mask;
  std::vector<BlockCache<S>> blocks;
  const MatRM<S>& final_hidden() const {
    return blocks.empty() ? h0 : blocks.back().output;
  }
};

template <class S>
class DropoutStream {
 public:
  DropoutStream(const DropoutSpec& spec)
      : active_(spec.enabled && spec.rate > 0.0),
        rate_(static_cast<S>(spec.rate)),
        rng_(Xoshiro256ss::seeded(spec.seed)) {}

  bool active() const { return active_; }

  // Applies inverted dropout in place and returns the mask for backward.
  MatRM<S> apply(MatRM<S>& m) {
    MatRM<S> mask(m.rows(), m.cols());
    const S scale = S(1) / (S(1) - rate_);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        mask(r, c) = static_cast<S>(rng_.unit()) < rate_ ? S(0) : scale;
      }
    }
    m = m.cwiseProduct(mask);
    return mask;
  }

 private:
  bool active_;
  S rate_;
  Xoshiro256ss rng_;
};

template <class S>
void encoder_forward(const ModelParamsT<S>& params, const ModelConfig& cfg,
                     const std::vector<InputSequence>& batch,
                     const DropoutSpec& dropout, EncoderCache<S>& cache) {
  cfg.validate();
  if (batch.empty()) throw ConfigError("empty batch");
  cache.packed = pack<S>(batch, cfg);
  const auto& packed = cache.packed;
  const Eigen::Index rows = packed.rows();
  const Eigen::Index d = cfg.d_model;
  const int heads = cfg.n_heads;
  const Eigen::Index dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  DropoutStream<S> drops(dropout);

  cache.x0.resize(rows, d);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index t = r % packed.width;
    cache.x0.row(r) = params.tok_emb.row(packed.ids[static_cast<size_t>(r)]) +
                      params.pos_emb.row(t) +
                      params.seg_emb.row(packed.segs[static_cast<size_t>(r)]);
  }
  layer_norm_forward(cache.x0, params.ln_emb_gain, params.ln_emb_bias,
                     cache.h0, cache.ln_emb);
  if (drops.active()) cache.emb_drop_mask = drops.apply(cache.h0);

  cache.blocks.clear();
  cache.blocks.resize(params.blocks.size());
  const MatRM<S>* hidden = &cache.h0;
  for (size_t bi = 0; bi < params.blocks.size(); ++bi) {
    const auto& bp = params.blocks[bi];
    auto& bc = cache.blocks[bi];
    bc.input = *hidden;

    bc.q = MatRM<S>::Zero(rows, d);
    bc.k = MatRM<S>::Zero(rows, d);
    bc.v = MatRM<S>::Zero(rows, d);
    bc.ctx = MatRM<S>::Zero(rows, d);
    bc.probs.assign(static_cast<size_t>(packed.n_seqs), {});

    MatRM<S> attn_out = MatRM<S>::Zero(rows, d);
    for (Eigen::Index seq = 0; seq < packed.n_seqs; ++seq) {
      const Eigen::Index base = seq * packed.width;
      const Eigen::Index len = packed.len[static_cast<size_t>(seq)];
      const auto x = bc.input.middleRows(base, len);
      bc.q.middleRows(base, len).noalias() = x * bp.wq;
      bc.q.middleRows(base, len).rowwise() += bp.bq.row(0);
      bc.k.middleRows(base, len).noalias() = x * bp.wk;
      bc.k.middleRows(base, len).rowwise() += bp.bk.row(0);
      bc.v.middleRows(base, len).noalias() = x * bp.wv;
      bc.v.middleRows(base, len).rowwise() += bp.bv.row(0);

      auto& seq_probs = bc.probs[static_cast<size_t>(seq)];
      seq_probs.resize(static_cast<size_t>(heads));
      for (int h = 0; h < heads; ++h) {
        const auto qh = bc.q.block(base, h * dh, len, dh);
        const auto kh = bc.k.block(base, h * dh, len, dh);
        const auto vh = bc.v.block(base, h * dh, len, dh);
        MatRM<S>& p = seq_probs[static_cast<size_t>(h)];
        p.noalias() = qh * kh.transpose();
        p *= scale;
        softmax_rows_inplace<S>(p);
        bc.ctx.block(base, h * dh, len, dh).noalias() = p * vh;
      }
      attn_out.middleRows(base, len).noalias() =
          bc.ctx.middleRows(base, len) * bp.wo;
      attn_out.middleRows(base, len).rowwise() += bp.bo.row(0);
    }
    if (drops.active()) bc.attn_drop_mask = drops.apply(attn_out);

    MatRM<S> r1 = bc.input + attn_out;
    layer_norm_forward(r1, bp.ln1_gain, bp.ln1_bias, bc.h1, bc.ln1);

    bc.z.noalias() = bc.h1 * bp.ff1_w;
    bc.z.rowwise() += bp.ff1_b.row(0);
    bc.act = bc.z.unaryExpr([](S x) { return gelu(x); });
    MatRM<S> ffn_out;
    ffn_out.noalias() = bc.act * bp.ff2_w;
    ffn_out.rowwise() += bp.ff2_b.row(0);
    if (drops.active()) bc.ffn_drop_mask = drops.apply(ffn_out);

    MatRM<S> r2 = bc.h1 + ffn_out;
    layer_norm_forward(r2, bp.ln2_gain, bp.ln2_bias, bc.output, bc.ln2);
    hidden = &bc.output;
  }
}

// dH is the gradient at the final hidden states; padded rows must be zero.
template <class S>
void encoder_backward(const ModelParamsT<S>& params, const ModelConfig& cfg,
                      const EncoderCache<S>& cache, MatRM<S> dh,
                      ModelParamsT<S>& grads) {
  const auto& packed = cache.packed;
  const Eigen::Index d = cfg.d_model;
  const int heads = cfg.n_heads;
  const Eigen::Index dh_dim = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh_dim));

  for (size_t bi = params.blocks.size(); bi-- > 0;) {
    const auto& bp = params.blocks[bi];
    const auto& bc = cache.blocks[bi];
    auto& bg = grads.blocks[bi];

    // LN2
    MatRM<S> dr2;
    layer_norm_backward(dh, bc.ln2, bp.ln2_gain, dr2, bg.ln2_gain, bg.ln2_bias);

    // FFN (residual: r2 = h1 + dropout(ffn_out))
    MatRM<S> dffn = dr2;
    if (bc.ffn_drop_mask.size() > 0) dffn = dffn.cwiseProduct(bc.ffn_drop_mask);
    bg.ff2_b.row(0) += dffn.colwise().sum();
    bg.ff2_w.noalias() += bc.act.transpose() * dffn;
    MatRM<S> dact;
    dact.noalias() = dffn * bp.ff2_w.transpose();
    MatRM<S> dz = dact.cwiseProduct(
        bc.z.unaryExpr([](S x) { return gelu_grad(x); }));
    bg.ff1_b.row(0) += dz.colwise().sum();
    bg.ff1_w.noalias() += bc.h1.transpose() * dz;
    MatRM<S> dh1 = dr2;  // residual path
    dh1.noalias() += dz * bp.ff1_w.transpose();

    // LN1
    MatRM<S> dr1;
    layer_norm_backward(dh1, bc.ln1, bp.ln1_gain, dr1, bg.ln1_gain, bg.ln1_bias);

    // Attention (residual: r1 = input + dropout(attn_out))
    MatRM<S> dattn = dr1;
    if (bc.attn_drop_mask.size() > 0) {
      dattn = dattn.cwiseProduct(bc.attn_drop_mask);
    }
    MatRM<S> dinput = dr1;  // residual path
    for (Eigen::Index seq = 0; seq < packed.n_seqs; ++seq) {
      const Eigen::Index base = seq * packed.width;
      const Eigen::Index len = packed.len[static_cast<size_t>(seq)];
      const auto da = dattn.middleRows(base, len);
      const auto ctx = bc.ctx.middleRows(base, len);
      bg.bo.row(0) += da.colwise().sum();
      bg.wo.noalias() += ctx.transpose() * da;
      MatRM<S> dctx;
      dctx.noalias() = da * bp.wo.transpose();

      MatRM<S> dq = MatRM<S>::Zero(len, d);
      MatRM<S> dk = MatRM<S>::Zero(len, d);
      MatRM<S> dv = MatRM<S>::Zero(len, d);
      const auto& seq_probs = bc.probs[static_cast<size_t>(seq)];
      for (int h = 0; h < heads; ++h) {
        const auto qh = bc.q.block(base, h * dh_dim, len, dh_dim);
        const auto kh = bc.k.block(base, h * dh_dim, len, dh_dim);
        const auto vh = bc.v.block(base, h * dh_dim, len, dh_dim);
        const MatRM<S>& p = seq_probs[static_cast<size_t>(h)];
        const auto dctx_h = dctx.block(0, h * dh_dim, len, dh_dim);

        MatRM<S> dp;
        dp.noalias() = dctx_h * vh.transpose();
        dv.block(0, h * dh_dim, len, dh_dim).noalias() =
            p.transpose() * dctx_h;
        // softmax jacobian, row-wise
        MatRM<S> ds(len, len);
        for (Eigen::Index r = 0; r < len; ++r) {
          const S dot = dp.row(r).cwiseProduct(p.row(r)).sum();
          ds.row(r) = ((dp.row(r).array() - dot) * p.row(r).array()).matrix();
        }
        dq.block(0, h * dh_dim, len, dh_dim).noalias() = ds * kh * scale;
        dk.block(0, h * dh_dim, len, dh_dim).noalias() =
            ds.transpose() * qh * scale;
      }
      const auto x = bc.input.middleRows(base, len);
      bg.bq.row(0) += dq.colwise().sum();
      bg.bk.row(0) += dk.colwise().sum();
      bg.bv.row(0) += dv.colwise().sum();
      bg.wq.noalias() += x.transpose() * dq;
      bg.wk.noalias() += x.transpose() * dk;
      bg.wv.noalias() += x.transpose() * dv;
      dinput.middleRows(base, len).noalias() += dq * bp.wq.transpose();
      dinput.middleRows(base, len).noalias() += dk * bp.wk.transpose();
      dinput.middleRows(base, len).noalias() += dv * bp.wv.transpose();
    }
    dh = std::move(dinput);
  }

  if (cache.emb_drop_mask.size() > 0) dh = dh.cwiseProduct(cache.emb_drop_mask);
  MatRM<S> dx0;
  layer_norm_backward(dh, cache.ln_emb, params.ln_emb_gain, dx0,
                      grads.ln_emb_gain, grads.ln_emb_bias);
  for (Eigen::Index seq = 0; seq < packed.n_seqs; ++seq) {
    const Eigen::Index base = seq * packed.width;
    const Eigen::Index len = packed.len[static_cast<size_t>(seq)];
    for (Eigen::Index t = 0; t < len; ++t) {
      const Eigen::Index r = base + t;
      grads.tok_emb.row(packed.ids[static_cast<size_t>(r)]) += dx0.row(r);
      grads.pos_emb.row(t) += dx0.row(r);
      grads.seg_emb.row(packed.segs[static_cast<size_t>(r)]) += dx0.row(r);
    }
  }
}

// Pooled classifier head on the [CLS] hidden state: softmax(tanh(x)*W + B).
template <class S>
struct HeadCache {
  MatRM<S> pooled;  // B x d, tanh applied
  MatRM<S> probs;   // B x 2
};

template <class S>
HeadCache<S> head_forward(const ModelParamsT<S>& params,
                          const EncoderCache<S>& cache) {
  const auto& hidden = cache.final_hidden();
  const Eigen::Index n_seqs = cache.packed.n_seqs;
  HeadCache<S> head;
  head.pooled.resize(n_seqs, hidden.cols());
  for (Eigen::Index seq = 0; seq < n_seqs; ++seq) {
    head.pooled.row(seq) =
        hidden.row(seq * cache.packed.width).array().tanh().matrix();
  }
  head.probs.noalias() = head.pooled * params.cls_w;
  head.probs.rowwise() += params.cls_b.row(0);
  softmax_rows_inplace<S>(head.probs);
  return head;
}

}  // namespace

template <class S>
MatRM<S> forward(const ModelParamsT<S>& params, const ModelConfig& cfg,
                 const std::vector<InputSequence>& batch,
                 const DropoutSpec& dropout) {
  EncoderCache<S> cache;
  encoder_forward(params, cfg, batch, dropout, cache);
  return head_forward(params, cache).probs;
}

template <class S>
S loss_and_grad(const ModelParamsT<S>& params, const ModelConfig& cfg,
                const std::vector<InputSequence>& batch,
                const std::vector<int>& labels, ModelParamsT<S>& grads,
                const DropoutSpec& dropout) {
  if (labels.size() != batch.size()) {
    throw ConfigError("labels/batch size mismatch");
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw ConfigError("label must be 0 or 1 at batch index " +
                        std::to_string(i));
    }
  }
  EncoderCache<S> cache;
  encoder_forward(params, cfg, batch, dropout, cache);
  HeadCache<S> head = head_forward(params, cache);

  const Eigen::Index n = head.probs.rows();
  S loss = S(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const S p = head.probs(i, labels[static_cast<size_t>(i)]);
    const S term = -std::log(std::max(p, std::numeric_limits<S>::min()));
    if (!std::isfinite(term)) {
      throw NumericError("non-finite loss at batch index " + std::to_string(i));
    }
    loss += term;
  }
  loss /= static_cast<S>(n);

  // dlogits = (probs - onehot) / n; softmax+CE fused.
  MatRM<S> dlogits = head.probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    dlogits(i, labels[static_cast<size_t>(i)]) -= S(1);
  }
  dlogits /= static_cast<S>(n);

  grads.cls_b.row(0) += dlogits.colwise().sum();
  grads.cls_w.noalias() += head.pooled.transpose() * dlogits;
  MatRM<S> dpooled;
  dpooled.noalias() = dlogits * params.cls_w.transpose();
  dpooled = dpooled.cwiseProduct(
      (MatRM<S>::Ones(n, cfg.d_model) - head.pooled.cwiseProduct(head.pooled)));

  MatRM<S> dh = MatRM<S>::Zero(cache.packed.rows(), cfg.d_model);
  for (Eigen::Index seq = 0; seq < n; ++seq) {
    dh.row(seq * cache.packed.width) = dpooled.row(seq);
  }
  encoder_backward(params, cfg, cache, std::move(dh), grads);
  return loss;
}

std::vector<MaskedPosition> mlm_mask_positions(
    const std::vector<InputSequence>& batch, double mask_rate, uint64_t seed) {
  if (mask_rate <= 0.0 || mask_rate >= 1.0) {
    throw ConfigError("mask_rate must lie in (0, 1)");
  }
  // Per sequence: floor(mask_rate * maskable) positions among the
  // non-special tokens, chosen by the seeded sampler in batch order.
  auto rng = Xoshiro256ss::seeded(seed);
  std::vector<MaskedPosition> positions;
  for (size_t b = 0; b < batch.size(); ++b) {
    std::vector<size_t> maskable;
    for (size_t t = 0; t < batch[b].ids.size(); ++t) {
      if (!Vocab::is_special(batch[b].ids[t])) maskable.push_back(t);
    }
    const size_t k = static_cast<size_t>(
        std::floor(mask_rate * static_cast<double>(maskable.size())));
    if (k == 0) continue;
    auto chosen = sample_without_replacement(maskable.size(), k, rng);
    std::sort(chosen.begin(), chosen.end());
    for (size_t pick : chosen) {
      const size_t t = maskable[pick];
      positions.push_back({b, t, batch[b].ids[t]});
    }
  }
  return positions;
}

template <class S>
S mlm_loss_and_grad(const ModelParamsT<S>& params, const ModelConfig& cfg,
                    const std::vector<InputSequence>& batch, double mask_rate,
                    uint64_t seed, ModelParamsT<S>& grads) {
  const std::vector<MaskedPosition> positions =
      mlm_mask_positions(batch, mask_rate, seed);
  if (positions.empty()) {
    throw ConfigError("no maskable position in batch (mask_rate too low?)");
  }
  std::vector<InputSequence> masked = batch;
  for (const auto& pos : positions) {
    masked[pos.seq].ids[pos.pos] = Vocab::kMask;
  }

  EncoderCache<S> cache;
  encoder_forward(params, cfg, masked, {}, cache);
  const auto& hidden = cache.final_hidden();

  const Eigen::Index m = static_cast<Eigen::Index>(positions.size());
  MatRM<S> gathered(m, cfg.d_model);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& pos = positions[static_cast<size_t>(i)];
    gathered.row(i) =
        hidden.row(static_cast<Eigen::Index>(pos.seq) * cache.packed.width +
                   static_cast<Eigen::Index>(pos.pos));
  }
  MatRM<S> logits;
  logits.noalias() = gathered * params.lm_w;
  logits.rowwise() += params.lm_b.row(0);
  softmax_rows_inplace<S>(logits);

  S loss = S(0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const S p = logits(i, positions[static_cast<size_t>(i)].original);
    loss += -std::log(std::max(p, std::numeric_limits<S>::min()));
  }
  loss /= static_cast<S>(m);
  if (!std::isfinite(loss)) throw NumericError("non-finite masked-lm loss");

  MatRM<S>& dlogits = logits;
  for (Eigen::Index i = 0; i < m; ++i) {
    dlogits(i, positions[static_cast<size_t>(i)].original) -= S(1);
  }
  dlogits /= static_cast<S>(m);

  grads.lm_b.row(0) += dlogits.colwise().sum();
  grads.lm_w.noalias() += gathered.transpose() * dlogits;
  MatRM<S> dgathered;
  dgathered.noalias() = dlogits * params.lm_w.transpose();

  MatRM<S> dh = MatRM<S>::Zero(cache.packed.rows(), cfg.d_model);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& pos = positions[static_cast<size_t>(i)];
    dh.row(static_cast<Eigen::Index>(pos.seq) * cache.packed.width +
           static_cast<Eigen::Index>(pos.pos)) += dgathered.row(i);
  }
  encoder_backward(params, cfg, cache, std::move(dh), grads);
  return loss;
}

template struct ModelParamsT<float>;
template struct ModelParamsT<double>;

template MatRM<float> forward<float>(const ModelParamsT<float>&,
                                     const ModelConfig&,
                                     const std::vector<InputSequence>&,
                                     const DropoutSpec&);
template MatRM<double> forward<double>(const ModelParamsT<double>&,
                                       const ModelConfig&,
                                       const std::vector<InputSequence>&,
                                       const DropoutSpec&);
template float loss_and_grad<float>(const ModelParamsT<float>&,
                                    const ModelConfig&,
                                    const std::vector<InputSequence>&,
                                    const std::vector<int>&,
                                    ModelParamsT<float>&, const DropoutSpec&);
template double loss_and_grad<double>(const ModelParamsT<double>&,
                                      const ModelConfig&,
                                      const std::vector<InputSequence>&,
                                      const std::vector<int>&,
                                      ModelParamsT<double>&,
                                      const DropoutSpec&);
template float mlm_loss_and_grad<float>(const ModelParamsT<float>&,
                                        const ModelConfig&,
                                        const std::vector<InputSequence>&,
                                        double, uint64_t, ModelParamsT<float>&);
template double mlm_loss_and_grad<double>(const ModelParamsT<double>&,
                                          const ModelConfig&,
                                          const std::vector<InputSequence>&,
                                          double, uint64_t,
                                          ModelParamsT<double>&);

}  // namespace tanda
