#pragma once

// The two UNMT objective terms. Denoising reconstruction (lm) and round-trip
// back-translation (bt); their unweighted sum is the training loss L^s.

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "metaumt/data/batching.hpp"
#include "metaumt/data/noise.hpp"
#include "metaumt/model/mlm.hpp"
#include "metaumt/model/transformer.hpp"

namespace metaumt {

struct LossBundle {
  Tensor lm_loss;
  Tensor bt_loss;
  Tensor total;
  std::size_t lm_tokens = 0;
  std::size_t bt_tokens = 0;
};

struct UnmtLossConfig {
  NoiseConfig noise;
  std::size_t tokens_per_batch = 512;
  std::size_t decode_extra = 4;  // generation budget beyond the input length
};

/// Pseudo-parallel sentences produced by the current model.
struct PseudoPairs {
  std::vector<Sentence> src_from_tgt;  // u = M_{t->s}(y)
  std::vector<Sentence> tgt_from_src;  // v = M_{s->t}(x)
};

namespace detail {

inline std::size_t decode_budget(const std::vector<Sentence>& rows, std::size_t extra) {
  std::size_t longest = 0;
  for (const auto& r : rows) longest = std::max(longest, r.size());
  return longest + extra;
}

inline std::size_t with_eos(const std::vector<Sentence>& rows) { return token_count(rows) + rows.size(); }

}  // namespace detail

/// E[-log M_{s->s}(x|C(x))] + E[-log M_{t->t}(y|C(y))], batch means.
inline Tensor lm_loss(Tape<float>& tape, const SharedEncDec& model, const ParamSet& p, const TokenBatch& src_batch,
                      const TokenBatch& tgt_batch, const NoiseConfig& noise, Rng& rng, bool training = true) {
  if (src_batch.empty() || tgt_batch.empty()) throw EmptyBatchError("lm_loss: empty batch");
  const ForwardOptions opt{training, &rng};
  auto term = [&](const TokenBatch& batch, Lang lang) {
    std::vector<Sentence> clean = batch.sentences();
    std::vector<Sentence> noisy;
    noisy.reserve(clean.size());
    for (const auto& s : clean) noisy.push_back(add_noise(s, noise, rng));
    return model.seq2seq_loss(tape, p, noisy, lang, clean, lang, opt);
  };
  Tensor ls = term(src_batch, Lang::src);
  Tensor lt = term(tgt_batch, Lang::tgt);
  return ops::add(tape, ls, lt);
}

/// Greedy, gradient-free generation of both pseudo sides.
inline PseudoPairs generate_pseudo_pairs(const SharedEncDec& model, const ParamSet& p, const TokenBatch& src_batch,
                                         const TokenBatch& tgt_batch, std::size_t decode_extra) {
  PseudoPairs out;
  const auto x = src_batch.sentences();
  const auto y = tgt_batch.sentences();
  out.src_from_tgt = model.greedy_decode(p, y, Lang::tgt, Lang::src, detail::decode_budget(y, decode_extra));
  out.tgt_from_src = model.greedy_decode(p, x, Lang::src, Lang::tgt, detail::decode_budget(x, decode_extra));
  return out;
}

/// -log M_{s->t}(y|u) - log M_{t->s}(x|v) with the pseudo sources held constant.
inline Tensor bt_loss_from_pseudo(Tape<float>& tape, const SharedEncDec& model, const ParamSet& p, const TokenBatch& src_batch,
                                  const TokenBatch& tgt_batch, const PseudoPairs& pseudo, Rng& rng, bool training = true) {
  const ForwardOptions opt{training, &rng};
  Tensor to_tgt = model.seq2seq_loss(tape, p, pseudo.src_from_tgt, Lang::src, tgt_batch.sentences(), Lang::tgt, opt);
  Tensor to_src = model.seq2seq_loss(tape, p, pseudo.tgt_from_src, Lang::tgt, src_batch.sentences(), Lang::src, opt);
  return ops::add(tape, to_tgt, to_src);
}

inline Tensor bt_loss(Tape<float>& tape, const SharedEncDec& model, const ParamSet& p, const TokenBatch& src_batch,
                      const TokenBatch& tgt_batch, Rng& rng, std::size_t decode_extra = 4, bool training = true) {
  if (src_batch.empty() || tgt_batch.empty()) throw EmptyBatchError("bt_loss: empty batch");
  const PseudoPairs pseudo = generate_pseudo_pairs(model, p, src_batch, tgt_batch, decode_extra);
  return bt_loss_from_pseudo(tape, model, p, src_batch, tgt_batch, pseudo, rng, training);
}

/// L^s on the given monolingual batches.
inline LossBundle combined_loss(Tape<float>& tape, const SharedEncDec& model, const ParamSet& p, const TokenBatch& src_batch,
                                const TokenBatch& tgt_batch, const UnmtLossConfig& cfg, Rng& rng, bool training = true) {
  LossBundle out;
  out.lm_loss = lm_loss(tape, model, p, src_batch, tgt_batch, cfg.noise, rng, training);
  out.bt_loss = bt_loss(tape, model, p, src_batch, tgt_batch, rng, cfg.decode_extra, training);
  out.total = ops::add(tape, out.lm_loss, out.bt_loss);
  const auto x = src_batch.sentences();
  const auto y = tgt_batch.sentences();
  out.lm_tokens = detail::with_eos(x) + detail::with_eos(y);
  out.bt_tokens = out.lm_tokens;
  return out;
}

/// L^s on freshly sampled batches of one domain.
inline LossBundle combined_loss(Tape<float>& tape, const SharedEncDec& model, const ParamSet& p, const DomainCorpus& corpus,
                                const UnmtLossConfig& cfg, Rng& rng, bool training = true) {
  TokenBatch xs = sample_batch(corpus, Lang::src, cfg.tokens_per_batch, rng);
  TokenBatch ys = sample_batch(corpus, Lang::tgt, cfg.tokens_per_batch, rng);
  return combined_loss(tape, model, p, xs, ys, cfg, rng, training);
}

}  // namespace metaumt
