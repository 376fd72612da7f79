#pragma once

#include <stdexcept>
#include <vector>

#include "metaumt/model/transformer.hpp"
#include "metaumt/optim.hpp"

namespace metaumt {

class EmptyBatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Masked-LM objective on the encoder: each word is replaced by <mask> with
/// probability mask_prob and predicted through the tied output projection.
/// When sampling masks nothing, one uniformly chosen word is masked.
inline Tensor mlm_loss(Tape<float>& tape, const SharedEncDec& model, const ParamSet& p, const std::vector<Sentence>& rows,
                       const std::vector<Lang>& langs, double mask_prob, Rng& rng, bool training = true) {
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw std::invalid_argument("mlm: mask_prob must be in (0,1)");
  std::size_t maskable = 0;
  for (const auto& r : rows) maskable += r.size();
  if (maskable == 0) throw EmptyBatchError("mlm: batch has no maskable tokens");
  std::vector<Sentence> masked = rows;
  std::vector<std::vector<TokenId>> targets(rows.size());
  std::size_t n_masked = 0;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    targets[b].assign(rows[b].size() + 1, -1);
    for (std::size_t i = 0; i < rows[b].size(); ++i) {
      if (uniform01(rng) < mask_prob) {
        targets[b][i] = rows[b][i];
        masked[b][i] = special::mask;
        ++n_masked;
      }
    }
  }
  if (n_masked == 0) {
    std::size_t pick = uniform_index(rng, maskable);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      if (pick < rows[b].size()) {
        targets[b][pick] = rows[b][pick];
        masked[b][pick] = special::mask;
        break;
      }
      pick -= rows[b].size();
    }
  }
  ForwardOptions opt{training, &rng};
  Memory mem = model.encode(tape, p, masked, langs, opt);
  std::vector<TokenId> flat_targets(mem.rows * mem.len, -1);
  for (std::size_t b = 0; b < rows.size(); ++b)
    for (std::size_t i = 0; i < targets[b].size(); ++i) flat_targets[b * mem.len + i] = targets[b][i];
  Tensor logits = model.encoder_logits(tape, p, mem);
  Tensor flat = ops::reshape(tape, logits, {mem.rows * mem.len, model.config().vocab_size});
  return ops::cross_entropy(tape, flat, std::span<const TokenId>(flat_targets), -1);
}

/// One Adam update on the masked-LM loss; returns the loss value.
inline float mlm_pretrain_step(const SharedEncDec& model, ParamSet& p, AdamState& adam, const std::vector<Sentence>& rows,
                               const std::vector<Lang>& langs, double mask_prob, Rng& rng, double clip_norm = 5.0) {
  Tape<float> tape;
  p.zero_grad();
  Tensor loss = mlm_loss(tape, model, p, rows, langs, mask_prob, rng);
  tape.backward(loss);
  clip_grad_norm(p, clip_norm);
  optimizer_step(p, adam);
  return loss.item();
}

}  // namespace metaumt
