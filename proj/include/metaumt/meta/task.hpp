#pragma once

// A meta-learning task family indexed by domain. The engine only needs two
// entry points, each of which computes a loss and accumulates its gradient
// into the given parameters.

#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "metaumt/data/batching.hpp"
#include "metaumt/losses.hpp"

namespace metaumt {

struct TaskLoss {
  double total = 0.0;
  double lm = 0.0;
  double bt = 0.0;
};

template <typename T>
concept MetaTask = requires(T& task, ParamSet& p, std::size_t domain, double mix, Rng& rng) {
  { task.domain_count() } -> std::convertible_to<std::size_t>;
  { task.domain_grad(p, domain, rng) } -> std::convertible_to<TaskLoss>;
  { task.cross_domain_grad(p, domain, mix, rng) } -> std::convertible_to<TaskLoss>;
};

/// Batch of one language side drawing roughly (1 - mix) of its token budget
/// from `domain` and the rest from uniformly chosen other domains.
inline TokenBatch sample_cross_domain_batch(const std::vector<DomainCorpus>& corpora, std::size_t domain, Lang lang, double mix,
                                            std::size_t tokens_per_batch, Rng& rng) {
  if (corpora.size() < 2) throw std::invalid_argument("cross-domain batch needs at least two domains");
  if (!(mix >= 0.0 && mix <= 1.0)) throw std::invalid_argument("cross_domain_mix must be in [0,1]");
  const auto other_budget = static_cast<std::size_t>(mix * static_cast<double>(tokens_per_batch));
  const std::size_t own_budget = tokens_per_batch - other_budget;
  std::vector<Sentence> rows;
  std::size_t used = 0;
  if (own_budget > 0) {
    rows = sample_sentences(corpora[domain].side(lang), own_budget, rng);
    used = token_count(rows);
  }
  std::size_t other_used = 0;
  while (other_used < other_budget) {
    std::size_t j = uniform_index(rng, corpora.size() - 1);
    if (j >= domain) ++j;
    const auto& side = corpora[j].side(lang);
    const Sentence& s = side[uniform_index(rng, side.size())];
    if (used + s.size() > tokens_per_batch && !rows.empty()) break;
    rows.push_back(s);
    used += s.size();
    other_used += s.size();
  }
  return TokenBatch::from_sentences(rows, lang, domain);
}

/// The UNMT objective L^s over a set of out-domain corpora.
class UnmtTask {
 public:
  UnmtTask(const SharedEncDec& model, const std::vector<DomainCorpus>& corpora, UnmtLossConfig cfg)
      : model_(model), corpora_(corpora), cfg_(cfg) {
    if (corpora_.empty()) throw std::invalid_argument("UnmtTask: no domains");
  }

  std::size_t domain_count() const { return corpora_.size(); }
  const SharedEncDec& model() const { return model_; }
  const UnmtLossConfig& loss_config() const { return cfg_; }

  TaskLoss domain_grad(ParamSet& p, std::size_t domain, Rng& rng) const {
    Tape<float> tape;
    LossBundle b = combined_loss(tape, model_, p, corpora_.at(domain), cfg_, rng);
    tape.backward(b.total);
    return {b.total.item(), b.lm_loss.item(), b.bt_loss.item()};
  }

  /// With mix = 0 this is exactly domain_grad, rng consumption included.
  TaskLoss cross_domain_grad(ParamSet& p, std::size_t domain, double mix, Rng& rng) const {
    if (mix == 0.0) return domain_grad(p, domain, rng);
    TokenBatch xs = sample_cross_domain_batch(corpora_, domain, Lang::src, mix, cfg_.tokens_per_batch, rng);
    TokenBatch ys = sample_cross_domain_batch(corpora_, domain, Lang::tgt, mix, cfg_.tokens_per_batch, rng);
    Tape<float> tape;
    LossBundle b = combined_loss(tape, model_, p, xs, ys, cfg_, rng);
    tape.backward(b.total);
    return {b.total.item(), b.lm_loss.item(), b.bt_loss.item()};
  }

 private:
  const SharedEncDec& model_;
  const std::vector<DomainCorpus>& corpora_;
  UnmtLossConfig cfg_;
};

}  // namespace metaumt
