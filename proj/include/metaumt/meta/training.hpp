#pragma once

// Training procedures around the meta engine: masked-LM initialization,
// in-domain finetuning with early stopping, and the two in-domain baselines.

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaumt/eval/evaluate.hpp"
#include "metaumt/meta/meta_engine.hpp"
#include "metaumt/model/mlm.hpp"

namespace metaumt {

struct Provenance {
  std::string method;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
};

struct TrainingRecord {
  std::string phase;  // "pretrain" | "finetune"
  std::size_t step = 0;  // update index, or epoch for finetuning
  double lm_loss = 0.0;
  double bt_loss = 0.0;
  double dev_bleu_s2t = std::numeric_limits<double>::quiet_NaN();
  double dev_bleu_t2s = std::numeric_limits<double>::quiet_NaN();
};

struct TrainedModel {
  ParamSet params;
  Provenance provenance;
  std::vector<TrainingRecord> history;
};

struct MlmConfig {
  std::size_t steps = 1000;
  double lr = 1e-4;
  std::size_t tokens_per_batch = 512;
  double mask_prob = 0.15;
  double clip_norm = 5.0;
};

/// Masked-LM training on the pooled monolingual sentences of all given
/// corpora, both languages; each batch is half source, half target tokens.
inline ParamSet mlm_init(const SharedEncDec& model, const std::vector<DomainCorpus>& corpora, const MlmConfig& cfg, std::uint64_t seed) {
  if (corpora.empty()) throw std::invalid_argument("mlm_init: no corpora");
  std::vector<Sentence> pool[2];
  for (const auto& c : corpora) {
    for (Lang l : {Lang::src, Lang::tgt}) pool[static_cast<int>(l)].insert(pool[static_cast<int>(l)].end(), c.side(l).begin(), c.side(l).end());
  }
  ParamSet p = model.init_params(seed);
  AdamState adam;
  adam.lr = cfg.lr;
  Rng rng = make_rng(seed, "mlm");
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    std::vector<Sentence> rows;
    std::vector<Lang> langs;
    for (Lang l : {Lang::src, Lang::tgt}) {
      for (auto& r : sample_sentences(pool[static_cast<int>(l)], cfg.tokens_per_batch / 2, rng)) {
        rows.push_back(std::move(r));
        langs.push_back(l);
      }
    }
    mlm_pretrain_step(model, p, adam, rows, langs, cfg.mask_prob, rng, cfg.clip_norm);
  }
  return p;
}

/// Stops after `patience` consecutive evaluations without a strict gain.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {
    if (patience == 0) throw std::invalid_argument("EarlyStopping: patience must be >= 1");
  }

  /// Records the score of `epoch`; returns true when training should stop.
  bool observe(std::size_t epoch, double score) {
    if (!has_best_ || score > best_score_) {
      has_best_ = true;
      best_score_ = score;
      best_epoch_ = epoch;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience_;
  }

  bool improved_last() const { return stale_ == 0 && has_best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_score() const { return best_score_; }

 private:
  std::size_t patience_;
  bool has_best_ = false;
  double best_score_ = 0.0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
};

struct FinetuneConfig {
  std::size_t in_domain_budget_words = 5000;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  std::size_t eval_every = 1;  // epochs between dev evaluations
  double lr = 1e-4;             // Adam peak learning rate
  std::size_t warmup_steps = 0;
  double clip_norm = 5.0;

  void validate() const {
    if (patience == 0) throw std::invalid_argument("FinetuneConfig: patience must be >= 1");
    if (in_domain_budget_words == 0) throw std::invalid_argument("FinetuneConfig: budget must be > 0");
    if (max_epochs == 0 || eval_every == 0) throw std::invalid_argument("FinetuneConfig: max_epochs and eval_every must be >= 1");
  }
};

struct FinetuneResult {
  TrainedModel model;  // parameters of the best dev epoch
  std::size_t convergence_epoch = 0;
  double best_dev_bleu = 0.0;
  std::size_t epochs_run = 0;
};

/// Scores parameters on dev data; the mean over both directions drives early stopping.
using DevScorer = std::function<BleuPair(const ParamSet&)>;

/// L^s training on an already budgeted in-domain corpus. An epoch pairs the
/// shuffled source batches with the shuffled target batches (the shorter
/// list wraps around).
inline FinetuneResult finetune_on(const SharedEncDec& model, const ParamSet& init, const DomainCorpus& in_domain,
                                  const DevScorer& dev, const FinetuneConfig& cfg, const UnmtLossConfig& loss_cfg,
                                  std::uint64_t seed, const std::string& method = "finetune") {
  cfg.validate();
  if (in_domain.src_sentences.empty() || in_domain.tgt_sentences.empty()) throw DataError("finetune: empty in-domain corpus");
  FinetuneResult res;
  ParamSet p = init.deep_clone();
  res.model.params = p.deep_clone();
  res.model.provenance = {method, 0, seed, 0};
  AdamState adam;
  LinearWarmup sched{cfg.lr, cfg.warmup_steps};
  Rng rng = make_rng(seed, "finetune");
  EarlyStopping stopper(cfg.patience);
  std::size_t updates = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto xs = make_batches(in_domain.src_sentences, loss_cfg.tokens_per_batch, derive_seed(seed, "ft-src", epoch), Lang::src, in_domain.domain_id);
    auto ys = make_batches(in_domain.tgt_sentences, loss_cfg.tokens_per_batch, derive_seed(seed, "ft-tgt", epoch), Lang::tgt, in_domain.domain_id);
    const std::size_t nb = std::max(xs.size(), ys.size());
    double lm = 0.0, bt = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      p.zero_grad();
      Tape<float> tape;
      LossBundle l = combined_loss(tape, model, p, xs[b % xs.size()], ys[b % ys.size()], loss_cfg, rng);
      tape.backward(l.total);
      clip_grad_norm(p, cfg.clip_norm);
      adam.lr = sched.at(++updates);
      optimizer_step(p, adam);
      lm += l.lm_loss.item();
      bt += l.bt_loss.item();
    }
    res.epochs_run = epoch;
    TrainingRecord rec{"finetune", epoch, lm / static_cast<double>(nb), bt / static_cast<double>(nb)};
    if (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs) {
      const BleuPair score = dev(p);
      rec.dev_bleu_s2t = score.s2t;
      rec.dev_bleu_t2s = score.t2s;
      res.model.history.push_back(rec);
      const bool stop = stopper.observe(epoch, score.mean());
      if (stopper.improved_last()) res.model.params = p.deep_clone();
      if (stop) break;
    } else {
      res.model.history.push_back(rec);
    }
  }
  res.convergence_epoch = stopper.best_epoch();
  res.best_dev_bleu = stopper.best_score();
  res.model.provenance.steps = updates;
  return res;
}

/// Budgets the in-domain corpus to cfg.in_domain_budget_words words per
/// side (sample fixed by `data_seed`) and finetunes on it.
inline FinetuneResult finetune(const SharedEncDec& model, const ParamSet& init, const DomainCorpus& in_domain, const DevScorer& dev,
                               const FinetuneConfig& cfg, const UnmtLossConfig& loss_cfg, std::uint64_t seed, std::uint64_t data_seed,
                               const std::string& method = "finetune") {
  cfg.validate();
  const DomainCorpus budgeted = sample_in_domain(in_domain, cfg.in_domain_budget_words, data_seed);
  return finetune_on(model, init, budgeted, dev, cfg, loss_cfg, seed, method);
}

struct SupervisedConfig {
  std::size_t word_budget = 10000;
  std::size_t steps = 1000;
  std::size_t eval_every = 100;  // steps between dev checks; the best checkpoint is kept
  double lr = 1e-4;
  std::size_t tokens_per_batch = 512;
  double clip_norm = 5.0;
};

/// Cross-entropy training in both directions on a parallel subset only,
/// from a random initialization. A pool larger than the word budget is
/// subsampled to it.
inline TrainedModel supervised_baseline(const SharedEncDec& model, const SentencePairs& parallel_pool,
                                        const DevScorer& dev, const SupervisedConfig& cfg, std::uint64_t seed, std::uint64_t data_seed) {
  std::size_t pool_words = 0;
  for (const auto& pr : parallel_pool) pool_words += pr.first.size();
  const SentencePairs pairs = pool_words <= cfg.word_budget ? parallel_pool : sample_parallel(parallel_pool, cfg.word_budget, data_seed);
  if (pairs.empty()) throw DataError("supervised_baseline: empty parallel subset");
  std::vector<Sentence> src_side;
  for (const auto& pr : pairs) src_side.push_back(pr.first);
  TrainedModel out;
  out.provenance = {"supervised", 0, seed, cfg.steps};
  ParamSet p = model.init_params(derive_seed(seed, "supervised-init"));
  out.params = p.deep_clone();
  AdamState adam;
  adam.lr = cfg.lr;
  Rng rng = make_rng(seed, "supervised");
  double best = -1.0;
  const ForwardOptions opt{true, &rng};
  for (std::size_t s = 1; s <= cfg.steps; ++s) {
    std::vector<Sentence> xs, ys;
    std::size_t used = 0;
    std::vector<std::size_t> taken;
    while (taken.size() < pairs.size()) {
      const std::size_t i = uniform_index(rng, pairs.size());
      if (std::find(taken.begin(), taken.end(), i) != taken.end()) continue;
      if (used + pairs[i].first.size() > cfg.tokens_per_batch && !xs.empty()) break;
      taken.push_back(i);
      used += pairs[i].first.size();
      xs.push_back(pairs[i].first);
      ys.push_back(pairs[i].second);
    }
    p.zero_grad();
    Tape<float> tape;
    Tensor a = model.seq2seq_loss(tape, p, xs, Lang::src, ys, Lang::tgt, opt);
    Tensor b = model.seq2seq_loss(tape, p, ys, Lang::tgt, xs, Lang::src, opt);
    Tensor loss = ops::add(tape, a, b);
    tape.backward(loss);
    clip_grad_norm(p, cfg.clip_norm);
    optimizer_step(p, adam);
    if (s % cfg.eval_every == 0 || s == cfg.steps) {
      const BleuPair score = dev(p);
      TrainingRecord rec{"finetune", s, a.item(), b.item(), score.s2t, score.t2s};
      out.history.push_back(rec);
      if (score.mean() > best) {
        best = score.mean();
        out.params = p.deep_clone();
      }
    }
  }
  return out;
}

/// Masked-LM initialization on the budgeted in-domain monolingual data, then
/// the finetuning loop on the same data.
inline FinetuneResult unmt_only_baseline(const SharedEncDec& model, const DomainCorpus& in_domain, const DevScorer& dev,
                                         const MlmConfig& mlm, const FinetuneConfig& cfg, const UnmtLossConfig& loss_cfg,
                                         std::uint64_t seed, std::uint64_t data_seed) {
  cfg.validate();
  const DomainCorpus budgeted = sample_in_domain(in_domain, cfg.in_domain_budget_words, data_seed);
  const ParamSet init = mlm_init(model, {budgeted}, mlm, seed);
  return finetune_on(model, init, budgeted, dev, cfg, loss_cfg, seed, "unmt_only");
}

}  // namespace metaumt
