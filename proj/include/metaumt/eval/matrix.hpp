#pragma once

// Experiment matrix: every requested method on every seed, finetuning curves,
// the zero-shot table and the loss ablation, flattened into metric rows.
//
// run_id naming:
//   <method>-s<seed>                 main runs (one final eval row per direction)
//   <method>-s<seed>-zeroshot        per-domain evaluation after finetuning
//   ablation-cd<0|1>-ag<0|1>-s<seed> MetaGUMT with terms switched on/off

#include <chrono>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "metaumt/data/corpus_io.hpp"
#include "metaumt/eval/experiment.hpp"
#include "metaumt/eval/metrics.hpp"

namespace metaumt {

struct MatrixResult {
  std::vector<MetricsRow> rows;
};

inline std::string main_run_id(const std::string& method, std::uint64_t seed) { return method + "-s" + std::to_string(seed); }

inline std::string ablation_run_id(bool cross, bool aggregate, std::uint64_t seed) {
  return std::string("ablation-cd") + (cross ? "1" : "0") + "-ag" + (aggregate ? "1" : "0") + "-s" + std::to_string(seed);
}

/// BLEU of one set of parameters on every out-domain, the in-domain test
/// split and the unseen domain (in that order).
struct ZeroShotEntry {
  std::size_t domain = 0;
  std::string role;  // out | in | unseen
  BleuPair bleu;
};

inline std::vector<ZeroShotEntry> zero_shot_eval(const SharedEncDec& model, const ParamSet& p, const std::vector<DomainCorpus>& corpora,
                                                 const ExperimentConfig& cfg, const SentencePairs& in_domain_test) {
  std::vector<ZeroShotEntry> out;
  auto capped = [&](const DomainCorpus& c) {
    const std::size_t n = std::min(c.eval_pairs.size(), cfg.eval.zero_shot_pairs);
    return SentencePairs(c.eval_pairs.begin(), c.eval_pairs.begin() + static_cast<std::ptrdiff_t>(n));
  };
  for (std::size_t d : cfg.out_domains) out.push_back({d, "out", evaluate_both(model, p, capped(corpora.at(d)))});
  out.push_back({cfg.in_domain, "in", evaluate_both(model, p, in_domain_test)});
  out.push_back({cfg.unseen_domain, "unseen", evaluate_both(model, p, capped(corpora.at(cfg.unseen_domain)))});
  return out;
}

namespace detail {

class MatrixRunner {
 public:
  MatrixRunner(const ExperimentConfig& cfg, std::ostream* log)
      : cfg_(cfg), log_(log), lang_(cfg.language), corpora_(generate_corpora(lang_)), model_(cfg.model_for(lang_)) {
    for (std::size_t d : cfg_.out_domains) outs_.push_back(corpora_.at(d));
  }

  MatrixResult run() {
    for (std::uint64_t seed : cfg_.seeds) run_seed(seed);
    return {std::move(rows_)};
  }

 private:
  using Clock = std::chrono::steady_clock;

  void note(const std::string& msg) {
    if (log_) *log_ << "[" << cfg_.name << "] " << msg << std::endl;
  }

  double ms_since(Clock::time_point t0) const {
    if (!cfg_.record_wall_time) return 0.0;
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }

  std::string in_name() const { return domain_dir_name(cfg_.in_domain); }

  void add_pair_rows(const std::string& run_id, const std::string& method, const std::string& phase, const std::string& domain,
                     std::uint64_t seed, std::size_t step, const BleuPair& b, double lm, double bt, double wall) {
    rows_.push_back({run_id, method, phase, domain, "s2t", seed, step, b.s2t, lm, bt, wall});
    rows_.push_back({run_id, method, phase, domain, "t2s", seed, step, b.t2s, lm, bt, wall});
  }

  struct SeedContext {
    std::uint64_t seed;
    std::uint64_t data_seed;
    EvalSplit split;
    DevScorer dev;
    ParamSet init;
    bool has_init = false;
  };

  const ParamSet& init_for(SeedContext& ctx) {
    if (!ctx.has_init) {
      note("seed " + std::to_string(ctx.seed) + ": masked-LM initialization");
      ctx.init = mlm_init(model_, outs_, cfg_.mlm, derive_seed(ctx.seed, "mlm-init"));
      ctx.has_init = true;
    }
    return ctx.init;
  }

  ParamSet pretrain_logged(SeedContext& ctx, PretrainMethod method, const MetaConfig& mc, const std::string& run_id,
                           const std::string& label) {
    note(run_id + ": pretraining (" + method_name(method) + ", " + std::to_string(mc.meta_steps) + " updates)");
    ParamSet theta = init_for(ctx).deep_clone();
    UnmtTask task(model_, outs_, cfg_.loss);
    const auto t0 = Clock::now();
    double lm = 0.0, bt = 0.0;
    std::size_t n = 0;
    SentencePairs probe(ctx.split.dev.begin(),
                        ctx.split.dev.begin() + static_cast<std::ptrdiff_t>(std::min(ctx.split.dev.size(), cfg_.eval.pretrain_eval_pairs)));
    const std::size_t every = cfg_.eval.pretrain_eval_every;
    pretrain(task, theta, method, mc, derive_seed(ctx.seed, "pretrain"), [&](std::size_t step, const TaskLoss& l) {
      lm += l.lm;
      bt += l.bt;
      ++n;
      if (every > 0 && (step % every == 0 || step == mc.meta_steps)) {
        add_pair_rows(run_id, label, "pretrain", in_name(), ctx.seed, step, evaluate_both(model_, theta, probe), lm / static_cast<double>(n),
                      bt / static_cast<double>(n), ms_since(t0));
        lm = bt = 0.0;
        n = 0;
      }
    });
    return theta;
  }

  FinetuneResult finetune_logged(SeedContext& ctx, const ParamSet& theta, const std::string& run_id, const std::string& label) {
    note(run_id + ": finetuning");
    const auto t0 = Clock::now();
    FinetuneResult r = finetune(model_, theta, corpora_.at(cfg_.in_domain), ctx.dev, cfg_.finetune, cfg_.loss,
                                derive_seed(ctx.seed, "finetune"), ctx.data_seed, label);
    log_history(ctx, r.model.history, run_id, label, ms_since(t0));
    return r;
  }

  void log_history(const SeedContext& ctx, const std::vector<TrainingRecord>& history, const std::string& run_id, const std::string& label,
                   double wall) {
    for (const auto& h : history) {
      if (std::isnan(h.dev_bleu_s2t)) continue;
      add_pair_rows(run_id, label, "finetune", in_name(), ctx.seed, h.step, {h.dev_bleu_s2t, h.dev_bleu_t2s}, h.lm_loss, h.bt_loss, wall);
    }
  }

  void final_eval(const SeedContext& ctx, const ParamSet& p, const std::string& run_id, const std::string& label, std::size_t epoch,
                  const std::vector<TrainingRecord>& history) {
    double lm = 0.0, bt = 0.0;
    for (const auto& h : history) {
      if (h.step == epoch) {
        lm = h.lm_loss;
        bt = h.bt_loss;
      }
    }
    const auto t0 = Clock::now();
    const BleuPair b = evaluate_both(model_, p, ctx.split.test);
    add_pair_rows(run_id, label, "eval", in_name(), ctx.seed, epoch, b, lm, bt, ms_since(t0));
  }

  void zero_shot_rows(const SeedContext& ctx, const ParamSet& p, const std::string& method) {
    const auto t0 = Clock::now();
    for (const auto& e : zero_shot_eval(model_, p, corpora_, cfg_, ctx.split.test)) {
      add_pair_rows(main_run_id(method, ctx.seed) + "-zeroshot", method, "eval", domain_dir_name(e.domain), ctx.seed, 0, e.bleu, 0.0, 0.0,
                    ms_since(t0));
    }
  }

  void run_seed(std::uint64_t seed) {
    SeedContext ctx{seed, derive_seed(seed, "data"), {}, {}, {}, false};
    ctx.split = split_eval_pairs(corpora_.at(cfg_.in_domain).eval_pairs, cfg_.supervised.word_budget, cfg_.eval.dev_pairs,
                                 cfg_.eval.test_pairs, derive_seed(seed, "split"));
    ctx.dev = [this, &ctx](const ParamSet& p) { return evaluate_both(model_, p, ctx.split.dev); };

    std::map<std::string, FinetuneResult> finetuned;
    MetaConfig umt_cfg = cfg_.meta;
    umt_cfg.cross_domain_mix = 0.0;
    umt_cfg.aggregate_domain = false;
    const bool need_transfer = cfg_.has_method("transfer") || cfg_.has_method("unadapted");
    const bool need_umt = cfg_.has_method("metaumt") || cfg_.ablation;
    const bool need_gumt = cfg_.has_method("metagumt") || cfg_.ablation;

    if (need_transfer) {
      ParamSet theta = pretrain_logged(ctx, PretrainMethod::transfer, cfg_.meta, main_run_id("transfer", seed), "transfer");
      if (cfg_.has_method("unadapted")) final_eval(ctx, theta, main_run_id("unadapted", seed), "unadapted", 0, {});
      if (cfg_.has_method("transfer")) finetuned.emplace("transfer", finetune_logged(ctx, theta, main_run_id("transfer", seed), "transfer"));
    }
    if (need_umt) {
      ParamSet theta = pretrain_logged(ctx, PretrainMethod::metaumt, umt_cfg, main_run_id("metaumt", seed), "metaumt");
      finetuned.emplace("metaumt", finetune_logged(ctx, theta, main_run_id("metaumt", seed), "metaumt"));
    }
    if (need_gumt) {
      ParamSet theta = pretrain_logged(ctx, PretrainMethod::metagumt, cfg_.meta, main_run_id("metagumt", seed), "metagumt");
      finetuned.emplace("metagumt", finetune_logged(ctx, theta, main_run_id("metagumt", seed), "metagumt"));
    }
    for (const char* m : {"transfer", "metaumt", "metagumt"}) {
      if (!cfg_.has_method(m)) continue;
      const FinetuneResult& r = finetuned.at(m);
      final_eval(ctx, r.model.params, main_run_id(m, seed), m, r.convergence_epoch, r.model.history);
    }
    if (cfg_.has_method("supervised")) {
      note(main_run_id("supervised", seed) + ": training");
      const auto t0 = Clock::now();
      TrainedModel sup = supervised_baseline(model_, ctx.split.parallel, ctx.dev, cfg_.supervised,
                                             derive_seed(seed, "supervised"), ctx.data_seed);
      log_history(ctx, sup.history, main_run_id("supervised", seed), "supervised", ms_since(t0));
      final_eval(ctx, sup.params, main_run_id("supervised", seed), "supervised", cfg_.supervised.steps, {});
    }
    if (cfg_.has_method("unmt_only")) {
      note(main_run_id("unmt_only", seed) + ": training");
      const auto t0 = Clock::now();
      FinetuneResult r = unmt_only_baseline(model_, corpora_.at(cfg_.in_domain), ctx.dev, cfg_.in_domain_mlm, cfg_.finetune, cfg_.loss,
                                            derive_seed(seed, "unmt-only"), ctx.data_seed);
      log_history(ctx, r.model.history, main_run_id("unmt_only", seed), "unmt_only", ms_since(t0));
      final_eval(ctx, r.model.params, main_run_id("unmt_only", seed), "unmt_only", r.convergence_epoch, r.model.history);
    }
    if (cfg_.zero_shot) {
      for (const char* m : {"transfer", "metaumt", "metagumt"}) {
        if (cfg_.has_method(m)) zero_shot_rows(ctx, finetuned.at(m).model.params, m);
      }
    }
    if (cfg_.ablation) run_ablation(ctx, finetuned);
  }

  void run_ablation(SeedContext& ctx, const std::map<std::string, FinetuneResult>& finetuned) {
    for (bool cross : {false, true}) {
      for (bool aggregate : {false, true}) {
        const std::string run_id = ablation_run_id(cross, aggregate, ctx.seed);
        MetaConfig mc = cfg_.meta;
        if (!cross) mc.cross_domain_mix = 0.0;
        mc.aggregate_domain = aggregate;
        const bool same_as_umt = !cross && !aggregate;
        const bool same_as_gumt = cross && aggregate;
        if (same_as_umt || same_as_gumt) {
          // Identical configuration and streams: reuse the main run.
          const FinetuneResult& r = finetuned.at(same_as_umt ? "metaumt" : "metagumt");
          final_eval(ctx, r.model.params, run_id, "metagumt", r.convergence_epoch, r.model.history);
          continue;
        }
        ParamSet theta = pretrain_logged(ctx, PretrainMethod::metagumt, mc, run_id, "metagumt");
        FinetuneResult r = finetune_logged(ctx, theta, run_id, "metagumt");
        final_eval(ctx, r.model.params, run_id, "metagumt", r.convergence_epoch, r.model.history);
      }
    }
  }

  const ExperimentConfig& cfg_;
  std::ostream* log_;
  SyntheticLanguage lang_;
  std::vector<DomainCorpus> corpora_;
  std::vector<DomainCorpus> outs_;
  SharedEncDec model_;
  std::vector<MetricsRow> rows_;
};

}  // namespace detail

inline MatrixResult run_matrix(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  return detail::MatrixRunner(cfg, log).run();
}

}  // namespace metaumt
