#pragma once

// Experiment description and its JSON form. Every key is optional; missing
// keys keep the defaults below, unknown keys are rejected.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaumt/data/synthetic.hpp"
#include "metaumt/meta/training.hpp"

namespace metaumt {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> m{"unadapted", "transfer", "metaumt", "metagumt", "supervised", "unmt_only"};
  return m;
}

struct EvalConfig {
  std::size_t dev_pairs = 200;            // cap on the in-domain dev split
  std::size_t test_pairs = 400;           // cap on the in-domain test split
  std::size_t zero_shot_pairs = 200;      // pairs per domain in the zero-shot table
  std::size_t pretrain_eval_every = 0;    // updates between pretraining dev checks (0 = never)
  std::size_t pretrain_eval_pairs = 100;  // dev pairs used by those checks
};

struct ExperimentConfig {
  std::string name = "default";
  std::vector<std::string> methods = all_methods();
  SyntheticLanguageSpec language;
  std::vector<std::size_t> out_domains{0, 1, 2, 3, 4, 5};
  std::size_t in_domain = 6;
  std::size_t unseen_domain = 7;
  TransformerConfig model;  // vocab_size is taken from the language
  UnmtLossConfig loss;
  MlmConfig mlm;            // out-domain initialization, shared by all pretraining methods of a seed
  MlmConfig in_domain_mlm;  // initialization of the in-domain-only baseline
  MetaConfig meta;          // meta_steps = parameter updates for every pretraining method
  FinetuneConfig finetune;
  SupervisedConfig supervised;
  EvalConfig eval;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  bool ablation = true;
  bool zero_shot = true;
  bool record_wall_time = false;

  bool has_method(const std::string& m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }

  void validate() const {
    try {
      language.validate();
      meta.validate();
      finetune.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (methods.empty()) throw ConfigError("config: no methods");
    for (const auto& m : methods) {
      if (std::find(all_methods().begin(), all_methods().end(), m) == all_methods().end()) throw ConfigError("config: unknown method '" + m + "'");
    }
    if (out_domains.empty()) throw ConfigError("config: no out-domains");
    std::set<std::size_t> outs(out_domains.begin(), out_domains.end());
    if (outs.size() != out_domains.size()) throw ConfigError("config: duplicate out-domain");
    for (std::size_t d : out_domains)
      if (d >= language.n_domains) throw ConfigError("config: out-domain " + std::to_string(d) + " does not exist");
    if (in_domain >= language.n_domains || unseen_domain >= language.n_domains) throw ConfigError("config: in-domain or unseen domain does not exist");
    if (outs.count(in_domain)) throw ConfigError("config: in-domain must not be an out-domain");
    if (outs.count(unseen_domain) || unseen_domain == in_domain) throw ConfigError("config: unseen domain must differ from in- and out-domains");
    if (seeds.empty()) throw ConfigError("config: no seeds");
    if ((has_method("metagumt") || ablation) && out_domains.size() < 2) throw ConfigError("config: metagumt needs at least two out-domains");
    if (model.max_len < language.max_len + loss.decode_extra + 2) {
      throw ConfigError("config: model.max_len must be at least language.max_len + loss.decode_extra + 2");
    }
    if (loss.tokens_per_batch < language.max_len) throw ConfigError("config: tokens_per_batch smaller than the longest sentence");
  }

  /// Model configuration with the vocabulary size of the generated language.
  TransformerConfig model_for(const SyntheticLanguage& lang) const {
    TransformerConfig m = model;
    m.vocab_size = lang.vocab().size();
    return m;
  }
};

namespace detail {

using json = nlohmann::json;

class JsonReader {
 public:
  JsonReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline void read(const json& j, SyntheticLanguageSpec& s, const std::string& w) {
  JsonReader r(j, w);
  r.get("shared_vocab_size", s.shared_vocab_size);
  r.get("default_domain_vocab_size", s.default_domain_vocab_size);
  r.get("domain_vocab_size", s.domain_vocab_size);
  r.get("n_domains", s.n_domains);
  r.get("min_len", s.min_len);
  r.get("max_len", s.max_len);
  r.get("successors_per_word", s.successors_per_word);
  r.get("opener_fraction", s.opener_fraction);
  r.get("zipf_exponent", s.zipf_exponent);
  r.get("anchor_fraction", s.anchor_fraction);
  r.get("reorder", s.reorder);
  r.get("train_sentences", s.train_sentences);
  r.get("eval_pairs", s.eval_pairs);
  r.get("seed", s.seed);
  r.finish();
}

inline json write(const SyntheticLanguageSpec& s) {
  return {{"shared_vocab_size", s.shared_vocab_size}, {"default_domain_vocab_size", s.default_domain_vocab_size},
          {"domain_vocab_size", s.domain_vocab_size}, {"n_domains", s.n_domains}, {"min_len", s.min_len}, {"max_len", s.max_len},
          {"successors_per_word", s.successors_per_word}, {"opener_fraction", s.opener_fraction}, {"zipf_exponent", s.zipf_exponent},
          {"anchor_fraction", s.anchor_fraction}, {"reorder", s.reorder}, {"train_sentences", s.train_sentences},
          {"eval_pairs", s.eval_pairs}, {"seed", s.seed}};
}

inline void read(const json& j, TransformerConfig& m, const std::string& w) {
  JsonReader r(j, w);
  r.get("n_layers", m.n_layers);
  r.get("d_model", m.d_model);
  r.get("n_heads", m.n_heads);
  r.get("d_ff", m.d_ff);
  r.get("max_len", m.max_len);
  r.get("vocab_size", m.vocab_size);
  r.get("dropout", m.dropout);
  r.get("embedding_init_std", m.embedding_init_std);
  r.finish();
}

inline json write(const TransformerConfig& m) {
  return {{"n_layers", m.n_layers}, {"d_model", m.d_model}, {"n_heads", m.n_heads}, {"d_ff", m.d_ff},
          {"max_len", m.max_len}, {"vocab_size", m.vocab_size}, {"dropout", m.dropout}, {"embedding_init_std", m.embedding_init_std}};
}

inline void read(const json& j, UnmtLossConfig& l, const std::string& w) {
  JsonReader r(j, w);
  r.get("drop_prob", l.noise.drop_prob);
  r.get("shuffle_window", l.noise.shuffle_window);
  r.get("tokens_per_batch", l.tokens_per_batch);
  r.get("decode_extra", l.decode_extra);
  r.finish();
}

inline json write(const UnmtLossConfig& l) {
  return {{"drop_prob", l.noise.drop_prob}, {"shuffle_window", l.noise.shuffle_window}, {"tokens_per_batch", l.tokens_per_batch},
          {"decode_extra", l.decode_extra}};
}

inline void read(const json& j, MlmConfig& m, const std::string& w) {
  JsonReader r(j, w);
  r.get("steps", m.steps);
  r.get("lr", m.lr);
  r.get("tokens_per_batch", m.tokens_per_batch);
  r.get("mask_prob", m.mask_prob);
  r.get("clip_norm", m.clip_norm);
  r.finish();
}

inline json write(const MlmConfig& m) {
  return {{"steps", m.steps}, {"lr", m.lr}, {"tokens_per_batch", m.tokens_per_batch}, {"mask_prob", m.mask_prob}, {"clip_norm", m.clip_norm}};
}

inline void read(const json& j, MetaConfig& m, const std::string& w) {
  JsonReader r(j, w);
  r.get("alpha", m.alpha);
  r.get("beta", m.beta);
  r.get("meta_steps", m.meta_steps);
  r.get("inner_steps_per_domain", m.inner_steps_per_domain);
  r.get("cross_domain_mix", m.cross_domain_mix);
  r.get("aggregate_domain", m.aggregate_domain);
  r.get("clip_norm", m.clip_norm);
  r.finish();
}

inline json write(const MetaConfig& m) {
  return {{"alpha", m.alpha}, {"beta", m.beta}, {"meta_steps", m.meta_steps}, {"inner_steps_per_domain", m.inner_steps_per_domain},
          {"cross_domain_mix", m.cross_domain_mix}, {"aggregate_domain", m.aggregate_domain}, {"clip_norm", m.clip_norm}};
}

inline void read(const json& j, FinetuneConfig& f, const std::string& w) {
  JsonReader r(j, w);
  r.get("in_domain_budget_words", f.in_domain_budget_words);
  r.get("max_epochs", f.max_epochs);
  r.get("patience", f.patience);
  r.get("eval_every", f.eval_every);
  r.get("lr", f.lr);
  r.get("warmup_steps", f.warmup_steps);
  r.get("clip_norm", f.clip_norm);
  r.finish();
}

inline json write(const FinetuneConfig& f) {
  return {{"in_domain_budget_words", f.in_domain_budget_words}, {"max_epochs", f.max_epochs}, {"patience", f.patience},
          {"eval_every", f.eval_every}, {"lr", f.lr}, {"warmup_steps", f.warmup_steps}, {"clip_norm", f.clip_norm}};
}

inline void read(const json& j, SupervisedConfig& s, const std::string& w) {
  JsonReader r(j, w);
  r.get("word_budget", s.word_budget);
  r.get("steps", s.steps);
  r.get("eval_every", s.eval_every);
  r.get("lr", s.lr);
  r.get("tokens_per_batch", s.tokens_per_batch);
  r.get("clip_norm", s.clip_norm);
  r.finish();
}

inline json write(const SupervisedConfig& s) {
  return {{"word_budget", s.word_budget}, {"steps", s.steps}, {"eval_every", s.eval_every}, {"lr", s.lr},
          {"tokens_per_batch", s.tokens_per_batch}, {"clip_norm", s.clip_norm}};
}

inline void read(const json& j, EvalConfig& e, const std::string& w) {
  JsonReader r(j, w);
  r.get("dev_pairs", e.dev_pairs);
  r.get("test_pairs", e.test_pairs);
  r.get("zero_shot_pairs", e.zero_shot_pairs);
  r.get("pretrain_eval_every", e.pretrain_eval_every);
  r.get("pretrain_eval_pairs", e.pretrain_eval_pairs);
  r.finish();
}

inline json write(const EvalConfig& e) {
  return {{"dev_pairs", e.dev_pairs}, {"test_pairs", e.test_pairs}, {"zero_shot_pairs", e.zero_shot_pairs},
          {"pretrain_eval_every", e.pretrain_eval_every}, {"pretrain_eval_pairs", e.pretrain_eval_pairs}};
}

template <typename T>
void read_child(JsonReader& r, const char* key, T& out) {
  if (const json* c = r.child(key)) read(*c, out, key);
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::JsonReader r(j, "config");
  r.get("name", c.name);
  r.get("methods", c.methods);
  detail::read_child(r, "language", c.language);
  r.get("out_domains", c.out_domains);
  r.get("in_domain", c.in_domain);
  r.get("unseen_domain", c.unseen_domain);
  detail::read_child(r, "model", c.model);
  detail::read_child(r, "loss", c.loss);
  detail::read_child(r, "mlm", c.mlm);
  detail::read_child(r, "in_domain_mlm", c.in_domain_mlm);
  detail::read_child(r, "meta", c.meta);
  detail::read_child(r, "finetune", c.finetune);
  detail::read_child(r, "supervised", c.supervised);
  detail::read_child(r, "eval", c.eval);
  r.get("seeds", c.seeds);
  r.get("ablation", c.ablation);
  r.get("zero_shot", c.zero_shot);
  r.get("record_wall_time", c.record_wall_time);
  r.finish();
  c.validate();
  return c;
}

inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
  return {{"name", c.name},
          {"methods", c.methods},
          {"language", detail::write(c.language)},
          {"out_domains", c.out_domains},
          {"in_domain", c.in_domain},
          {"unseen_domain", c.unseen_domain},
          {"model", detail::write(c.model)},
          {"loss", detail::write(c.loss)},
          {"mlm", detail::write(c.mlm)},
          {"in_domain_mlm", detail::write(c.in_domain_mlm)},
          {"meta", detail::write(c.meta)},
          {"finetune", detail::write(c.finetune)},
          {"supervised", detail::write(c.supervised)},
          {"eval", detail::write(c.eval)},
          {"seeds", c.seeds},
          {"ablation", c.ablation},
          {"zero_shot", c.zero_shot},
          {"record_wall_time", c.record_wall_time}};
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return experiment_from_json(j);
}

/// FNV-1a over the canonical JSON dump.
inline std::uint64_t config_hash(const ExperimentConfig& c) { return hash_tag(experiment_to_json(c).dump()); }

}  // namespace metaumt
