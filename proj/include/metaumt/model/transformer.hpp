#pragma once

// Shared pre-LN encoder-decoder. One parameter set serves all four modes
// (src->src, tgt->tgt, src->tgt, tgt->src); direction is signalled by a
// language embedding added to every input position and by the language tag
// that starts each decoder input.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaumt/data/batching.hpp"
#include "metaumt/data/vocabulary.hpp"
#include "metaumt/ops.hpp"
#include "metaumt/param_set.hpp"
#include "metaumt/rng.hpp"

namespace metaumt {

struct TransformerConfig {
  std::size_t n_layers = 2;
  std::size_t d_model = 64;
  std::size_t n_heads = 2;
  std::size_t d_ff = 128;
  std::size_t max_len = 24;  // positions, including the eos / language-tag slot
  std::size_t vocab_size = 64;
  double dropout = 0.1;
  double embedding_init_std = 0.02;

  void validate() const {
    if (n_layers == 0 || d_model == 0 || n_heads == 0 || d_ff == 0 || vocab_size <= special::count || max_len < 2) {
      throw std::invalid_argument("TransformerConfig: all sizes must be positive and vocab must exceed the special tokens");
    }
    if (d_model % n_heads != 0) throw std::invalid_argument("TransformerConfig: d_model must be divisible by n_heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("TransformerConfig: dropout must be in [0,1)");
  }
};

/// Dropout switch and its randomness for one forward pass.
struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;
};

class SequenceTooLong : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Encoder output plus the key-padding information attention needs.
struct Memory {
  Tensor states;  // [B, S, D]
  std::size_t rows = 0;
  std::size_t len = 0;
  std::vector<std::size_t> valid;  // non-pad positions per row (words + eos)
};

class SharedEncDec {
 public:
  explicit SharedEncDec(TransformerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const TransformerConfig& config() const { return cfg_; }

  ParamSet init_params(std::uint64_t seed) const {
    Rng rng = make_rng(seed, "init");
    ParamSet p(seed);
    const std::size_t d = cfg_.d_model, f = cfg_.d_ff;
    p.add("tok_emb", normal({cfg_.vocab_size, d}, cfg_.embedding_init_std, rng));
    p.add("pos_emb", normal({cfg_.max_len, d}, cfg_.embedding_init_std, rng));
    p.add("lang_emb", normal({2, d}, cfg_.embedding_init_std, rng));
    auto attn = [&](const std::string& pre) {
      for (const char* w : {"q", "k", "v", "o"}) {
        p.add(pre + ".w" + w, xavier(d, d, rng));
        p.add(pre + ".b" + w, Tensor({d}));
      }
    };
    auto ln = [&](const std::string& pre) {
      p.add(pre + ".g", Tensor({d}, 1.0f));
      p.add(pre + ".b", Tensor({d}));
    };
    auto ffn = [&](const std::string& pre) {
      p.add(pre + ".w1", xavier(d, f, rng));
      p.add(pre + ".b1", Tensor({f}));
      p.add(pre + ".w2", xavier(f, d, rng));
      p.add(pre + ".b2", Tensor({d}));
    };
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const std::string e = "enc" + std::to_string(l);
      ln(e + ".ln1");
      attn(e + ".self");
      ln(e + ".ln2");
      ffn(e + ".ffn");
    }
    ln("enc.ln_f");
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const std::string dd = "dec" + std::to_string(l);
      ln(dd + ".ln1");
      attn(dd + ".self");
      ln(dd + ".ln2");
      attn(dd + ".cross");
      ln(dd + ".ln3");
      ffn(dd + ".ffn");
    }
    ln("dec.ln_f");
    p.add("out_bias", Tensor({cfg_.vocab_size}));
    return p;
  }

  /// Encodes raw word sequences; eos is appended to each row.
  Memory encode(Tape<float>& tape, const ParamSet& p, const std::vector<Sentence>& rows, const std::vector<Lang>& langs,
                const ForwardOptions& opt) const {
    if (rows.empty()) throw std::invalid_argument("encode: empty batch");
    if (langs.size() != rows.size()) throw std::invalid_argument("encode: one language per row required");
    Memory mem;
    mem.rows = rows.size();
    for (const auto& r : rows) mem.len = std::max(mem.len, r.size() + 1);
    check_len(mem.len, "encode");
    std::vector<TokenId> ids(mem.rows * mem.len, special::pad);
    for (std::size_t b = 0; b < mem.rows; ++b) {
      check_ids(rows[b]);
      std::copy(rows[b].begin(), rows[b].end(), ids.begin() + static_cast<std::ptrdiff_t>(b * mem.len));
      ids[b * mem.len + rows[b].size()] = special::eos;
      mem.valid.push_back(rows[b].size() + 1);
    }
    Tensor x = embed(tape, p, ids, langs, mem.rows, mem.len, opt);
    const auto pad_mask = key_pad_mask(mem.rows, mem.len, mem.len, mem.valid, false);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const std::string e = "enc" + std::to_string(l);
      Tensor h = norm(tape, p, e + ".ln1", x);
      h = attention(tape, p, e + ".self", h, h, mem.rows, mem.len, mem.len, pad_mask);
      x = ops::add(tape, x, ops::dropout(tape, h, cfg_.dropout, *rng_or_dummy(opt), opt.training));
      h = norm(tape, p, e + ".ln2", x);
      h = feed_forward(tape, p, e + ".ffn", h, opt);
      x = ops::add(tape, x, ops::dropout(tape, h, cfg_.dropout, *rng_or_dummy(opt), opt.training));
    }
    mem.states = norm(tape, p, "enc.ln_f", x);
    return mem;
  }

  Memory encode(Tape<float>& tape, const ParamSet& p, const TokenBatch& batch, Lang lang, const ForwardOptions& opt) const {
    return encode(tape, p, batch.sentences(), std::vector<Lang>(batch.rows, lang), opt);
  }

  /// Decoder inputs for target rows: [lang tag, y_1..y_n]; targets [y_1..y_n, eos].
  struct DecoderInput {
    std::vector<TokenId> inputs;   // rows * len
    std::vector<TokenId> targets;  // rows * len, -1 at padding
    std::size_t rows = 0;
    std::size_t len = 0;
    std::vector<std::size_t> valid;
  };

  DecoderInput decoder_input(const std::vector<Sentence>& targets, Lang lang) const {
    DecoderInput in;
    in.rows = targets.size();
    for (const auto& t : targets) in.len = std::max(in.len, t.size() + 1);
    check_len(in.len, "decode");
    in.inputs.assign(in.rows * in.len, special::pad);
    in.targets.assign(in.rows * in.len, -1);
    for (std::size_t b = 0; b < in.rows; ++b) {
      check_ids(targets[b]);
      const auto& t = targets[b];
      in.inputs[b * in.len] = lang_token(lang);
      for (std::size_t i = 0; i < t.size(); ++i) {
        in.inputs[b * in.len + i + 1] = t[i];
        in.targets[b * in.len + i] = t[i];
      }
      in.targets[b * in.len + t.size()] = special::eos;
      in.valid.push_back(t.size() + 1);
    }
    return in;
  }

  /// Logits [B, T, V] for teacher-forced decoding with causal masking.
  Tensor decode_logits(Tape<float>& tape, const ParamSet& p, const Memory& mem, const std::vector<TokenId>& inputs,
                       std::size_t rows, std::size_t len, const std::vector<std::size_t>& valid, Lang lang,
                       const ForwardOptions& opt) const {
    if (rows != mem.rows) throw std::invalid_argument("decode: target rows differ from memory rows");
    check_len(len, "decode");
    Tensor x = embed(tape, p, inputs, std::vector<Lang>(rows, lang), rows, len, opt);
    const auto self_mask = key_pad_mask(rows, len, len, valid, true);
    const auto cross_mask = key_pad_mask(rows, len, mem.len, mem.valid, false);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const std::string dd = "dec" + std::to_string(l);
      Tensor h = norm(tape, p, dd + ".ln1", x);
      h = attention(tape, p, dd + ".self", h, h, rows, len, len, self_mask);
      x = ops::add(tape, x, ops::dropout(tape, h, cfg_.dropout, *rng_or_dummy(opt), opt.training));
      h = norm(tape, p, dd + ".ln2", x);
      h = attention(tape, p, dd + ".cross", h, mem.states, rows, len, mem.len, cross_mask);
      x = ops::add(tape, x, ops::dropout(tape, h, cfg_.dropout, *rng_or_dummy(opt), opt.training));
      h = norm(tape, p, dd + ".ln3", x);
      h = feed_forward(tape, p, dd + ".ffn", h, opt);
      x = ops::add(tape, x, ops::dropout(tape, h, cfg_.dropout, *rng_or_dummy(opt), opt.training));
    }
    x = norm(tape, p, "dec.ln_f", x);
    return project(tape, p, x);
  }

  Tensor decode_teacher_forced(Tape<float>& tape, const ParamSet& p, const Memory& mem, const DecoderInput& in, Lang lang,
                               const ForwardOptions& opt) const {
    return decode_logits(tape, p, mem, in.inputs, in.rows, in.len, in.valid, lang, opt);
  }

  /// Mean NLL per target token of `targets` (language tgt_lang) given
  /// `sources` (language src_lang).
  Tensor seq2seq_loss(Tape<float>& tape, const ParamSet& p, const std::vector<Sentence>& sources, Lang src_lang,
                      const std::vector<Sentence>& targets, Lang tgt_lang, const ForwardOptions& opt) const {
    if (sources.size() != targets.size()) throw std::invalid_argument("seq2seq_loss: source/target row counts differ");
    Memory mem = encode(tape, p, sources, std::vector<Lang>(sources.size(), src_lang), opt);
    DecoderInput in = decoder_input(targets, tgt_lang);
    Tensor logits = decode_teacher_forced(tape, p, mem, in, tgt_lang, opt);
    Tensor flat = ops::reshape(tape, logits, {in.rows * in.len, cfg_.vocab_size});
    return ops::cross_entropy(tape, flat, std::span<const TokenId>(in.targets), -1);
  }

  /// Argmax decoding without gradient or dropout. At least one word is
  /// produced before eos; nothing after the first eos is returned. Uses a
  /// key/value cache; greedy_decode_reference() recomputes every prefix.
  std::vector<Sentence> greedy_decode(const ParamSet& p, const std::vector<Sentence>& sources, Lang src_lang, Lang tgt_lang,
                                      std::size_t max_new) const {
    if (sources.empty()) return {};
    NoGradTape<float> tape;
    Memory mem = encode(tape, p, sources, std::vector<Lang>(sources.size(), src_lang), ForwardOptions{});
    max_new = std::min(max_new, cfg_.max_len - 1);
    IncrementalDecoder dec(*this, p, mem, tgt_lang, max_new + 1);
    const std::size_t rows = sources.size();
    std::vector<Sentence> out(rows);
    std::vector<bool> done(rows, false);
    std::vector<TokenId> feed(rows, lang_token(tgt_lang));
    for (std::size_t step = 0; step < max_new; ++step) {
      const std::vector<float>& logits = dec.step(feed);
      if (!pick_tokens(logits.data(), 1, 0, step, out, done, feed)) break;
    }
    return out;
  }

  std::vector<Sentence> greedy_decode_reference(const ParamSet& p, const std::vector<Sentence>& sources, Lang src_lang,
                                                Lang tgt_lang, std::size_t max_new) const {
    if (sources.empty()) return {};
    NoGradTape<float> tape;
    const ForwardOptions eval{};
    Memory mem = encode(tape, p, sources, std::vector<Lang>(sources.size(), src_lang), eval);
    max_new = std::min(max_new, cfg_.max_len - 1);
    const std::size_t rows = sources.size();
    std::vector<Sentence> out(rows);
    std::vector<bool> done(rows, false);
    std::vector<TokenId> feed(rows);
    for (std::size_t step = 0; step < max_new; ++step) {
      const std::size_t len = step + 1;
      std::vector<TokenId> inputs(rows * len, special::pad);
      std::vector<std::size_t> valid(rows, len);
      for (std::size_t b = 0; b < rows; ++b) {
        inputs[b * len] = lang_token(tgt_lang);
        for (std::size_t i = 1; i < len; ++i) inputs[b * len + i] = i - 1 < out[b].size() ? out[b][i - 1] : special::pad;
      }
      Tensor logits = decode_logits(tape, p, mem, inputs, rows, len, valid, tgt_lang, eval);
      if (!pick_tokens(logits.data().data(), len, len - 1, step, out, done, feed)) break;
    }
    return out;
  }

  std::vector<Sentence> greedy_decode(const ParamSet& p, const TokenBatch& batch, Lang src_lang, Lang tgt_lang,
                                      std::size_t max_new) const {
    return greedy_decode(p, batch.sentences(), src_lang, tgt_lang, max_new);
  }

  /// Encoder-side logits [B, S, V] through the tied projection (masked-LM head).
  Tensor encoder_logits(Tape<float>& tape, const ParamSet& p, const Memory& mem) const { return project(tape, p, mem.states); }

 private:
  /// Argmax over words and eos at position `pos` of each row's logits
  /// (row stride `len` positions). Returns false once every row is done.
  bool pick_tokens(const float* logits, std::size_t len, std::size_t pos, std::size_t step, std::vector<Sentence>& out,
                   std::vector<bool>& done, std::vector<TokenId>& feed) const {
    bool all_done = true;
    for (std::size_t b = 0; b < out.size(); ++b) {
      if (done[b]) {
        feed[b] = special::pad;
        continue;
      }
      const float* row = logits + (b * len + pos) * cfg_.vocab_size;
      TokenId best = special::eos;
      float best_v = step == 0 ? -std::numeric_limits<float>::infinity() : row[special::eos];
      for (std::size_t v = special::count; v < cfg_.vocab_size; ++v) {
        if (row[v] > best_v) {
          best_v = row[v];
          best = static_cast<TokenId>(v);
        }
      }
      if (best == special::eos) {
        done[b] = true;
        feed[b] = special::pad;
      } else {
        out[b].push_back(best);
        feed[b] = best;
        all_done = false;
      }
    }
    return !all_done;
  }

  /// Inference-only decoder stepping one position at a time. Uses the same
  /// kernels and summation order as the taped forward pass.
  class IncrementalDecoder {
   public:
    IncrementalDecoder(const SharedEncDec& m, const ParamSet& p, const Memory& mem, Lang lang, std::size_t max_steps)
        : m_(m), p_(p), mem_(mem), lang_(lang), rows_(mem.rows), d_(m.cfg_.d_model) {
      const std::size_t layers = m.cfg_.n_layers;
      self_k_.assign(layers, std::vector<float>(rows_ * max_steps * d_, 0.0f));
      self_v_.assign(layers, std::vector<float>(rows_ * max_steps * d_, 0.0f));
      max_steps_ = max_steps;
      const std::size_t n = rows_ * mem.len;
      for (std::size_t l = 0; l < layers; ++l) {
        const std::string pre = "dec" + std::to_string(l) + ".cross";
        cross_k_.push_back(linear(pre + ".wk", pre + ".bk", mem.states.data().data(), n, d_, d_));
        cross_v_.push_back(linear(pre + ".wv", pre + ".bv", mem.states.data().data(), n, d_, d_));
      }
    }

    const std::vector<float>& step(const std::vector<TokenId>& tokens) {
      const auto& cfg = m_.cfg_;
      const std::size_t t = pos_++;
      if (t >= max_steps_) throw SequenceTooLong("greedy_decode: cache exhausted");
      std::vector<float> x(rows_ * d_);
      const float* tok = p_.at("tok_emb").data().data();
      const float* pe = p_.at("pos_emb").data().data() + t * d_;
      const float* le = p_.at("lang_emb").data().data() + static_cast<std::size_t>(lang_) * d_;
      for (std::size_t b = 0; b < rows_; ++b)
        for (std::size_t j = 0; j < d_; ++j) x[b * d_ + j] = (tok[static_cast<std::size_t>(tokens[b]) * d_ + j] + pe[j]) + le[j];
      for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string dd = "dec" + std::to_string(l);
        std::vector<float> h = norm(dd + ".ln1", x);
        std::vector<float> q = linear(dd + ".self.wq", dd + ".self.bq", h.data(), rows_, d_, d_);
        std::vector<float> k = linear(dd + ".self.wk", dd + ".self.bk", h.data(), rows_, d_, d_);
        std::vector<float> v = linear(dd + ".self.wv", dd + ".self.bv", h.data(), rows_, d_, d_);
        for (std::size_t b = 0; b < rows_; ++b) {
          std::copy_n(k.data() + b * d_, d_, self_k_[l].data() + (b * max_steps_ + t) * d_);
          std::copy_n(v.data() + b * d_, d_, self_v_[l].data() + (b * max_steps_ + t) * d_);
        }
        std::vector<std::size_t> all(rows_, t + 1);
        std::vector<float> ctx = attend(q, self_k_[l], self_v_[l], max_steps_, t + 1, all);
        add_into(x, linear(dd + ".self.wo", dd + ".self.bo", ctx.data(), rows_, d_, d_));
        h = norm(dd + ".ln2", x);
        q = linear(dd + ".cross.wq", dd + ".cross.bq", h.data(), rows_, d_, d_);
        ctx = attend(q, cross_k_[l], cross_v_[l], mem_.len, mem_.len, mem_.valid);
        add_into(x, linear(dd + ".cross.wo", dd + ".cross.bo", ctx.data(), rows_, d_, d_));
        h = norm(dd + ".ln3", x);
        std::vector<float> f = linear(dd + ".ffn.w1", dd + ".ffn.b1", h.data(), rows_, d_, cfg.d_ff);
        for (auto& z : f) z = 0.5f * z * (1.0f + std::erf(z * 0.70710678118654752440f));
        add_into(x, linear(dd + ".ffn.w2", dd + ".ffn.b2", f.data(), rows_, cfg.d_ff, d_));
      }
      std::vector<float> h = norm("dec.ln_f", x);
      logits_.assign(rows_ * cfg.vocab_size, 0.0f);
      ops::detail::gemm_nt(rows_, cfg.vocab_size, d_, h.data(), tok, logits_.data());
      const float* ob = p_.at("out_bias").data().data();
      for (std::size_t b = 0; b < rows_; ++b)
        for (std::size_t v = 0; v < cfg.vocab_size; ++v) logits_[b * cfg.vocab_size + v] += ob[v];
      return logits_;
    }

   private:
    std::vector<float> linear(const std::string& w, const std::string& bias, const float* x, std::size_t rows, std::size_t in,
                              std::size_t out) const {
      std::vector<float> y(rows * out, 0.0f);
      ops::detail::gemm_nn(rows, out, in, x, p_.at(w).data().data(), y.data());
      const float* bv = p_.at(bias).data().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < out; ++j) y[r * out + j] += bv[j];
      return y;
    }

    std::vector<float> norm(const std::string& pre, const std::vector<float>& x) const {
      const float* g = p_.at(pre + ".g").data().data();
      const float* bb = p_.at(pre + ".b").data().data();
      std::vector<float> y(x.size());
      for (std::size_t r = 0; r < rows_; ++r) {
        const float* xr = x.data() + r * d_;
        float mu = 0.0f;
        for (std::size_t j = 0; j < d_; ++j) mu += xr[j];
        mu /= static_cast<float>(d_);
        float var = 0.0f;
        for (std::size_t j = 0; j < d_; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<float>(d_);
        const float is = 1.0f / std::sqrt(var + 1e-5f);
        for (std::size_t j = 0; j < d_; ++j) y[r * d_ + j] = ((xr[j] - mu) * is) * g[j] + bb[j];
      }
      return y;
    }

    static void add_into(std::vector<float>& x, const std::vector<float>& y) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
    }

    /// One query per row against `len` cached keys (row stride `cap`);
    /// keys at index >= valid[b] are masked.
    std::vector<float> attend(const std::vector<float>& q, const std::vector<float>& keys, const std::vector<float>& values,
                              std::size_t cap, std::size_t len, const std::vector<std::size_t>& valid) const {
      const std::size_t heads = m_.cfg_.n_heads, dh = d_ / heads;
      const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
      std::vector<float> ctx(rows_ * d_, 0.0f);
      std::vector<float> kh(len * dh), vh(len * dh), qh(dh), sc(len);
      for (std::size_t b = 0; b < rows_; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t i = 0; i < len; ++i) {
            std::copy_n(keys.data() + (b * cap + i) * d_ + h * dh, dh, kh.data() + i * dh);
            std::copy_n(values.data() + (b * cap + i) * d_ + h * dh, dh, vh.data() + i * dh);
          }
          std::copy_n(q.data() + b * d_ + h * dh, dh, qh.data());
          std::fill(sc.begin(), sc.end(), 0.0f);
          ops::detail::gemm_nt(1, len, dh, qh.data(), kh.data(), sc.data());
          for (std::size_t i = 0; i < len; ++i) sc[i] = i >= valid[b] ? -1e9f : sc[i] * scale;
          float mx = -std::numeric_limits<float>::infinity();
          for (float s : sc) mx = std::max(mx, s);
          float z = 0.0f;
          for (auto& s : sc) {
            s = std::exp(s - mx);
            z += s;
          }
          for (auto& s : sc) s /= z;
          std::vector<float> out(dh, 0.0f);
          ops::detail::gemm_nn(1, dh, len, sc.data(), vh.data(), out.data());
          std::copy_n(out.data(), dh, ctx.data() + b * d_ + h * dh);
        }
      }
      return ctx;
    }

    const SharedEncDec& m_;
    const ParamSet& p_;
    const Memory& mem_;
    Lang lang_;
    std::size_t rows_;
    std::size_t d_;
    std::size_t max_steps_ = 0;
    std::size_t pos_ = 0;
    std::vector<std::vector<float>> self_k_, self_v_, cross_k_, cross_v_;
    std::vector<float> logits_;
  };

  static Tensor normal(Shape shape, double std, Rng& rng) {
    std::vector<float> v(numel(shape));
    for (auto& x : v) x = static_cast<float>(std * standard_normal(rng));
    return Tensor(std::move(shape), std::move(v));
  }

  static Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<float> v(fan_in * fan_out);
    for (auto& x : v) x = static_cast<float>(uniform(rng, -bound, bound));
    return Tensor({fan_in, fan_out}, std::move(v));
  }

  static Rng* rng_or_dummy(const ForwardOptions& opt) {
    static thread_local Rng dummy(0);
    return opt.rng ? opt.rng : &dummy;
  }

  void check_len(std::size_t len, const char* what) const {
    if (len > cfg_.max_len) {
      throw SequenceTooLong(std::string(what) + ": sequence of " + std::to_string(len) + " positions exceeds max_len " +
                            std::to_string(cfg_.max_len));
    }
  }

  void check_ids(const Sentence& s) const {
    for (TokenId t : s) {
      if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size) {
        throw std::invalid_argument("token id " + std::to_string(t) + " outside vocabulary of " + std::to_string(cfg_.vocab_size));
      }
    }
  }

  Tensor embed(Tape<float>& tape, const ParamSet& p, const std::vector<TokenId>& ids, const std::vector<Lang>& langs,
               std::size_t rows, std::size_t len, const ForwardOptions& opt) const {
    Tensor tok = ops::embedding(tape, p.at("tok_emb"), std::span<const TokenId>(ids), {rows, len});
    std::vector<TokenId> pos(len);
    for (std::size_t i = 0; i < len; ++i) pos[i] = static_cast<TokenId>(i);
    Tensor pe = ops::embedding(tape, p.at("pos_emb"), std::span<const TokenId>(pos), {len});
    std::vector<TokenId> lang_ids(rows * len);
    for (std::size_t b = 0; b < rows; ++b)
      std::fill_n(lang_ids.begin() + static_cast<std::ptrdiff_t>(b * len), len, static_cast<TokenId>(langs[b]));
    Tensor le = ops::embedding(tape, p.at("lang_emb"), std::span<const TokenId>(lang_ids), {rows, len});
    Tensor x = ops::add(tape, ops::add(tape, tok, pe), le);
    return ops::dropout(tape, x, cfg_.dropout, *rng_or_dummy(opt), opt.training);
  }

  Tensor norm(Tape<float>& tape, const ParamSet& p, const std::string& pre, const Tensor& x) const {
    return ops::layer_norm(tape, x, p.at(pre + ".g"), p.at(pre + ".b"));
  }

  Tensor linear(Tape<float>& tape, const ParamSet& p, const std::string& w, const std::string& b, const Tensor& x) const {
    return ops::add(tape, ops::matmul(tape, x, p.at(w)), p.at(b));
  }

  Tensor feed_forward(Tape<float>& tape, const ParamSet& p, const std::string& pre, const Tensor& x, const ForwardOptions&) const {
    Tensor h = ops::gelu(tape, linear(tape, p, pre + ".w1", pre + ".b1", x));
    return linear(tape, p, pre + ".w2", pre + ".b2", h);
  }

  /// mask[b, h, q, k] = 1 where attention is disallowed.
  std::vector<std::uint8_t> key_pad_mask(std::size_t rows, std::size_t lq, std::size_t lk, const std::vector<std::size_t>& valid,
                                         bool causal) const {
    const std::size_t heads = cfg_.n_heads;
    std::vector<std::uint8_t> m(rows * heads * lq * lk, 0);
    for (std::size_t b = 0; b < rows; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t q = 0; q < lq; ++q)
          for (std::size_t k = 0; k < lk; ++k) {
            const bool blocked = k >= valid[b] || (causal && k > q);
            m[((b * heads + h) * lq + q) * lk + k] = blocked ? 1 : 0;
          }
    return m;
  }

  Tensor attention(Tape<float>& tape, const ParamSet& p, const std::string& pre, const Tensor& xq, const Tensor& xkv,
                   std::size_t rows, std::size_t lq, std::size_t lk, const std::vector<std::uint8_t>& mask) const {
    const std::size_t heads = cfg_.n_heads, dh = cfg_.d_model / cfg_.n_heads;
    auto split = [&](const Tensor& t, std::size_t len) {
      return ops::permute(tape, ops::reshape(tape, t, {rows, len, heads, dh}), {0, 2, 1, 3});
    };
    Tensor q = split(linear(tape, p, pre + ".wq", pre + ".bq", xq), lq);
    Tensor k = split(linear(tape, p, pre + ".wk", pre + ".bk", xkv), lk);
    Tensor v = split(linear(tape, p, pre + ".wv", pre + ".bv", xkv), lk);
    Tensor scores = ops::scale(tape, ops::matmul(tape, q, k, true), 1.0f / std::sqrt(static_cast<float>(dh)));
    scores = ops::masked_fill(tape, scores, std::span<const std::uint8_t>(mask), -1e9f);
    Tensor probs = ops::softmax(tape, scores);
    Tensor ctx = ops::matmul(tape, probs, v);  // [B, H, Lq, dh]
    ctx = ops::reshape(tape, ops::permute(tape, ctx, {0, 2, 1, 3}), {rows, lq, cfg_.d_model});
    return linear(tape, p, pre + ".wo", pre + ".bo", ctx);
  }

  Tensor project(Tape<float>& tape, const ParamSet& p, const Tensor& x) const {
    return ops::add(tape, ops::matmul(tape, x, p.at("tok_emb"), true), p.at("out_bias"));
  }

  TransformerConfig cfg_;
};

}  // namespace metaumt
