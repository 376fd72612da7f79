#pragma once

// Synthetic multi-domain language pair. Source sentences come from a small
// bigram grammar over shared function words; every "opener" function word is
// followed by a topic token drawn from the current domain's own block. The
// target language applies a block-preserving token cipher followed by a swap
// of positions (2k, 2k+1), so each source sentence has exactly one reference.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metaumt/data/vocabulary.hpp"
#include "metaumt/rng.hpp"

namespace metaumt {

class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SyntheticLanguageSpec {
  std::size_t shared_vocab_size = 24;           // function words
  std::size_t default_domain_vocab_size = 16;   // topic tokens per domain
  std::vector<std::size_t> domain_vocab_size;   // per-domain override; empty = default for all
  std::size_t n_domains = 8;
  std::size_t min_len = 4;
  std::size_t max_len = 10;
  std::size_t successors_per_word = 3;  // grammar branching factor
  double opener_fraction = 0.34;        // share of function words that introduce a topic token
  double zipf_exponent = 1.0;
  double anchor_fraction = 0.25;        // share of tokens the cipher leaves unchanged
  bool reorder = true;
  std::size_t train_sentences = 2000;   // per language side, per domain
  std::size_t eval_pairs = 2000;        // aligned held-out pairs per domain
  std::uint64_t seed = 7;

  std::size_t topic_block_size(std::size_t domain) const {
    return domain_vocab_size.empty() ? default_domain_vocab_size : domain_vocab_size.at(domain);
  }

  void validate() const {
    if (n_domains < 2) throw DataError("language spec: n_domains must be >= 2");
    if (shared_vocab_size < 8) throw DataError("language spec: shared_vocab_size must be >= 8");
    if (!domain_vocab_size.empty() && domain_vocab_size.size() != n_domains) {
      throw DataError("language spec: domain_vocab_size needs one entry per domain");
    }
    for (std::size_t d = 0; d < n_domains; ++d) {
      if (topic_block_size(d) < 8) throw DataError("language spec: domain " + std::to_string(d) + " topic block must hold >= 8 tokens");
    }
    if (min_len == 0) throw DataError("language spec: min_len must be >= 1");
    if (min_len > max_len) throw DataError("language spec: min_len > max_len");
    if (successors_per_word == 0 || successors_per_word > shared_vocab_size) throw DataError("language spec: bad successors_per_word");
    if (!(opener_fraction > 0.0 && opener_fraction < 1.0)) throw DataError("language spec: opener_fraction must be in (0,1)");
    if (!(anchor_fraction >= 0.0 && anchor_fraction <= 1.0)) throw DataError("language spec: anchor_fraction must be in [0,1]");
    if (train_sentences == 0) throw DataError("language spec: train_sentences must be > 0");
  }
};

/// Unpaired training sides plus aligned held-out pairs for one domain.
struct DomainCorpus {
  std::size_t domain_id = 0;
  std::vector<Sentence> src_sentences;
  std::vector<Sentence> tgt_sentences;  // sampled independently of src_sentences
  std::vector<std::pair<Sentence, Sentence>> eval_pairs;

  const std::vector<Sentence>& side(Lang l) const { return l == Lang::src ? src_sentences : tgt_sentences; }
};

class SyntheticLanguage {
 public:
  explicit SyntheticLanguage(SyntheticLanguageSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    build_vocabulary();
    build_grammar();
    build_cipher();
  }

  const SyntheticLanguageSpec& spec() const { return spec_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::size_t n_domains() const { return spec_.n_domains; }
  std::span<const TokenId> function_words() const { return function_words_; }
  std::span<const TokenId> topic_block(std::size_t domain) const { return topic_blocks_.at(domain); }

  /// Domain owning a topic token, or nullopt for function words / specials.
  std::optional<std::size_t> topic_domain(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= owner_.size() || owner_[id] < 0) return std::nullopt;
    return static_cast<std::size_t>(owner_[id]);
  }

  TokenId cipher(TokenId id) const { return cipher_.at(static_cast<std::size_t>(id)); }
  TokenId decipher(TokenId id) const { return decipher_.at(static_cast<std::size_t>(id)); }

  Sentence reorder(Sentence s) const {
    if (spec_.reorder)
      for (std::size_t i = 0; i + 1 < s.size(); i += 2) std::swap(s[i], s[i + 1]);
    return s;
  }
  // The adjacent swap is an involution.
  Sentence reorder_inverse(Sentence s) const { return reorder(std::move(s)); }

  /// Ground-truth reference for a source sentence.
  Sentence translate(const Sentence& src) const {
    Sentence out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = cipher(src[i]);
    return reorder(std::move(out));
  }

  Sentence translate_back(const Sentence& tgt) const {
    Sentence s = reorder_inverse(tgt);
    for (auto& t : s) t = decipher(t);
    return s;
  }

  Sentence sample_sentence(std::size_t domain, Rng& rng) const {
    const std::size_t len = spec_.min_len + uniform_index(rng, spec_.max_len - spec_.min_len + 1);
    Sentence s;
    s.reserve(len);
    std::size_t state = start_state();
    const auto& block = topic_blocks_.at(domain);
    const auto& mixture = topic_mixture_.at(domain);
    while (s.size() < len) {
      if (state < spec_.shared_vocab_size && is_opener_[state]) {
        s.push_back(block[sample_categorical(mixture, rng)]);
        state = after_topic_state();
      } else {
        const auto& row = transitions_[state];
        const std::size_t next = row.successors[sample_categorical(row.weights, rng)];
        s.push_back(function_words_[next]);
        state = next;
      }
    }
    return s;
  }

  const std::vector<double>& topic_mixture(std::size_t domain) const { return topic_mixture_.at(domain); }

 private:
  struct Row {
    std::vector<std::size_t> successors;
    std::vector<double> weights;
  };

  std::size_t start_state() const { return spec_.shared_vocab_size; }
  std::size_t after_topic_state() const { return spec_.shared_vocab_size + 1; }

  static std::size_t sample_categorical(const std::vector<double>& w, Rng& rng) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = uniform01(rng) * total;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (u < w[i]) return i;
      u -= w[i];
    }
    return w.size() - 1;
  }

  std::vector<double> zipf(std::size_t n) const {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), spec_.zipf_exponent);
    return w;
  }

  void build_vocabulary() {
    for (std::size_t i = 0; i < spec_.shared_vocab_size; ++i) function_words_.push_back(vocab_.add("w" + std::to_string(i)));
    for (std::size_t d = 0; d < spec_.n_domains; ++d) {
      std::vector<TokenId> block;
      for (std::size_t k = 0; k < spec_.topic_block_size(d); ++k)
        block.push_back(vocab_.add("d" + std::to_string(d) + "_" + std::to_string(k)));
      topic_blocks_.push_back(std::move(block));
    }
    owner_.assign(vocab_.size(), -1);
    for (std::size_t d = 0; d < topic_blocks_.size(); ++d)
      for (TokenId t : topic_blocks_[d]) owner_[static_cast<std::size_t>(t)] = static_cast<int>(d);
  }

  void build_grammar() {
    Rng rng = make_rng(spec_.seed, "grammar");
    const std::size_t f = spec_.shared_vocab_size;
    is_opener_.assign(f, false);
    std::vector<std::size_t> order(f);
    for (std::size_t i = 0; i < f; ++i) order[i] = i;
    shuffle(order.begin(), order.end(), rng);
    const auto n_openers = std::max<std::size_t>(1, static_cast<std::size_t>(spec_.opener_fraction * static_cast<double>(f)));
    for (std::size_t i = 0; i < n_openers; ++i) is_opener_[order[i]] = true;
    // rows 0..f-1: after function word i; row f: sentence start; row f+1: after a topic token
    transitions_.resize(f + 2);
    for (auto& row : transitions_) {
      std::vector<std::size_t> cand(f);
      for (std::size_t i = 0; i < f; ++i) cand[i] = i;
      shuffle(cand.begin(), cand.end(), rng);
      row.successors.assign(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(spec_.successors_per_word));
      row.weights = zipf(spec_.successors_per_word);
    }
    for (std::size_t d = 0; d < spec_.n_domains; ++d) {
      Rng drng = make_rng(spec_.seed, "topic-mixture", d);
      auto w = zipf(spec_.topic_block_size(d));
      shuffle(w.begin(), w.end(), drng);
      topic_mixture_.push_back(std::move(w));
    }
  }

  void permute_block(std::span<const TokenId> block, Rng& rng) {
    std::vector<TokenId> movers;
    for (TokenId t : block) {
      if (uniform01(rng) >= spec_.anchor_fraction) movers.push_back(t);
    }
    std::vector<TokenId> images = movers;
    if (images.size() > 1) {
      // cyclic shift of a shuffled order: no mover maps to itself
      shuffle(images.begin(), images.end(), rng);
      std::vector<TokenId> shifted(images.size());
      for (std::size_t i = 0; i < images.size(); ++i) shifted[i] = images[(i + 1) % images.size()];
      for (std::size_t i = 0; i < images.size(); ++i) cipher_[static_cast<std::size_t>(images[i])] = shifted[i];
    }
  }

  void build_cipher() {
    cipher_.resize(vocab_.size());
    for (std::size_t i = 0; i < cipher_.size(); ++i) cipher_[i] = static_cast<TokenId>(i);
    Rng rng = make_rng(spec_.seed, "cipher");
    permute_block(function_words_, rng);
    for (const auto& block : topic_blocks_) permute_block(block, rng);
    decipher_.assign(cipher_.size(), 0);
    for (std::size_t i = 0; i < cipher_.size(); ++i) decipher_[static_cast<std::size_t>(cipher_[i])] = static_cast<TokenId>(i);
  }

  SyntheticLanguageSpec spec_;
  Vocabulary vocab_;
  std::vector<TokenId> function_words_;
  std::vector<std::vector<TokenId>> topic_blocks_;
  std::vector<int> owner_;
  std::vector<bool> is_opener_;
  std::vector<Row> transitions_;
  std::vector<std::vector<double>> topic_mixture_;
  std::vector<TokenId> cipher_;
  std::vector<TokenId> decipher_;
};

/// Each training side and the held-out pairs use their own rng stream, so the
/// i-th source and i-th target training sentences are independent draws.
inline std::vector<DomainCorpus> generate_corpora(const SyntheticLanguage& lang) {
  const auto& spec = lang.spec();
  std::vector<DomainCorpus> out;
  for (std::size_t d = 0; d < spec.n_domains; ++d) {
    DomainCorpus c;
    c.domain_id = d;
    Rng src_rng = make_rng(spec.seed, "train-src", d);
    Rng tgt_rng = make_rng(spec.seed, "train-tgt", d);
    Rng eval_rng = make_rng(spec.seed, "eval", d);
    for (std::size_t i = 0; i < spec.train_sentences; ++i) c.src_sentences.push_back(lang.sample_sentence(d, src_rng));
    for (std::size_t i = 0; i < spec.train_sentences; ++i) c.tgt_sentences.push_back(lang.translate(lang.sample_sentence(d, tgt_rng)));
    for (std::size_t i = 0; i < spec.eval_pairs; ++i) {
      Sentence s = lang.sample_sentence(d, eval_rng);
      Sentence t = lang.translate(s);
      c.eval_pairs.emplace_back(std::move(s), std::move(t));
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<DomainCorpus> generate_corpora(const SyntheticLanguageSpec& spec) {
  return generate_corpora(SyntheticLanguage(spec));
}

namespace detail {

inline std::vector<Sentence> sample_side(const std::vector<Sentence>& side, std::size_t word_budget, Rng& rng) {
  const std::size_t total = token_count(side);
  if (word_budget > total) {
    throw DataError("sample_in_domain: budget of " + std::to_string(word_budget) + " words exceeds corpus side of " +
                    std::to_string(total) + " words");
  }
  if (word_budget == total) return side;
  std::vector<std::size_t> idx(side.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  shuffle(idx.begin(), idx.end(), rng);
  std::vector<Sentence> out;
  std::size_t used = 0;
  for (std::size_t i : idx) {
    if (used + side[i].size() > word_budget) break;
    used += side[i].size();
    out.push_back(side[i]);
  }
  return out;
}

}  // namespace detail

/// Low-resource subsample: each training side keeps whole sentences, drawn
/// without replacement, until the next one would exceed `word_budget`.
inline DomainCorpus sample_in_domain(const DomainCorpus& corpus, std::size_t word_budget, std::uint64_t seed) {
  if (word_budget == 0) throw DataError("sample_in_domain: budget must be > 0");
  DomainCorpus out;
  out.domain_id = corpus.domain_id;
  Rng src_rng = make_rng(seed, "in-domain-src", corpus.domain_id);
  Rng tgt_rng = make_rng(seed, "in-domain-tgt", corpus.domain_id);
  out.src_sentences = detail::sample_side(corpus.src_sentences, word_budget, src_rng);
  out.tgt_sentences = detail::sample_side(corpus.tgt_sentences, word_budget, tgt_rng);
  out.eval_pairs = corpus.eval_pairs;
  return out;
}

/// Parallel subsample of aligned pairs, budget counted on the source side.
inline std::vector<std::pair<Sentence, Sentence>> sample_parallel(const std::vector<std::pair<Sentence, Sentence>>& pairs,
                                                                  std::size_t word_budget, std::uint64_t seed) {
  std::size_t total = 0;
  for (const auto& p : pairs) total += p.first.size();
  if (word_budget > total) {
    throw DataError("sample_parallel: budget of " + std::to_string(word_budget) + " words exceeds " + std::to_string(total));
  }
  std::vector<std::size_t> idx(pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = make_rng(seed, "parallel");
  shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::pair<Sentence, Sentence>> out;
  std::size_t used = 0;
  for (std::size_t i : idx) {
    if (used + pairs[i].first.size() > word_budget) break;
    used += pairs[i].first.size();
    out.push_back(pairs[i]);
  }
  return out;
}

}  // namespace metaumt
