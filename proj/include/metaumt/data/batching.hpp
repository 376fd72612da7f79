#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaumt/data/synthetic.hpp"
#include "metaumt/data/vocabulary.hpp"
#include "metaumt/rng.hpp"

namespace metaumt {

/// Padded token matrix. Rows hold raw word ids only; the model adds the
/// language tag and eos markers itself.
struct TokenBatch {
  std::size_t rows = 0;
  std::size_t max_len = 0;
  std::vector<TokenId> tokens;  // rows * max_len, padded with special::pad
  std::vector<std::size_t> lengths;
  Lang lang = Lang::src;
  std::size_t domain = 0;

  static TokenBatch from_sentences(const std::vector<Sentence>& sentences, Lang lang, std::size_t domain) {
    TokenBatch b;
    b.rows = sentences.size();
    b.lang = lang;
    b.domain = domain;
    for (const auto& s : sentences) b.max_len = std::max(b.max_len, s.size());
    b.tokens.assign(b.rows * b.max_len, special::pad);
    for (std::size_t r = 0; r < b.rows; ++r) {
      b.lengths.push_back(sentences[r].size());
      std::copy(sentences[r].begin(), sentences[r].end(), b.tokens.begin() + static_cast<std::ptrdiff_t>(r * b.max_len));
    }
    return b;
  }

  Sentence row(std::size_t r) const {
    auto first = tokens.begin() + static_cast<std::ptrdiff_t>(r * max_len);
    return Sentence(first, first + static_cast<std::ptrdiff_t>(lengths[r]));
  }

  std::vector<Sentence> sentences() const {
    std::vector<Sentence> out;
    for (std::size_t r = 0; r < rows; ++r) out.push_back(row(r));
    return out;
  }

  std::size_t token_count() const { return std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}); }
  bool empty() const { return rows == 0; }
};

/// One epoch of batches: sentences shuffled by `seed`, then packed greedily
/// so that no batch holds more than `tokens_per_batch` words.
inline std::vector<TokenBatch> make_batches(const std::vector<Sentence>& side, std::size_t tokens_per_batch, std::uint64_t seed,
                                            Lang lang = Lang::src, std::size_t domain = 0) {
  if (side.empty()) throw DataError("make_batches: empty corpus side");
  for (const auto& s : side) {
    if (s.size() > tokens_per_batch) {
      throw DataError("make_batches: sentence of " + std::to_string(s.size()) + " tokens exceeds budget " + std::to_string(tokens_per_batch));
    }
  }
  std::vector<std::size_t> order(side.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(order.begin(), order.end(), rng);
  std::vector<TokenBatch> out;
  std::vector<Sentence> current;
  std::size_t used = 0;
  for (std::size_t i : order) {
    if (used + side[i].size() > tokens_per_batch && !current.empty()) {
      out.push_back(TokenBatch::from_sentences(current, lang, domain));
      current.clear();
      used = 0;
    }
    current.push_back(side[i]);
    used += side[i].size();
  }
  if (!current.empty()) out.push_back(TokenBatch::from_sentences(current, lang, domain));
  return out;
}

/// Random batch of whole sentences (no repeats within the batch) filling up
/// to `tokens_per_batch` words.
inline std::vector<Sentence> sample_sentences(const std::vector<Sentence>& side, std::size_t tokens_per_batch, Rng& rng) {
  if (side.empty()) throw DataError("sample_sentences: empty corpus side");
  std::vector<Sentence> out;
  std::vector<std::size_t> taken;
  std::size_t used = 0;
  const std::size_t max_draws = side.size();
  while (taken.size() < max_draws) {
    const std::size_t i = uniform_index(rng, side.size());
    if (std::find(taken.begin(), taken.end(), i) != taken.end()) continue;
    if (used + side[i].size() > tokens_per_batch && !out.empty()) break;
    taken.push_back(i);
    used += side[i].size();
    out.push_back(side[i]);
  }
  return out;
}

inline TokenBatch sample_batch(const DomainCorpus& corpus, Lang lang, std::size_t tokens_per_batch, Rng& rng) {
  return TokenBatch::from_sentences(sample_sentences(corpus.side(lang), tokens_per_batch, rng), lang, corpus.domain_id);
}

}  // namespace metaumt
