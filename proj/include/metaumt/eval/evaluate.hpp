#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metaumt/data/synthetic.hpp"
#include "metaumt/eval/bleu.hpp"
#include "metaumt/model/transformer.hpp"

namespace metaumt {

enum class Direction { s2t, t2s };

inline std::string direction_name(Direction d) { return d == Direction::s2t ? "s2t" : "t2s"; }

inline Direction parse_direction(const std::string& s) {
  if (s == "s2t") return Direction::s2t;
  if (s == "t2s") return Direction::t2s;
  throw std::invalid_argument("unknown direction '" + s + "' (expected s2t or t2s)");
}

using SentencePairs = std::vector<std::pair<Sentence, Sentence>>;

/// Greedy translation in chunks; each chunk may generate up to its longest
/// source plus `extra` tokens.
inline std::vector<Sentence> translate_all(const SharedEncDec& model, const ParamSet& p, const std::vector<Sentence>& sources,
                                           Lang from, Lang to, std::size_t extra = 4, std::size_t chunk = 64) {
  std::vector<Sentence> out;
  out.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); i += chunk) {
    const std::size_t end = std::min(sources.size(), i + chunk);
    std::vector<Sentence> part(sources.begin() + static_cast<std::ptrdiff_t>(i), sources.begin() + static_cast<std::ptrdiff_t>(end));
    std::size_t longest = 0;
    for (const auto& s : part) longest = std::max(longest, s.size());
    auto hyp = model.greedy_decode(p, part, from, to, longest + extra);
    for (auto& h : hyp) out.push_back(std::move(h));
  }
  return out;
}

/// Test BLEU of greedy translations of (source, target) pairs in one direction.
inline double evaluate_model(const SharedEncDec& model, const ParamSet& p, const SentencePairs& pairs, Direction dir) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_model: no evaluation pairs");
  std::vector<Sentence> sources, refs;
  for (const auto& [s, t] : pairs) {
    sources.push_back(dir == Direction::s2t ? s : t);
    refs.push_back(dir == Direction::s2t ? t : s);
  }
  const Lang from = dir == Direction::s2t ? Lang::src : Lang::tgt;
  return corpus_bleu(translate_all(model, p, sources, from, other(from)), refs);
}

struct BleuPair {
  double s2t = 0.0;
  double t2s = 0.0;
  double mean() const { return 0.5 * (s2t + t2s); }
};

inline BleuPair evaluate_both(const SharedEncDec& model, const ParamSet& p, const SentencePairs& pairs) {
  return {evaluate_model(model, p, pairs, Direction::s2t), evaluate_model(model, p, pairs, Direction::t2s)};
}

/// Held-out pairs of one domain split into a parallel pool (for the
/// supervised baseline), a dev part and a test part.
struct EvalSplit {
  SentencePairs parallel;
  SentencePairs dev;
  SentencePairs test;
};

/// Shuffles eval pairs by seed, takes `parallel_words` source words for the
/// parallel pool (0 = none), then halves the rest into dev and test, each
/// truncated to its cap (0 = no cap).
inline EvalSplit split_eval_pairs(const SentencePairs& pairs, std::size_t parallel_words, std::size_t dev_max, std::size_t test_max,
                                  std::uint64_t seed) {
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(seed, "eval-split");
  shuffle(order.begin(), order.end(), rng);
  EvalSplit out;
  std::size_t pos = 0, used = 0;
  while (parallel_words > 0 && pos < order.size()) {
    const auto& pr = pairs[order[pos]];
    if (used + pr.first.size() > parallel_words) break;
    used += pr.first.size();
    out.parallel.push_back(pr);
    ++pos;
  }
  if (parallel_words > 0 && pos == order.size()) {
    throw DataError("split_eval_pairs: not enough pairs for a parallel pool of " + std::to_string(parallel_words) + " words");
  }
  const std::size_t rest = order.size() - pos;
  const std::size_t half = rest / 2;
  for (std::size_t i = 0; i < half; ++i) {
    if (dev_max == 0 || out.dev.size() < dev_max) out.dev.push_back(pairs[order[pos + i]]);
  }
  for (std::size_t i = half; i < rest; ++i) {
    if (test_max == 0 || out.test.size() < test_max) out.test.push_back(pairs[order[pos + i]]);
  }
  if (out.dev.empty() || out.test.empty()) throw DataError("split_eval_pairs: too few pairs left for dev and test");
  return out;
}

}  // namespace metaumt
