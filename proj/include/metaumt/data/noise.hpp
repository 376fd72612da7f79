#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "metaumt/data/vocabulary.hpp"
#include "metaumt/rng.hpp"

namespace metaumt {

struct NoiseConfig {
  double drop_prob = 0.1;
  std::size_t shuffle_window = 3;
};

/// Word drop followed by a bounded local shuffle. Sorting the keys
/// i + U[0, window + 1) moves no token more than `window` positions from its
/// post-drop index. At least one token always survives the drop.
inline Sentence add_noise(const Sentence& sentence, double drop_prob, std::size_t shuffle_window, Rng& rng) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) throw std::invalid_argument("add_noise: drop_prob must be in [0,1)");
  if (sentence.empty()) return {};
  Sentence kept;
  kept.reserve(sentence.size());
  if (drop_prob > 0.0) {
    for (TokenId t : sentence)
      if (uniform01(rng) >= drop_prob) kept.push_back(t);
    if (kept.empty()) kept.push_back(sentence[uniform_index(rng, sentence.size())]);
  } else {
    kept = sentence;
  }
  if (shuffle_window == 0 || kept.size() < 2) return kept;
  std::vector<double> keys(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) keys[i] = static_cast<double>(i) + uniform01(rng) * static_cast<double>(shuffle_window + 1);
  std::vector<std::size_t> order(kept.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  Sentence out(kept.size());
  for (std::size_t i = 0; i < order.size(); ++i) out[i] = kept[order[i]];
  return out;
}

inline Sentence add_noise(const Sentence& sentence, const NoiseConfig& cfg, Rng& rng) {
  return add_noise(sentence, cfg.drop_prob, cfg.shuffle_window, rng);
}

}  // namespace metaumt
