#include <gtest/gtest.h>

#include <cmath>

#include "metaumt/eval/bleu.hpp"
#include "metaumt/rng.hpp"
#include "support/bleu_oracle.hpp"

using namespace metaumt;

namespace {

Sentence random_sentence(Rng& rng, std::size_t min_len, std::size_t max_len, std::size_t vocab) {
  Sentence s(min_len + uniform_index(rng, max_len - min_len + 1));
  for (auto& t : s) t = static_cast<TokenId>(uniform_index(rng, vocab));
  return s;
}

}  // namespace

TEST(Bleu, IdenticalCorpusScores100) {
  const std::vector<Sentence> refs{{1, 2, 3, 4, 5}, {6, 7, 8, 9}};
  EXPECT_NEAR(corpus_bleu(refs, refs), 100.0, 1e-9);
}

TEST(Bleu, BrevityPenaltyExample) {
  // a b c d  against  a b c d e
  const std::vector<Sentence> hyp{{1, 2, 3, 4}}, ref{{1, 2, 3, 4, 5}};
  const double expected = 100.0 * std::exp(1.0 - 5.0 / 4.0);
  EXPECT_NEAR(corpus_bleu(hyp, ref), expected, 1e-9);
  EXPECT_NEAR(corpus_bleu(hyp, ref), 77.88, 5e-3);
}

TEST(Bleu, NoOverlapIsZero) {
  EXPECT_EQ(corpus_bleu({{1, 2, 3}}, {{4, 5, 6}}), 0.0);
  EXPECT_EQ(corpus_bleu({{}}, {{4, 5, 6}}), 0.0);
}

TEST(Bleu, MatchesBruteForceOnRandomPairs) {
  Rng rng(11);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + uniform_index(rng, 4);
    std::vector<Sentence> hyps, refs;
    for (std::size_t k = 0; k < n; ++k) {
      refs.push_back(random_sentence(rng, 1, 9, 6));
      hyps.push_back(random_sentence(rng, 0, 9, 6));
    }
    const double lib = corpus_bleu(hyps, refs);
    const double brute = metaumt::testing::brute_force_bleu(hyps, refs);
    ASSERT_NEAR(lib, brute, 1e-9) << "case " << i;
    worst = std::max(worst, std::abs(lib - brute));
  }
  RecordProperty("worst_abs_diff", std::to_string(worst));
}

TEST(Bleu, TruncatingHypothesisNeverHelps) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Sentence ref = random_sentence(rng, 6, 12, 20);
    double prev = corpus_bleu({ref}, {ref});
    for (std::size_t len = ref.size() - 1; len >= 1; --len) {
      const double b = corpus_bleu({Sentence(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(len))}, {ref});
      EXPECT_LE(b, prev + 1e-12);
      prev = b;
    }
  }
}

TEST(Bleu, InvalidInputsThrow) {
  EXPECT_THROW(corpus_bleu({{1}}, {{1}, {2}}), std::invalid_argument);
  EXPECT_THROW(corpus_bleu({}, {}), std::invalid_argument);
  EXPECT_THROW(corpus_bleu({{1}}, {{}}), std::invalid_argument);
  EXPECT_THROW(corpus_bleu({{1}}, {{1}}, 0), std::invalid_argument);
}
