#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "metaumt/data/batching.hpp"
#include "metaumt/data/corpus_io.hpp"
#include "metaumt/data/noise.hpp"
#include "metaumt/data/synthetic.hpp"
#include "metaumt/meta/task.hpp"

using namespace metaumt;

namespace {

SyntheticLanguageSpec small_spec() {
  SyntheticLanguageSpec s;
  s.train_sentences = 300;
  s.eval_pairs = 100;
  return s;
}

const SyntheticLanguage& lang() {
  static SyntheticLanguage l(small_spec());
  return l;
}

const std::vector<DomainCorpus>& corpora() {
  static std::vector<DomainCorpus> c = generate_corpora(lang());
  return c;
}

}  // namespace

TEST(Synthetic, GenerationIsDeterministic) {
  const auto again = generate_corpora(small_spec());
  ASSERT_EQ(again.size(), corpora().size());
  for (std::size_t d = 0; d < again.size(); ++d) {
    EXPECT_EQ(again[d].src_sentences, corpora()[d].src_sentences);
    EXPECT_EQ(again[d].tgt_sentences, corpora()[d].tgt_sentences);
    EXPECT_EQ(again[d].eval_pairs, corpora()[d].eval_pairs);
  }
  SyntheticLanguageSpec other = small_spec();
  other.seed = 8;
  EXPECT_NE(generate_corpora(other)[0].src_sentences, corpora()[0].src_sentences);
}

TEST(Synthetic, TopicTokensStayInTheirDomain) {
  for (const auto& c : corpora()) {
    std::size_t topic_tokens = 0;
    for (const auto& s : c.src_sentences) {
      EXPECT_GE(s.size(), lang().spec().min_len);
      EXPECT_LE(s.size(), lang().spec().max_len);
      for (TokenId t : s) {
        const auto owner = lang().topic_domain(t);
        if (owner) {
          EXPECT_EQ(*owner, c.domain_id);
          ++topic_tokens;
        }
      }
    }
    for (const auto& s : c.tgt_sentences)
      for (TokenId t : lang().translate_back(s)) {
        const auto owner = lang().topic_domain(t);
        if (owner) EXPECT_EQ(*owner, c.domain_id);
      }
    EXPECT_GT(topic_tokens, 0u) << "domain " << c.domain_id;
  }
}

TEST(Synthetic, SidesAreNotAligned) {
  const auto& c = corpora()[0];
  std::size_t aligned = 0;
  for (std::size_t i = 0; i < c.src_sentences.size(); ++i) aligned += lang().translate(c.src_sentences[i]) == c.tgt_sentences[i];
  EXPECT_LT(aligned, c.src_sentences.size() / 10);
}

TEST(Synthetic, ReferenceIsCipherThenAdjacentSwap) {
  const Sentence s = corpora()[2].eval_pairs[0].first;
  const Sentence t = lang().translate(s);
  ASSERT_EQ(t.size(), s.size());
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
    EXPECT_EQ(t[i], lang().cipher(s[i + 1]));
    EXPECT_EQ(t[i + 1], lang().cipher(s[i]));
  }
  if (s.size() % 2) EXPECT_EQ(t.back(), lang().cipher(s.back()));
  EXPECT_EQ(lang().translate_back(t), s);
  for (const auto& [src, tgt] : corpora()[2].eval_pairs) EXPECT_EQ(lang().translate(src), tgt);
}

TEST(Synthetic, CipherIsAPermutationKeepingSpecials) {
  std::set<TokenId> image;
  for (TokenId id = 0; id < static_cast<TokenId>(lang().vocab().size()); ++id) {
    image.insert(lang().cipher(id));
    EXPECT_EQ(lang().decipher(lang().cipher(id)), id);
    if (id < special::count) EXPECT_EQ(lang().cipher(id), id);
  }
  EXPECT_EQ(image.size(), lang().vocab().size());
}

TEST(Synthetic, InvalidSpecsAreRejected) {
  SyntheticLanguageSpec s;
  s.min_len = 5;
  s.max_len = 3;
  EXPECT_THROW(SyntheticLanguage{s}, DataError);
  s = {};
  s.n_domains = 1;
  EXPECT_THROW(SyntheticLanguage{s}, DataError);
  s = {};
  s.domain_vocab_size = {10, 10};
  EXPECT_THROW(SyntheticLanguage{s}, DataError);
}

TEST(Vocabulary, TokenizeAndReload) {
  const auto& v = lang().vocab();
  const Sentence s = corpora()[1].src_sentences[3];
  EXPECT_EQ(v.tokenize(v.detokenize(s)), s);
  EXPECT_EQ(v.tokenize("no-such-token"), Sentence{special::unk});
  const auto path = std::filesystem::temp_directory_path() / "metaumt_vocab_test.txt";
  v.save(path.string());
  const Vocabulary w = Vocabulary::load(path.string());
  EXPECT_EQ(w.size(), v.size());
  EXPECT_EQ(w.detokenize(s), v.detokenize(s));
  std::filesystem::remove(path);
}

TEST(CorpusIo, RoundTrip) {
  const auto root = std::filesystem::temp_directory_path() / "metaumt_corpus_test";
  std::filesystem::remove_all(root);
  write_corpora(root, lang().vocab(), corpora());
  const auto back = read_corpora(root, lang().vocab());
  ASSERT_EQ(back.size(), corpora().size());
  EXPECT_EQ(back[5].tgt_sentences, corpora()[5].tgt_sentences);
  EXPECT_EQ(back[5].eval_pairs, corpora()[5].eval_pairs);
  std::filesystem::remove_all(root);
}

TEST(Noise, DropRateMatchesProbability) {
  Rng rng(11);
  Sentence s(20);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<TokenId>(100 + i);
  std::size_t kept = 0;
  const int trials = 5000;
  for (int i = 0; i < trials; ++i) kept += add_noise(s, 0.1, 0, rng).size();
  const double rate = 1.0 - static_cast<double>(kept) / (trials * 20.0);
  EXPECT_NEAR(rate, 0.1, 0.01);
}

TEST(Noise, ShuffleDisplacementIsBounded) {
  Rng rng(12);
  Sentence s(12);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<TokenId>(i);
  bool moved = false;
  for (int trial = 0; trial < 2000; ++trial) {
    const Sentence out = add_noise(s, 0.0, 3, rng);
    ASSERT_EQ(out.size(), s.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto d = std::abs(static_cast<long>(i) - static_cast<long>(out[i]));
      EXPECT_LE(d, 3);
      moved |= d > 0;
    }
  }
  EXPECT_TRUE(moved);
}

TEST(Noise, SomethingAlwaysSurvives) {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) EXPECT_GE(add_noise(Sentence{7, 8}, 0.95, 2, rng).size(), 1u);
  EXPECT_TRUE(add_noise(Sentence{}, 0.1, 3, rng).empty());
  EXPECT_THROW(add_noise(Sentence{1}, 1.0, 3, rng), std::invalid_argument);
}

TEST(Batching, EpochCoversEverySentenceOnceWithinBudget) {
  const auto& side = corpora()[3].src_sentences;
  const auto batches = make_batches(side, 64, 99);
  std::multiset<Sentence> seen;
  for (const auto& b : batches) {
    EXPECT_LE(b.token_count(), 64u);
    EXPECT_GT(b.rows, 0u);
    for (const auto& s : b.sentences()) seen.insert(s);
    for (std::size_t r = 0; r < b.rows; ++r)
      for (std::size_t i = b.lengths[r]; i < b.max_len; ++i) EXPECT_EQ(b.tokens[r * b.max_len + i], special::pad);
  }
  EXPECT_EQ(seen, std::multiset<Sentence>(side.begin(), side.end()));
  EXPECT_EQ(make_batches(side, 64, 99).front().tokens, batches.front().tokens);
  EXPECT_THROW(make_batches(side, 3, 1), DataError);
  EXPECT_THROW(make_batches({}, 64, 1), DataError);
}

TEST(Batching, SampledBatchHasNoRepeatsAndRespectsBudget) {
  Rng rng(5);
  std::vector<Sentence> side;
  for (TokenId i = 0; i < 50; ++i) side.push_back({static_cast<TokenId>(10 + i), 8, 9});
  for (int trial = 0; trial < 50; ++trial) {
    const auto rows = sample_sentences(side, 30, rng);
    EXPECT_LE(token_count(rows), 30u);
    EXPECT_EQ(std::set<Sentence>(rows.begin(), rows.end()).size(), rows.size());
  }
}

TEST(Budget, InDomainSampleStaysWithinBudget) {
  const auto& c = corpora()[6];
  const std::size_t budget = 500;
  const DomainCorpus a = sample_in_domain(c, budget, 42);
  for (Lang l : {Lang::src, Lang::tgt}) {
    const std::size_t n = token_count(a.side(l));
    EXPECT_LE(n, budget);
    EXPECT_GT(n, budget - lang().spec().max_len);
  }
  EXPECT_EQ(sample_in_domain(c, budget, 42).src_sentences, a.src_sentences);
  EXPECT_NE(sample_in_domain(c, budget, 43).src_sentences, a.src_sentences);
  EXPECT_THROW(sample_in_domain(c, token_count(c.src_sentences) + 1, 1), DataError);
  EXPECT_THROW(sample_in_domain(c, 0, 1), DataError);
  EXPECT_EQ(sample_in_domain(c, token_count(c.src_sentences), 1).src_sentences, c.src_sentences);
}

TEST(Budget, ParallelSampleCountsSourceWords) {
  const auto pairs = sample_parallel(corpora()[6].eval_pairs, 200, 3);
  std::size_t words = 0;
  for (const auto& [s, t] : pairs) {
    words += s.size();
    EXPECT_EQ(lang().translate(s), t);
  }
  EXPECT_LE(words, 200u);
  EXPECT_GT(words, 190u);
  EXPECT_THROW(sample_parallel(corpora()[6].eval_pairs, 1000000, 3), DataError);
}

TEST(CrossDomainBatch, MixControlsDomainShare) {
  Rng rng(8);
  auto own_share = [&](double mix) {
    std::size_t own = 0, total = 0;
    const auto& mine = corpora()[1].src_sentences;
    const std::set<Sentence> own_set(mine.begin(), mine.end());
    for (int i = 0; i < 40; ++i) {
      const TokenBatch b = sample_cross_domain_batch(corpora(), 1, Lang::src, mix, 128, rng);
      EXPECT_LE(b.token_count(), 128u);
      for (const auto& s : b.sentences()) {
        own += own_set.count(s) ? s.size() : 0;
        total += s.size();
      }
    }
    return static_cast<double>(own) / static_cast<double>(total);
  };
  EXPECT_DOUBLE_EQ(own_share(0.0), 1.0);
  EXPECT_LT(own_share(1.0), 0.05);
  EXPECT_NEAR(own_share(0.5), 0.5, 0.1);
}
