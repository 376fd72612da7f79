#include <gtest/gtest.h>

#include "metaumt/losses.hpp"
#include "metaumt/meta/task.hpp"

using namespace metaumt;

namespace {

struct World {
  SyntheticLanguage lang;
  std::vector<DomainCorpus> corpora;
  SharedEncDec model;
  World() : lang(spec()), corpora(generate_corpora(lang)), model(config(lang.vocab().size())) {}

  static SyntheticLanguageSpec spec() {
    SyntheticLanguageSpec s;
    s.train_sentences = 200;
    s.eval_pairs = 10;
    return s;
  }
  static TransformerConfig config(std::size_t vocab) {
    TransformerConfig c;
    c.n_layers = 1;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_len = 16;
    c.vocab_size = vocab;
    return c;
  }
};

const World& world() {
  static World w;
  return w;
}

std::vector<std::vector<float>> grads_of(const ParamSet& p) {
  std::vector<std::vector<float>> out;
  for (std::size_t i = 0; i < p.size(); ++i) out.push_back(p[i].has_grad() ? p[i].grad() : std::vector<float>(p[i].numel(), 0.0f));
  return out;
}

}  // namespace

// Generation runs without a tape, so the bt gradient must equal the gradient
// obtained with the pseudo sources supplied as precomputed constants.
TEST(BackTranslation, GradientIsDetachedFromGeneration) {
  const auto& w = world();
  Rng data(1);
  for (int trial = 0; trial < 3; ++trial) {
    ParamSet p = w.model.init_params(100 + trial);
    Rng noise(2 + trial);
    for (std::size_t i = 0; i < p.size(); ++i)
      for (auto& v : p[i].data()) v += static_cast<float>(0.3 * standard_normal(noise));
    const TokenBatch xs = sample_batch(w.corpora[trial], Lang::src, 48, data);
    const TokenBatch ys = sample_batch(w.corpora[trial], Lang::tgt, 48, data);

    Rng r1(7), r2(7);
    p.zero_grad();
    Tape<float> t1;
    const Tensor l1 = bt_loss(t1, w.model, p, xs, ys, r1, 4, true);
    t1.backward(l1);
    const auto g1 = grads_of(p);

    const PseudoPairs pseudo = generate_pseudo_pairs(w.model, p.deep_clone(), xs, ys, 4);
    p.zero_grad();
    Tape<float> t2;
    const Tensor l2 = bt_loss_from_pseudo(t2, w.model, p, xs, ys, pseudo, r2, true);
    t2.backward(l2);
    EXPECT_EQ(l1.item(), l2.item());
    EXPECT_EQ(grads_of(p), g1);
    EXPECT_EQ(t1.size(), t2.size());
  }
}

TEST(BackTranslation, PseudoSourcesRespectDecodeBudget) {
  const auto& w = world();
  ParamSet p = w.model.init_params(3);
  Rng data(4);
  const TokenBatch xs = sample_batch(w.corpora[0], Lang::src, 64, data);
  const TokenBatch ys = sample_batch(w.corpora[0], Lang::tgt, 64, data);
  const PseudoPairs pp = generate_pseudo_pairs(w.model, p, xs, ys, 2);
  ASSERT_EQ(pp.tgt_from_src.size(), xs.rows);
  ASSERT_EQ(pp.src_from_tgt.size(), ys.rows);
  for (const auto& s : pp.tgt_from_src) EXPECT_LE(s.size(), xs.max_len + 2);
}

TEST(CombinedLoss, TotalIsUnweightedSumAndDeterministic) {
  const auto& w = world();
  UnmtLossConfig cfg;
  cfg.tokens_per_batch = 48;
  auto run = [&](std::uint64_t seed) {
    ParamSet p = w.model.init_params(5);
    Rng rng(seed);
    Tape<float> tape;
    LossBundle b = combined_loss(tape, w.model, p, w.corpora[1], cfg, rng);
    tape.backward(b.total);
    EXPECT_FLOAT_EQ(b.total.item(), b.lm_loss.item() + b.bt_loss.item());
    EXPECT_GT(b.lm_tokens, 0u);
    return std::pair{b.total.item(), grads_of(p)};
  };
  const auto a = run(9), b = run(9), c = run(10);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(a.first, c.first);
}

TEST(CombinedLoss, EmptyBatchIsAnError) {
  const auto& w = world();
  ParamSet p = w.model.init_params(6);
  Rng rng(1);
  Tape<float> tape;
  const TokenBatch empty;
  const TokenBatch ys = sample_batch(w.corpora[0], Lang::tgt, 32, rng);
  EXPECT_THROW(lm_loss(tape, w.model, p, empty, ys, NoiseConfig{}, rng), EmptyBatchError);
  EXPECT_THROW(bt_loss(tape, w.model, p, ys, empty, rng), EmptyBatchError);
}

TEST(UnmtTask, CrossDomainWithZeroMixIsDomainGrad) {
  const auto& w = world();
  UnmtLossConfig cfg;
  cfg.tokens_per_batch = 32;
  UnmtTask task(w.model, w.corpora, cfg);
  ParamSet a = w.model.init_params(8), b = w.model.init_params(8);
  Rng r1(3), r2(3);
  a.zero_grad();
  b.zero_grad();
  const TaskLoss la = task.domain_grad(a, 2, r1);
  const TaskLoss lb = task.cross_domain_grad(b, 2, 0.0, r2);
  EXPECT_EQ(la.total, lb.total);
  EXPECT_EQ(grads_of(a), grads_of(b));
  EXPECT_EQ(r1(), r2());
}
