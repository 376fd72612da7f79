#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "metaumt/checkpoint.hpp"
#include "metaumt/ops.hpp"
#include "metaumt/param_set.hpp"
#include "support/finite_diff.hpp"

using namespace metaumt;
using metaumt::testing::check_graph;

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  Tensor t({2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_THROW(t.item(), ShapeError);
}

TEST(Tensor, CopiesAliasAndCloneDoesNot) {
  Tensor a({3}, std::vector<float>{1, 2, 3});
  Tensor b = a;
  b.data()[0] = 9;
  EXPECT_EQ(a[0], 9.0f);
  Tensor c = a.clone();
  c.data()[0] = 4;
  EXPECT_EQ(a[0], 9.0f);
  EXPECT_FALSE(c.same_storage(a));
}

TEST(Ops, MatmulInnerDimMismatchNamesShapes) {
  Tape<float> tape;
  Tensor a({2, 3}), b({4, 2});
  try {
    ops::matmul(tape, a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,2]"), std::string::npos);
  }
}

TEST(Ops, MatmulValues) {
  Tape<float> tape;
  Tensor a({2, 2}, std::vector<float>{1, 2, 3, 4});
  Tensor b({2, 2}, std::vector<float>{5, 6, 7, 8});
  Tensor c = ops::matmul(tape, a, b);
  EXPECT_EQ(c.data(), (std::vector<float>{19, 22, 43, 50}));
  Tensor ct = ops::matmul(tape, a, b, true);
  EXPECT_EQ(ct.data(), (std::vector<float>{17, 23, 39, 53}));
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Tape<float> tape;
  Tensor x({2, 3}, std::vector<float>{1, 2, 3, -1000, 0, 1000});
  Tensor y = ops::softmax(tape, x);
  EXPECT_NEAR(y[0] + y[1] + y[2], 1.0f, 1e-6);
  EXPECT_NEAR(y[5], 1.0f, 1e-6);
  EXPECT_FALSE(std::isnan(y[3]));
}

TEST(Ops, CrossEntropyUniformLogitsIsLogV) {
  Tape<float> tape;
  Tensor logits({3, 64}, 0.25f);
  const std::vector<std::int32_t> t{1, -1, 63};
  EXPECT_NEAR(ops::cross_entropy(tape, logits, std::span<const std::int32_t>(t)).item(), std::log(64.0f), 1e-5);
}

TEST(Tape, BackwardNeedsScalarOnSameTape) {
  Tape<float> t1, t2;
  Tensor w = Tensor::parameter({2}, {1, 2});
  Tensor y = ops::scale(t1, w, 2.0f);
  EXPECT_THROW(t1.backward(y), ShapeError);
  Tensor s = ops::sum(t1, y);
  EXPECT_THROW(t2.backward(s), TapeError);
  EXPECT_THROW(ops::add(t2, y, y), TapeError);
}

TEST(Tape, LeafGradientsAccumulateAcrossBackward) {
  Tensor w = Tensor::parameter({2}, {1, 2});
  for (int i = 0; i < 2; ++i) {
    Tape<float> tape;
    tape.backward(ops::sum(tape, ops::mul(tape, w, w)));
  }
  EXPECT_EQ(w.grad(), (std::vector<float>{4, 8}));
}

TEST(Tape, NoGradTapeRecordsNothing) {
  NoGradTape<float> tape;
  Tensor w = Tensor::parameter({2}, {1, 2});
  Tensor y = ops::sum(tape, ops::mul(tape, w, w));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_EQ(y.item(), 5.0f);
}

TEST(Tape, DetachedValueCarriesNoGradient) {
  Tensor w = Tensor::parameter({2}, {1, 2});
  Tape<float> tape;
  Tensor y = ops::scale(tape, w, 3.0f);
  Tensor loss = ops::sum(tape, ops::mul(tape, y.detach(), w));
  tape.backward(loss);
  EXPECT_EQ(w.grad(), (std::vector<float>{3, 6}));
}

TEST(GradCheck, RandomGraphsMatchFiniteDifferences) {
  std::map<std::string, int> coverage;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 150; ++seed) {
    metaumt::testing::RandomGraph<double> g{seed, 64, {}};
    metaumt::testing::LeafList<double> leaves;
    Tape<double> tape;
    g.build(tape, leaves, true);
    for (const auto& op : g.ops_used) ++coverage[op];
    const auto r = check_graph(seed);
    EXPECT_LT(r.max_rel_error, 1e-3) << "graph seed " << seed;
    worst = std::max(worst, r.max_rel_error);
  }
  for (const char* op : {"matmul", "add_bcast", "mul", "gelu", "softmax", "layer_norm", "scale", "sub", "transpose", "permute",
                         "concat", "masked_fill", "dropout", "embedding", "batched_matmul_t", "cross_entropy", "mean", "sum"}) {
    EXPECT_GT(coverage[op], 0) << op << " never exercised";
  }
  RecordProperty("worst_rel_error", std::to_string(worst));
}

// Two-layer MLP in float against double-precision central differences.
TEST(GradCheck, TwoLayerMlpFloat) {
  Rng rng(3);
  auto rand_vec = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(rng, -1.0, 1.0);
    return v;
  };
  const std::vector<double> x = rand_vec(4 * 3), w1 = rand_vec(3 * 5), b1 = rand_vec(5), w2 = rand_vec(5 * 2);
  const std::vector<std::int32_t> y{0, 1, 1, 0};
  auto loss = [&](auto tag, const std::vector<double>& w1v, Tape<decltype(tag)>& tape, BasicTensor<decltype(tag)>* leaf_out) {
    using T = decltype(tag);
    auto cast = [](const std::vector<double>& v) { return std::vector<T>(v.begin(), v.end()); };
    auto W1 = BasicTensor<T>::parameter({3, 5}, cast(w1v));
    if (leaf_out) *leaf_out = W1;
    auto X = ops::constant<T>({4, 3}, cast(x));
    auto h = ops::gelu(tape, ops::add(tape, ops::matmul(tape, X, W1), ops::constant<T>({5}, cast(b1))));
    auto logits = ops::matmul(tape, h, ops::constant<T>({5, 2}, cast(w2)));
    return ops::cross_entropy(tape, logits, std::span<const std::int32_t>(y));
  };
  Tape<float> tape;
  Tensor W1;
  tape.backward(loss(float{}, w1, tape, &W1));
  const double h = 1e-6;
  for (std::size_t i = 0; i < w1.size(); ++i) {
    auto p = w1, m = w1;
    p[i] += h;
    m[i] -= h;
    NoGradTape<double> t1, t2;
    const double num = (loss(double{}, p, t1, nullptr).item() - loss(double{}, m, t2, nullptr).item()) / (2 * h);
    EXPECT_LT(metaumt::testing::relative_error(W1.grad()[i], num, 1e-6), 1e-3) << "element " << i;
  }
}

TEST(ParamSet, DeepCloneIsIndependentAndGradFree) {
  ParamSet p;
  p.add("w", Tensor({2}, std::vector<float>{1, 2}));
  p.zero_grad();
  p.at("w").grad()[0] = 5;
  ParamSet c = p.deep_clone();
  EXPECT_TRUE(c.values_equal(p));
  EXPECT_FALSE(c.at("w").has_grad());
  c.at("w").data()[0] = 7;
  EXPECT_EQ(p.at("w")[0], 1.0f);
  EXPECT_THROW(p.add("w", Tensor({1})), std::invalid_argument);
}

TEST(ParamSet, ClipScalesToMaxNorm) {
  ParamSet p;
  p.add("w", Tensor({2}));
  p.at("w").grad() = {3, 4};
  EXPECT_DOUBLE_EQ(clip_grad_norm(p, 1.0), 5.0);
  EXPECT_NEAR(p.at("w").grad()[0], 0.6f, 1e-7);
  EXPECT_NEAR(grad_norm(p), 1.0, 1e-6);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ParamSet p;
  p.add("a", Tensor({2, 3}, std::vector<float>{1.5f, -0.0f, 3e-38f, 7, 8, 9}));
  p.add("b.c", Tensor({4}, std::vector<float>{std::nanf(""), 1, 2, 3}));
  std::stringstream ss;
  write_checkpoint(ss, p);
  ParamSet q = read_checkpoint(ss);
  ASSERT_EQ(q.names(), p.names());
  for (std::size_t i = 0; i < p.size(); ++i) {
    ASSERT_EQ(q[i].shape(), p[i].shape());
    EXPECT_EQ(std::memcmp(q[i].data().data(), p[i].data().data(), p[i].numel() * sizeof(float)), 0);
  }
}

TEST(Checkpoint, TruncatedOrForeignFilesAreRejected) {
  ParamSet p;
  p.add("a", Tensor({3}, 1.0f));
  std::stringstream ss;
  write_checkpoint(ss, p);
  const std::string bytes = ss.str();
  for (std::size_t cut : {std::size_t{2}, std::size_t{6}, bytes.size() - 1, bytes.size() - 5}) {
    std::stringstream t(bytes.substr(0, cut));
    EXPECT_THROW(read_checkpoint(t), CheckpointError) << "cut at " << cut;
  }
  std::stringstream bad("XXXX0000");
  EXPECT_THROW(read_checkpoint(bad), CheckpointError);
}
