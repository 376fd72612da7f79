#include <gtest/gtest.h>

#include <cmath>

#include "metaumt/optim.hpp"

using namespace metaumt;

namespace {

ParamSet single(float v) {
  ParamSet p;
  p.add("w", Tensor({1}, std::vector<float>{v}));
  return p;
}

}  // namespace

TEST(Sgd, StepIsMinusLrTimesGrad) {
  ParamSet p = single(1.0f);
  p.at("w").grad() = {0.5f};
  SgdState sgd{0.1, 0};
  optimizer_step(p, sgd);
  EXPECT_FLOAT_EQ(p.at("w")[0], 0.95f);
  EXPECT_EQ(p.at("w").grad(), std::vector<float>{0.0f});
  EXPECT_EQ(sgd.step_count, 1u);
}

TEST(Optimizer, MissingGradientIsAnError) {
  ParamSet p = single(1.0f);
  p.add("v", Tensor({2}));
  p.at("w").grad() = {1.0f};
  SgdState sgd;
  AdamState adam;
  EXPECT_THROW(optimizer_step(p, sgd), MissingGradError);
  EXPECT_THROW(optimizer_step(p, adam), MissingGradError);
  EXPECT_EQ(p.at("w")[0], 1.0f);
}

// Bias-corrected Adam written out by hand in double.
TEST(Adam, MatchesHandComputation) {
  ParamSet p = single(1.0f);
  AdamState adam;
  adam.lr = 0.1;
  double w = 1.0, m = 0.0, v = 0.0;
  const double grads[] = {0.5, -1.0, 0.25, 2.0};
  for (int t = 1; t <= 4; ++t) {
    const double g = grads[t - 1];
    p.at("w").grad() = {static_cast<float>(g)};
    optimizer_step(p, adam);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.at("w")[0], w, 1e-6) << "step " << t;
  }
  EXPECT_NEAR(p.at("w")[0], 0.9 + 0.0366, 0.1);
}

TEST(Adam, FirstStepMovesByLrTimesSignOfGradient) {
  ParamSet p = single(0.0f);
  AdamState adam;
  adam.lr = 1e-3;
  p.at("w").grad() = {-123.0f};
  optimizer_step(p, adam);
  EXPECT_NEAR(p.at("w")[0], 1e-3, 1e-7);  // moments are stored in float
}

TEST(Warmup, LinearThenConstant) {
  LinearWarmup w{1e-3, 4};
  EXPECT_DOUBLE_EQ(w.at(1), 2.5e-4);
  EXPECT_DOUBLE_EQ(w.at(4), 1e-3);
  EXPECT_DOUBLE_EQ(w.at(40), 1e-3);
  EXPECT_DOUBLE_EQ((LinearWarmup{5e-4, 0}.at(1)), 5e-4);
}
