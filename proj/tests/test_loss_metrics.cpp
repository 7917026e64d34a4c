// Copyright 2026 The fbunet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fbunet/errors.hpp"
#include "fbunet/loss.hpp"
#include "fbunet/metrics.hpp"
#include "fbunet/ops.hpp"

namespace fbunet
{
namespace
{

LabelMap labels_of(std::initializer_list<std::int32_t> v, int n, int h, int w)
{
  LabelMap m(n, h, w);
  std::int64_t i = 0;
  for (auto x : v) m.values[i++] = x;
  return m;
}

TEST(CrossEntropy, UniformPredictionGivesLogC)
{
  const Tensor<double> probs(Shape{2, 4, 3, 3}, 0.25);
  LabelMap labels(2, 3, 3);
  for (std::int64_t i = 0; i < labels.pixels(); ++i) labels.values[i] = static_cast<std::int32_t>(i % 4);
  const auto loss = weighted_cross_entropy(probs, labels, ClassWeights::uniform(4));
  EXPECT_NEAR(loss.values()[0], std::log(4.0), 1e-6);
}

TEST(CrossEntropy, WeightedHandValue)
{
  // Two pixels: p(label)=0.8 with weight 1 and p(label)=0.25 with weight 3.
  const Tensor<double> probs(Shape{1, 2, 1, 2}, {0.8, 0.75, 0.2, 0.25});
  const auto labels = labels_of({0, 1}, 1, 1, 2);
  const auto loss = weighted_cross_entropy(probs, labels, ClassWeights({1.0, 3.0}));
  const double expected = -(std::log(0.8 + kLogEpsilon) + 3.0 * std::log(0.25 + kLogEpsilon)) / 2.0;
  EXPECT_NEAR(loss.values()[0], expected, 1e-12);
}

TEST(CrossEntropy, ZeroProbabilityStaysFinite)
{
  const Tensor<double> probs(Shape{1, 2, 1, 1}, {1.0, 0.0});
  const auto loss = weighted_cross_entropy(probs, labels_of({1}, 1, 1, 1), ClassWeights::uniform(2));
  EXPECT_NEAR(loss.values()[0], -std::log(kLogEpsilon), 1e-9);
}

TEST(CrossEntropy, Contracts)
{
  const Tensor<double> probs(Shape{1, 2, 2, 2}, 0.5);
  EXPECT_THROW(weighted_cross_entropy(probs, LabelMap(1, 2, 3), ClassWeights::uniform(2)), ShapeError);
  EXPECT_THROW(weighted_cross_entropy(probs, LabelMap(1, 2, 2), ClassWeights::uniform(3)), ShapeError);
  LabelMap bad(1, 2, 2);
  bad.values[3] = 2;
  EXPECT_THROW(weighted_cross_entropy(probs, bad, ClassWeights::uniform(2)), DataError);
  EXPECT_THROW(ClassWeights({1.0, 0.0}), ConfigError);
  EXPECT_THROW(ClassWeights(std::vector<double>{}), ConfigError);
}

TEST(CrossEntropy, GradientMatchesClosedForm)
{
  Tensor<double> probs(Shape{1, 3, 1, 2}, {0.2, 0.5, 0.3, 0.1, 0.5, 0.4});
  probs.set_requires_grad(true);
  const auto labels = labels_of({2, 0}, 1, 1, 2);
  backward(weighted_cross_entropy(probs, labels, ClassWeights({2.0, 1.0, 1.0})));
  const auto & g = probs.grad();
  EXPECT_NEAR(g[4], -1.0 / (2.0 * (0.5 + kLogEpsilon)), 1e-12);
  EXPECT_NEAR(g[1], -2.0 / (2.0 * (0.5 + kLogEpsilon)), 1e-12);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[2], 0.0);
}

TEST(FeedbackLoss, Combination)
{
  const Tensor<double> a(Shape{1, 1, 1, 1}, {2.0});
  const Tensor<double> b(Shape{1, 1, 1, 1}, {1.0});
  EXPECT_DOUBLE_EQ(feedback_loss(a, b, 0.5).values()[0], 2.0);
  EXPECT_DOUBLE_EQ(feedback_loss(a, b, 0.0).values()[0], 1.0);
}

TEST(ClassWeighting, InverseFrequency)
{
  LabelImage img(1, 5);
  img << 0, 0, 0, 0, 1;
  const std::vector<LabelImage> labels{img};
  const auto w = compute_class_weights(labels, 2);
  EXPECT_DOUBLE_EQ(w[0], 0.625);
  EXPECT_DOUBLE_EQ(w[1], 2.5);
  LabelImage balanced(2, 2);
  balanced << 0, 1, 2, 3;
  const auto u = compute_class_weights(std::vector<LabelImage>{balanced}, 4);
  for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(u[c], 1.0);
}

TEST(ClassWeighting, MissingClassIsDataError)
{
  LabelImage img(1, 3);
  img << 0, 0, 2;
  EXPECT_THROW(compute_class_weights(std::vector<LabelImage>{img}, 3), DataError);
  img << 0, 0, 3;
  EXPECT_THROW(compute_class_weights(std::vector<LabelImage>{img}, 3), DataError);
}

TEST(Iou, HandExample)
{
  ConfusionMatrix cm(2);
  accumulate_confusion(cm, labels_of({0, 1, 1, 1}, 1, 1, 4), labels_of({0, 0, 1, 1}, 1, 1, 4));
  const auto r = iou(cm);
  ASSERT_TRUE(r.per_class[0] && r.per_class[1]);
  EXPECT_DOUBLE_EQ(*r.per_class[0], 0.5);
  EXPECT_DOUBLE_EQ(*r.per_class[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.mean, 7.0 / 12.0);
}

TEST(Iou, AbsentClassIsExcludedFromMean)
{
  ConfusionMatrix cm(3);
  accumulate_confusion(cm, labels_of({0, 1}, 1, 1, 2), labels_of({0, 1}, 1, 1, 2));
  const auto r = iou(cm);
  EXPECT_FALSE(r.per_class[2].has_value());
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
  EXPECT_DOUBLE_EQ(iou(ConfusionMatrix(2)).mean, 0.0);
}

TEST(Iou, MatchesSetOracle)
{
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    LabelMap truth(2, 5, 7);
    LabelMap pred(2, 5, 7);
    for (std::int64_t i = 0; i < truth.pixels(); ++i) {
      truth.values[i] = pick(rng);
      pred.values[i] = pick(rng);
    }
    ConfusionMatrix cm(4);
    accumulate_confusion(cm, pred, truth);
    const auto r = iou(cm);
    for (int c = 0; c < 4; ++c) {
      int inter = 0;
      int uni = 0;
      for (std::int64_t i = 0; i < truth.pixels(); ++i) {
        const bool t = truth.values[i] == c;
        const bool p = pred.values[i] == c;
        inter += t && p;
        uni += t || p;
      }
      ASSERT_EQ(r.per_class[c].has_value(), uni > 0);
      if (uni > 0) {
        EXPECT_DOUBLE_EQ(*r.per_class[c], static_cast<double>(inter) / uni);
      }
    }
  }
}

TEST(Confusion, ArgmaxAndMerge)
{
  const Tensor<double> probs(Shape{1, 3, 1, 3}, {0.5, 0.2, 0.4, 0.5, 0.7, 0.2, 0.0, 0.1, 0.4});
  const auto pred = argmax_labels(probs);
  EXPECT_EQ(pred.values[0], 0);
  EXPECT_EQ(pred.values[1], 1);
  EXPECT_EQ(pred.values[2], 0);
  ConfusionMatrix a(3);
  accumulate_confusion(a, probs, labels_of({0, 1, 2}, 1, 1, 3));
  ConfusionMatrix b = a;
  b.merge(a);
  EXPECT_EQ(b.total(), 6);
  EXPECT_EQ(b.counts(2, 0), 2);
  EXPECT_THROW(a.merge(ConfusionMatrix(2)), ShapeError);
  EXPECT_THROW(accumulate_confusion(a, pred, labels_of({0, 1, 5}, 1, 1, 3)), DataError);
  EXPECT_THROW(accumulate_confusion(a, pred, LabelMap(1, 1, 2)), ShapeError);
}

}  // namespace
}  // namespace fbunet
