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

#include "fbunet/errors.hpp"
#include "fbunet/ops.hpp"
#include "fbunet/rng.hpp"

namespace fbunet
{
namespace
{

Tensor<double> random(const Shape & s, Rng & rng)
{
  Vec<double> v(s.numel());
  for (auto & x : v) x = normal(rng);
  return Tensor<double>(s, std::move(v));
}

// Direct 3x3 same-padding convolution, written independently of im2col.
Tensor<double> naive_conv(const Tensor<double> & x, const Tensor<double> & w, const Tensor<double> & b)
{
  Tensor<double> out(Shape{x.n(), w.n(), x.h(), x.w()});
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < w.n(); ++o)
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) {
          double acc = b.values()[o];
          for (int c = 0; c < x.c(); ++c)
            for (int di = -1; di <= 1; ++di)
              for (int dj = -1; dj <= 1; ++dj) {
                const int y = i + di;
                const int z = j + dj;
                if (y < 0 || z < 0 || y >= x.h() || z >= x.w()) continue;
                acc += x(n, c, y, z) * w(o, c, di + 1, dj + 1);
              }
          out(n, o, i, j) = acc;
        }
  return out;
}

TEST(Conv2d, OnesKernelCountsNeighbours)
{
  const Tensor<double> x(Shape{1, 1, 3, 3}, 1.0);
  const Tensor<double> w(Shape{1, 1, 3, 3}, 1.0);
  const Tensor<double> b(Shape{1, 1, 1, 1}, 0.0);
  const Tensor<double> y = conv2d(x, w, b);
  const double expected[9] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
  for (int i = 0; i < 9; ++i) EXPECT_EQ(y.values()[i], expected[i]) << i;
}

TEST(Conv2d, MatchesDirectConvolution)
{
  Rng rng = derive_rng(3, 0);
  const auto x = random({2, 3, 5, 7}, rng);
  const auto w = random({4, 3, 3, 3}, rng);
  const auto b = random({4, 1, 1, 1}, rng);
  const auto y = conv2d(x, w, b);
  const auto ref = naive_conv(x, w, b);
  EXPECT_LT((y.values() - ref.values()).abs().maxCoeff(), 1e-12);
}

TEST(Conv2d, RejectsBadShapes)
{
  const Tensor<float> x(Shape{1, 2, 4, 4});
  EXPECT_THROW(conv2d(x, Tensor<float>(Shape{1, 3, 3, 3}), Tensor<float>(Shape{1, 1, 1, 1})), ShapeError);
  EXPECT_THROW(conv2d(x, Tensor<float>(Shape{1, 2, 2, 2}), Tensor<float>(Shape{1, 1, 1, 1})), ShapeError);
  EXPECT_THROW(conv2d(x, Tensor<float>(Shape{2, 2, 3, 3}), Tensor<float>(Shape{1, 1, 1, 1})), ShapeError);
}

TEST(TransposedConv2d, MatchesScatterOracle)
{
  Rng rng = derive_rng(4, 0);
  const auto x = random({2, 3, 2, 3}, rng);
  const auto w = random({3, 2, 2, 2}, rng);
  const auto b = random({2, 1, 1, 1}, rng);
  const auto y = transposed_conv2d(x, w, b);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 4, 6}));
  Tensor<double> ref(y.shape());
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 2; ++o)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) {
          double acc = b.values()[o];
          for (int c = 0; c < 3; ++c) acc += x(n, c, i / 2, j / 2) * w(c, o, i % 2, j % 2);
          ref(n, o, i, j) = acc;
        }
  EXPECT_LT((y.values() - ref.values()).abs().maxCoeff(), 1e-12);
}

TEST(MaxPool, TakesWindowMaximumAndRoutesGradient)
{
  Tensor<double> x(Shape{1, 1, 2, 4}, {1, 2, 5, 5, 3, 4, 0, 1});
  x.set_requires_grad(true);
  const auto y = maxpool2d(x);
  EXPECT_EQ(y.values()[0], 4.0);
  EXPECT_EQ(y.values()[1], 5.0);
  backward(sum(y));
  const double expected[8] = {0, 0, 1, 0, 0, 1, 0, 0};  // tie goes to the first element
  for (int i = 0; i < 8; ++i) EXPECT_EQ(x.grad()[i], expected[i]) << i;
  EXPECT_THROW(maxpool2d(Tensor<double>(Shape{1, 1, 3, 2})), ShapeError);
}

TEST(Softmax, KnownLogits)
{
  const Tensor<double> x(Shape{1, 4, 1, 1}, {0.0, std::log(2.0), std::log(3.0), std::log(4.0)});
  const auto p = channel_softmax(x);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(p.values()[c], 0.1 * (c + 1), 1e-15);
}

TEST(Softmax, SumsToOneAndIsShiftInvariant)
{
  Rng rng = derive_rng(5, 0);
  auto x = random({2, 3, 4, 4}, rng);
  x.values() *= 40.0;
  const auto p = channel_softmax(x);
  Tensor<double> shifted = x.clone();
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int c = 0; c < 3; ++c) shifted(n, c, i, j) += 100.0 * (i + 1);
  const auto q = channel_softmax(shifted);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double total = 0.0;
        for (int c = 0; c < 3; ++c) {
          EXPECT_GE(p(n, c, i, j), 0.0);
          total += p(n, c, i, j);
          EXPECT_NEAR(p(n, c, i, j), q(n, c, i, j), 1e-12);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
  EXPECT_THROW(channel_softmax(Tensor<double>(Shape{1, 1, 2, 2})), ShapeError);
}

TEST(ChannelOps, ConcatThenSliceRecoversParts)
{
  Rng rng = derive_rng(6, 0);
  const auto a = random({2, 2, 3, 3}, rng);
  const auto b = random({2, 3, 3, 3}, rng);
  const auto ab = channel_concat(a, b);
  ASSERT_EQ(ab.shape(), (Shape{2, 5, 3, 3}));
  EXPECT_EQ(channel_slice(ab, 0, 2).values().matrix(), a.values().matrix());
  EXPECT_EQ(channel_slice(ab, 2, 3).values().matrix(), b.values().matrix());
  EXPECT_EQ(ab(1, 3, 2, 1), b(1, 1, 2, 1));
  EXPECT_THROW(channel_slice(ab, 4, 2), ShapeError);
  EXPECT_THROW(channel_concat(a, random({1, 3, 3, 3}, rng)), ShapeError);
  const auto empty = channel_concat(Tensor<double>(Shape{2, 0, 3, 3}), a);
  EXPECT_EQ(empty.values().matrix(), a.values().matrix());
}

TEST(Elementwise, AddHadamardScaleSum)
{
  const Tensor<double> a(Shape{1, 1, 1, 3}, {1, 2, 3});
  const Tensor<double> b(Shape{1, 1, 1, 3}, {4, 5, 6});
  EXPECT_EQ(add(a, b).values()[2], 9.0);
  EXPECT_EQ(hadamard(a, b).values()[1], 10.0);
  EXPECT_EQ(scale(a, 0.5).values()[2], 1.5);
  EXPECT_EQ(sum(a).values()[0], 6.0);
  EXPECT_EQ(sum(a).shape(), (Shape{1, 1, 1, 1}));
  EXPECT_THROW(add(a, Tensor<double>(Shape{1, 1, 3, 1})), ShapeError);
}

TEST(Activations, KnownValues)
{
  const Tensor<double> x(Shape{1, 1, 1, 3}, {-2.0, 0.0, 3.0});
  EXPECT_EQ(relu(x).values()[0], 0.0);
  EXPECT_EQ(relu(x).values()[2], 3.0);
  EXPECT_DOUBLE_EQ(sigmoid(x).values()[1], 0.5);
  EXPECT_DOUBLE_EQ(fbunet::tanh(x).values()[2], std::tanh(3.0));
  EXPECT_DOUBLE_EQ(stable_sigmoid(-800.0), 0.0);
  EXPECT_DOUBLE_EQ(stable_sigmoid(800.0), 1.0);
}

TEST(BatchNorm, TrainingNormalizesAndUpdatesRunningStats)
{
  Rng rng = derive_rng(7, 0);
  auto x = random({4, 2, 3, 3}, rng);
  x.values() = x.values() * 3.0 + 1.5;
  const Tensor<double> gamma(Shape{2, 1, 1, 1}, 1.0);
  const Tensor<double> beta(Shape{2, 1, 1, 1}, 0.0);
  RunningStats<double> stats(2);
  const auto y = batchnorm(x, gamma, beta, stats, true);
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0;
    double in_mean = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) {
        mean += y(n, c, i / 3, i % 3);
        in_mean += x(n, c, i / 3, i % 3);
      }
    mean /= 36.0;
    in_mean /= 36.0;
    double var = 0.0;
    double in_var = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) {
        var += std::pow(y(n, c, i / 3, i % 3) - mean, 2);
        in_var += std::pow(x(n, c, i / 3, i % 3) - in_mean, 2);
      }
    var /= 36.0;
    in_var /= 36.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, in_var / (in_var + kBatchNormEpsilon), 1e-12);
    EXPECT_NEAR(stats.mean[c], 0.1 * in_mean, 1e-12);
    EXPECT_NEAR(stats.var[c], 0.9 + 0.1 * in_var, 1e-12);
  }
}

TEST(BatchNorm, InferenceUsesRunningStats)
{
  const Tensor<double> x(Shape{1, 1, 1, 2}, {1.0, 3.0});
  const Tensor<double> gamma(Shape{1, 1, 1, 1}, 2.0);
  const Tensor<double> beta(Shape{1, 1, 1, 1}, 0.5);
  RunningStats<double> stats(1);
  stats.mean[0] = 1.0;
  stats.var[0] = 4.0;
  const auto y = batchnorm(x, gamma, beta, stats, false);
  EXPECT_NEAR(y.values()[0], 0.5, 1e-15);
  EXPECT_NEAR(y.values()[1], 2.0 * 2.0 / std::sqrt(4.0 + kBatchNormEpsilon) + 0.5, 1e-15);
  EXPECT_EQ(stats.mean[0], 1.0);
  EXPECT_THROW(batchnorm(Tensor<double>(Shape{1, 1, 1, 1}), gamma, beta, stats, true), ShapeError);
}

}  // namespace
}  // namespace fbunet
