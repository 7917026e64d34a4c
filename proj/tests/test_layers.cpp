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
#include "fbunet/layers.hpp"
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

TEST(Init, HeUniformBoundAndZeroBias)
{
  EXPECT_DOUBLE_EQ(he_uniform_bound(54), std::sqrt(6.0 / 54.0));
  Rng rng = derive_rng(1, 0);
  const auto conv = make_conv3x3<float>(6, 4, rng);
  const double bound = he_uniform_bound(6 * 9);
  EXPECT_LE(conv.weight.values().abs().maxCoeff(), bound);
  EXPECT_GT(conv.weight.values().abs().maxCoeff(), 0.5 * bound);
  EXPECT_EQ(conv.bias.values().abs().maxCoeff(), 0.0F);
  const auto up = make_upconv<float>(8, 4, rng);
  EXPECT_EQ(up.weight.shape(), (Shape{8, 4, 2, 2}));
  EXPECT_LE(up.weight.values().abs().maxCoeff(), he_uniform_bound(8));
}

TEST(ConvBNBlock, SharesOneConvAcrossRoundsWithSeparateNorms)
{
  Rng rng = derive_rng(2, 0);
  auto block = make_conv_bn_block<double>(2, 3, 2, rng);
  ASSERT_EQ(block.bn.size(), 2U);
  block.bn[1].gamma.values().setConstant(3.0);
  const auto x = random({2, 2, 4, 4}, rng);
  const auto y1 = convbn_apply(block, x, Round::first, false);
  const auto y2 = convbn_apply(block, x, Round::second, false);
  const auto expected = relu(scale(conv2d(x, block.conv.weight.tensor, block.conv.bias.tensor), 3.0 / std::sqrt(1.0 + kBatchNormEpsilon)));
  EXPECT_LT((y2.values() - expected.values()).abs().maxCoeff(), 1e-12);
  EXPECT_GT((y1.values() - y2.values()).abs().maxCoeff(), 0.0);

  auto single = make_conv_bn_block<double>(2, 3, 1, rng);
  EXPECT_THROW(convbn_apply(single, x, Round::second, false), ContractError);
}

ConvLSTMCell<double> zero_cell(int cin, int hidden)
{
  Rng rng = derive_rng(3, 0);
  auto cell = make_convlstm_cell<double>(cin, hidden, 2, rng);
  cell.gates.weight.values().setZero();
  cell.gates.bias.values().setZero();
  return cell;
}

TEST(ConvLSTM, ZeroWeightsGiveZeroHiddenState)
{
  auto cell = zero_cell(2, 3);
  Rng rng = derive_rng(4, 0);
  const auto x = random({2, 2, 4, 4}, rng);
  convlstm_step(cell, x, Round::first, true);
  ASSERT_TRUE(cell.state);
  EXPECT_EQ(cell.state->hidden.values().abs().maxCoeff(), 0.0);
  EXPECT_EQ(cell.state->cell.values().abs().maxCoeff(), 0.0);
}

TEST(ConvLSTM, SaturatedForgetGatePreservesCellState)
{
  const int hidden = 3;
  auto cell = zero_cell(2, hidden);
  cell.gates.bias.values().segment(0, hidden).setConstant(-30.0);      // input gate
  cell.gates.bias.values().segment(hidden, hidden).setConstant(30.0);  // forget gate
  Rng rng = derive_rng(5, 0);
  const auto x = random({2, 2, 4, 4}, rng);
  const auto c0 = random({2, hidden, 4, 4}, rng);
  cell.state = LstmState<double>{c0, random({2, hidden, 4, 4}, rng)};
  convlstm_step(cell, x, Round::second, true);
  EXPECT_LE((cell.state->cell.values() - c0.values()).abs().maxCoeff(), 1e-9);
}

TEST(ConvLSTM, GateLayoutAndForgetBias)
{
  Rng rng = derive_rng(6, 0);
  auto cell = make_convlstm_cell<double>(2, 3, 2, rng);
  EXPECT_EQ(cell.gates.weight.shape(), (Shape{12, 5, 3, 3}));
  EXPECT_EQ(cell.hidden_channels(), 3);
  EXPECT_EQ(cell.input_channels(), 2);
  const auto & b = cell.gates.bias.values();
  for (int i = 0; i < 12; ++i) EXPECT_EQ(b[i], (i >= 3 && i < 6) ? 1.0 : 0.0) << i;
}

TEST(ConvLSTM, GatesMatchHandComputation)
{
  Rng rng = derive_rng(7, 0);
  auto cell = make_convlstm_cell<double>(2, 2, 2, rng);
  const auto x = random({1, 2, 3, 3}, rng);
  const auto h = random({1, 2, 3, 3}, rng);
  const auto g = convlstm_gates(cell, x, h);
  const auto pre = conv2d(channel_concat(x, h), cell.gates.weight.tensor, cell.gates.bias.tensor);
  const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int k = 0; k < 9; ++k) {
    const int i = k / 3;
    const int j = k % 3;
    EXPECT_NEAR(g.input(0, 1, i, j), sig(pre(0, 1, i, j)), 1e-14);
    EXPECT_NEAR(g.forget(0, 0, i, j), sig(pre(0, 2, i, j)), 1e-14);
    EXPECT_NEAR(g.candidate(0, 1, i, j), std::tanh(pre(0, 5, i, j)), 1e-14);
    EXPECT_NEAR(g.output(0, 0, i, j), sig(pre(0, 6, i, j)), 1e-14);
  }
}

TEST(ConvLSTM, StateContract)
{
  Rng rng = derive_rng(8, 0);
  auto cell = make_convlstm_cell<double>(2, 3, 2, rng);
  const auto x = random({2, 2, 4, 4}, rng);
  EXPECT_THROW(convlstm_step(cell, x, Round::second, true), ContractError);
  convlstm_step(cell, x, Round::first, true);
  EXPECT_THROW(convlstm_step(cell, x, Round::first, true), ContractError);
  EXPECT_THROW(convlstm_step(cell, random({1, 2, 4, 4}, rng), Round::second, true), ShapeError);
  EXPECT_THROW(convlstm_step(cell, random({2, 3, 4, 4}, rng), Round::second, true), ShapeError);
  const auto out = convlstm_step(cell, x, Round::second, true);
  EXPECT_EQ(out.shape(), (Shape{2, 3, 4, 4}));
  reset_state(cell);
  EXPECT_FALSE(cell.state);
}

TEST(ConvLSTM, SecondRoundDependsOnFirstRoundState)
{
  Rng rng = derive_rng(9, 0);
  auto cell = make_convlstm_cell<double>(2, 3, 2, rng);
  const auto x1 = random({2, 2, 4, 4}, rng);
  const auto x2 = random({2, 2, 4, 4}, rng);
  convlstm_step(cell, x1, Round::first, false);
  const auto a = convlstm_step(cell, x2, Round::second, false);
  reset_state(cell);
  convlstm_step(cell, x2, Round::first, false);
  const auto b = convlstm_step(cell, x2, Round::second, false);
  EXPECT_GT((a.values() - b.values()).abs().maxCoeff(), 1e-6);
}

TEST(RecurrentConvLayer, UnrollsRecurrence)
{
  Rng rng = derive_rng(10, 0);
  auto layer = make_recurrent_conv_layer<double>(2, 3, 1, 3, rng);
  const auto x = random({1, 2, 4, 4}, rng);
  const auto y = rcl_apply(layer, x, false);
  const auto ff = layer.feedforward(x);
  auto s = ff;
  for (int t = 1; t < 3; ++t) s = add(ff, layer.recurrent(relu(s)));
  const auto expected = relu(scale(s, 1.0 / std::sqrt(1.0 + kBatchNormEpsilon)));
  EXPECT_LT((y.values() - expected.values()).abs().maxCoeff(), 1e-12);

  auto one_step = make_recurrent_conv_layer<double>(2, 3, 1, 1, rng);
  const auto z = rcl_apply(one_step, x, false);
  const auto direct = relu(scale(one_step.feedforward(x), 1.0 / std::sqrt(1.0 + kBatchNormEpsilon)));
  EXPECT_LT((z.values() - direct.values()).abs().maxCoeff(), 1e-12);
  EXPECT_THROW(make_recurrent_conv_layer<double>(2, 3, 1, 0, rng), ConfigError);
}

TEST(Blocks, CloneIsDeep)
{
  Rng rng = derive_rng(11, 0);
  Block<double> block = make_conv_bn_block<double>(1, 2, 2, rng);
  Block<double> copy = clone_block(block);
  std::get<ConvBNBlock<double>>(copy).conv.weight.values().setZero();
  EXPECT_GT(std::get<ConvBNBlock<double>>(block).conv.weight.values().abs().maxCoeff(), 0.0);
}

}  // namespace
}  // namespace fbunet
