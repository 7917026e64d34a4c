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

#ifndef FBUNET_LAYERS_HPP_
#define FBUNET_LAYERS_HPP_

#include <optional>
#include <variant>
#include <vector>

#include "fbunet/ops.hpp"
#include "fbunet/optim.hpp"
#include "fbunet/rng.hpp"

namespace fbunet
{

/// Feedback pass index. Only two rounds exist.
enum class Round : int { first = 0, second = 1 };

inline std::size_t round_index(Round r) { return static_cast<std::size_t>(r); }

/// He-uniform bound sqrt(6 / fan_in).
double he_uniform_bound(std::int64_t fan_in);

template <typename T>
void fill_he_uniform(Parameter<T> & p, std::int64_t fan_in, Rng & rng);

template <typename T>
struct Conv3x3
{
  Parameter<T> weight;  // (cout, cin, 3, 3)
  Parameter<T> bias;    // (cout, 1, 1, 1)

  int in_channels() const { return weight.shape().c; }
  int out_channels() const { return weight.shape().n; }
  Tensor<T> operator()(const Tensor<T> & x) const { return conv2d(x, weight.tensor, bias.tensor); }
  Conv3x3 clone() const { return {weight.clone(), bias.clone()}; }
};

template <typename T>
Conv3x3<T> make_conv3x3(int cin, int cout, Rng & rng);

/// 2x2 stride-2 upsampling convolution.
template <typename T>
struct UpConv
{
  Parameter<T> weight;  // (cin, cout, 2, 2)
  Parameter<T> bias;    // (cout, 1, 1, 1)

  Tensor<T> operator()(const Tensor<T> & x) const
  {
    return transposed_conv2d(x, weight.tensor, bias.tensor);
  }
  UpConv clone() const { return {weight.clone(), bias.clone()}; }
};

template <typename T>
UpConv<T> make_upconv(int cin, int cout, Rng & rng);

template <typename T>
struct BatchNorm
{
  Parameter<T> gamma;
  Parameter<T> beta;
  RunningStats<T> stats;

  Tensor<T> operator()(const Tensor<T> & x, bool training)
  {
    return batchnorm(x, gamma.tensor, beta.tensor, stats, training);
  }
  BatchNorm clone() const { return {gamma.clone(), beta.clone(), stats}; }
};

template <typename T>
BatchNorm<T> make_batchnorm(int channels);

/// Shared 3x3 convolution followed by a per-round batch norm and ReLU.
template <typename T>
struct ConvBNBlock
{
  Conv3x3<T> conv;
  std::vector<BatchNorm<T>> bn;  // one set per round

  ConvBNBlock clone() const;
};

template <typename T>
ConvBNBlock<T> make_conv_bn_block(int cin, int cout, int rounds, Rng & rng);

/// conv -> bn[round] -> ReLU.
template <typename T>
Tensor<T> convbn_apply(ConvBNBlock<T> & block, const Tensor<T> & x, Round round, bool training);

template <typename T>
struct LstmState
{
  Tensor<T> cell;
  Tensor<T> hidden;
};

template <typename T>
struct GateActivations
{
  Tensor<T> input;
  Tensor<T> forget;
  Tensor<T> candidate;
  Tensor<T> output;
};

/// Convolutional LSTM without peepholes. The gate convolution stacks its
/// output channels as [input, forget, candidate, output], each `hidden` wide.
/// State carries across the two feedback rounds and is cleared per batch.
template <typename T>
struct ConvLSTMCell
{
  Conv3x3<T> gates;  // (4*hidden, cin + hidden, 3, 3)
  std::vector<BatchNorm<T>> bn;
  std::optional<LstmState<T>> state;

  int hidden_channels() const { return gates.out_channels() / 4; }
  int input_channels() const { return gates.in_channels() - hidden_channels(); }
  ConvLSTMCell clone() const;
};

inline constexpr double kDefaultForgetBias = 1.0;

template <typename T>
ConvLSTMCell<T> make_convlstm_cell(
  int cin, int hidden, int rounds, Rng & rng, double forget_bias = kDefaultForgetBias);

/// Gate activations for input `x` and previous hidden state `h_prev`.
template <typename T>
GateActivations<T> convlstm_gates(
  const ConvLSTMCell<T> & cell, const Tensor<T> & x, const Tensor<T> & h_prev);

/// One recurrence step. Round::first requires no stored state (zeros are
/// used); Round::second requires the state left by the first round.
template <typename T>
Tensor<T> convlstm_step(ConvLSTMCell<T> & cell, const Tensor<T> & x, Round round, bool training);

template <typename T>
void reset_state(ConvLSTMCell<T> & cell)
{
  cell.state.reset();
}

/// Recurrent convolutional layer:
///   s_0 = ff(x);  s_t = ff(x) + rec(ReLU(s_{t-1}));  out = ReLU(bn(s_{T-1})).
template <typename T>
struct RecurrentConvLayer
{
  Conv3x3<T> feedforward;
  Conv3x3<T> recurrent;
  std::vector<BatchNorm<T>> bn;
  int time_steps = 2;

  RecurrentConvLayer clone() const;
};

template <typename T>
RecurrentConvLayer<T> make_recurrent_conv_layer(
  int cin, int cout, int rounds, int time_steps, Rng & rng);

template <typename T>
Tensor<T> rcl_apply(
  RecurrentConvLayer<T> & layer, const Tensor<T> & x, bool training, Round round = Round::first);

template <typename T>
using Block = std::variant<ConvBNBlock<T>, ConvLSTMCell<T>, RecurrentConvLayer<T>>;

template <typename T>
Tensor<T> apply_block(Block<T> & block, const Tensor<T> & x, Round round, bool training);

template <typename T>
Block<T> clone_block(const Block<T> & block);

}  // namespace fbunet

#endif  // FBUNET_LAYERS_HPP_
