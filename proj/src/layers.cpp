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

#include "fbunet/layers.hpp"

#include <cmath>
#include <string>

namespace fbunet
{
namespace
{

template <typename T>
BatchNorm<T> & bn_for(std::vector<BatchNorm<T>> & sets, Round round)
{
  const std::size_t r = round_index(round);
  if (r >= sets.size()) {
    throw ContractError(
      "round " + std::to_string(r) + " requested but layer has " + std::to_string(sets.size()) +
      " batch-norm set(s)");
  }
  return sets[r];
}

template <typename T>
std::vector<BatchNorm<T>> make_bn_sets(int channels, int rounds)
{
  if (rounds < 1 || rounds > 2) {
    throw ConfigError("rounds", "must be 1 or 2");
  }
  std::vector<BatchNorm<T>> sets;
  for (int r = 0; r < rounds; ++r) {
    sets.push_back(make_batchnorm<T>(channels));
  }
  return sets;
}

template <typename T>
std::vector<BatchNorm<T>> clone_bn_sets(const std::vector<BatchNorm<T>> & sets)
{
  std::vector<BatchNorm<T>> out;
  out.reserve(sets.size());
  for (const auto & s : sets) out.push_back(s.clone());
  return out;
}

}  // namespace

double he_uniform_bound(std::int64_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

template <typename T>
void fill_he_uniform(Parameter<T> & p, std::int64_t fan_in, Rng & rng)
{
  const double bound = he_uniform_bound(fan_in);
  for (Eigen::Index i = 0; i < p.values().size(); ++i) {
    p.values()[i] = static_cast<T>(uniform(rng, -bound, bound));
  }
}

template <typename T>
Conv3x3<T> make_conv3x3(int cin, int cout, Rng & rng)
{
  if (cin < 1 || cout < 1) {
    throw ShapeError("conv3x3: channel counts must be positive");
  }
  Conv3x3<T> conv{Parameter<T>(Shape{cout, cin, 3, 3}), Parameter<T>(Shape{cout, 1, 1, 1})};
  fill_he_uniform(conv.weight, std::int64_t{cin} * 9, rng);
  return conv;
}

template <typename T>
UpConv<T> make_upconv(int cin, int cout, Rng & rng)
{
  if (cin < 1 || cout < 1) {
    throw ShapeError("upconv: channel counts must be positive");
  }
  UpConv<T> up{Parameter<T>(Shape{cin, cout, 2, 2}), Parameter<T>(Shape{cout, 1, 1, 1})};
  // Each output pixel sees exactly one tap per input channel.
  fill_he_uniform(up.weight, cin, rng);
  return up;
}

template <typename T>
BatchNorm<T> make_batchnorm(int channels)
{
  return {
    Parameter<T>(Shape{channels, 1, 1, 1}, T(1)), Parameter<T>(Shape{channels, 1, 1, 1}, T(0)),
    RunningStats<T>(channels)};
}

template <typename T>
ConvBNBlock<T> ConvBNBlock<T>::clone() const
{
  return {conv.clone(), clone_bn_sets(bn)};
}

template <typename T>
ConvBNBlock<T> make_conv_bn_block(int cin, int cout, int rounds, Rng & rng)
{
  auto conv = make_conv3x3<T>(cin, cout, rng);
  return {std::move(conv), make_bn_sets<T>(cout, rounds)};
}

template <typename T>
Tensor<T> convbn_apply(ConvBNBlock<T> & block, const Tensor<T> & x, Round round, bool training)
{
  return relu(bn_for(block.bn, round)(block.conv(x), training));
}

template <typename T>
ConvLSTMCell<T> ConvLSTMCell<T>::clone() const
{
  // Recurrent state is per-batch and never cloned.
  return {gates.clone(), clone_bn_sets(bn), std::nullopt};
}

template <typename T>
ConvLSTMCell<T> make_convlstm_cell(int cin, int hidden, int rounds, Rng & rng, double forget_bias)
{
  auto gates = make_conv3x3<T>(cin + hidden, 4 * hidden, rng);
  gates.bias.values().segment(hidden, hidden).setConstant(static_cast<T>(forget_bias));
  return {std::move(gates), make_bn_sets<T>(hidden, rounds), std::nullopt};
}

template <typename T>
GateActivations<T> convlstm_gates(
  const ConvLSTMCell<T> & cell, const Tensor<T> & x, const Tensor<T> & h_prev)
{
  const int hidden = cell.hidden_channels();
  const Tensor<T> z = cell.gates(channel_concat(x, h_prev));
  return {
    sigmoid(channel_slice(z, 0, hidden)), sigmoid(channel_slice(z, hidden, hidden)),
    tanh(channel_slice(z, 2 * hidden, hidden)), sigmoid(channel_slice(z, 3 * hidden, hidden))};
}

template <typename T>
Tensor<T> convlstm_step(ConvLSTMCell<T> & cell, const Tensor<T> & x, Round round, bool training)
{
  const int hidden = cell.hidden_channels();
  if (x.c() != cell.input_channels()) {
    throw ShapeError(
      "convlstm_step: expected " + std::to_string(cell.input_channels()) +
      " input channels, got " + std::to_string(x.c()));
  }
  const Shape state_shape{x.n(), hidden, x.h(), x.w()};
  Tensor<T> c_prev;
  Tensor<T> h_prev;
  if (round == Round::first) {
    if (cell.state) {
      throw ContractError("convlstm_step: first round called with stale state; call reset_state");
    }
    c_prev = Tensor<T>(state_shape);
    h_prev = Tensor<T>(state_shape);
  } else {
    if (!cell.state) {
      throw ContractError("convlstm_step: second round requires state from the first round");
    }
    if (cell.state->cell.shape() != state_shape) {
      throw ShapeError(
        "convlstm_step: stored state " + cell.state->cell.shape().str() +
        " does not match input " + x.shape().str());
    }
    c_prev = cell.state->cell;
    h_prev = cell.state->hidden;
  }

  const auto g = convlstm_gates(cell, x, h_prev);
  Tensor<T> c = add(hadamard(g.forget, c_prev), hadamard(g.input, g.candidate));
  Tensor<T> h = hadamard(g.output, tanh(c));
  cell.state = LstmState<T>{c, h};
  return relu(bn_for(cell.bn, round)(h, training));
}

template <typename T>
RecurrentConvLayer<T> RecurrentConvLayer<T>::clone() const
{
  return {feedforward.clone(), recurrent.clone(), clone_bn_sets(bn), time_steps};
}

template <typename T>
RecurrentConvLayer<T> make_recurrent_conv_layer(
  int cin, int cout, int rounds, int time_steps, Rng & rng)
{
  if (time_steps < 1) {
    throw ConfigError("rcl_time_steps", "must be >= 1");
  }
  auto ff = make_conv3x3<T>(cin, cout, rng);
  auto rec = make_conv3x3<T>(cout, cout, rng);
  return {std::move(ff), std::move(rec), make_bn_sets<T>(cout, rounds), time_steps};
}

template <typename T>
Tensor<T> rcl_apply(RecurrentConvLayer<T> & layer, const Tensor<T> & x, bool training, Round round)
{
  if (layer.time_steps < 1) {
    throw ConfigError("rcl_time_steps", "must be >= 1");
  }
  const Tensor<T> drive = layer.feedforward(x);
  Tensor<T> s = drive;
  for (int t = 1; t < layer.time_steps; ++t) {
    s = add(drive, layer.recurrent(relu(s)));
  }
  return relu(bn_for(layer.bn, round)(s, training));
}

template <typename T>
Tensor<T> apply_block(Block<T> & block, const Tensor<T> & x, Round round, bool training)
{
  return std::visit(
    [&](auto & b) -> Tensor<T> {
      using B = std::decay_t<decltype(b)>;
      if constexpr (std::is_same_v<B, ConvBNBlock<T>>) {
        return convbn_apply(b, x, round, training);
      } else if constexpr (std::is_same_v<B, ConvLSTMCell<T>>) {
        return convlstm_step(b, x, round, training);
      } else {
        return rcl_apply(b, x, training, round);
      }
    },
    block);
}

template <typename T>
Block<T> clone_block(const Block<T> & block)
{
  return std::visit([](const auto & b) -> Block<T> { return b.clone(); }, block);
}

#define FBUNET_INSTANTIATE_LAYERS(T)                                                          \
  template void fill_he_uniform(Parameter<T> &, std::int64_t, Rng &);                         \
  template Conv3x3<T> make_conv3x3(int, int, Rng &);                                          \
  template UpConv<T> make_upconv(int, int, Rng &);                                            \
  template BatchNorm<T> make_batchnorm(int);                                                  \
  template struct ConvBNBlock<T>;                                                             \
  template ConvBNBlock<T> make_conv_bn_block(int, int, int, Rng &);                           \
  template Tensor<T> convbn_apply(ConvBNBlock<T> &, const Tensor<T> &, Round, bool);          \
  template struct ConvLSTMCell<T>;                                                            \
  template ConvLSTMCell<T> make_convlstm_cell(int, int, int, Rng &, double);                  \
  template GateActivations<T> convlstm_gates(                                                 \
    const ConvLSTMCell<T> &, const Tensor<T> &, const Tensor<T> &);                           \
  template Tensor<T> convlstm_step(ConvLSTMCell<T> &, const Tensor<T> &, Round, bool);        \
  template struct RecurrentConvLayer<T>;                                                      \
  template RecurrentConvLayer<T> make_recurrent_conv_layer(int, int, int, int, Rng &);        \
  template Tensor<T> rcl_apply(RecurrentConvLayer<T> &, const Tensor<T> &, bool, Round);      \
  template Tensor<T> apply_block(Block<T> &, const Tensor<T> &, Round, bool);                 \
  template Block<T> clone_block(const Block<T> &);

FBUNET_INSTANTIATE_LAYERS(float)
FBUNET_INSTANTIATE_LAYERS(double)

#undef FBUNET_INSTANTIATE_LAYERS

}  // namespace fbunet
