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

#ifndef FBUNET_OPS_HPP_
#define FBUNET_OPS_HPP_

#include <cmath>

#include "fbunet/tensor.hpp"

namespace fbunet
{

enum class Activation { relu, sigmoid, tanh };
enum class Elementwise { add, hadamard };

/// Per-channel batch statistics carried between batches.
template <typename T>
struct RunningStats
{
  Vec<T> mean;
  Vec<T> var;

  explicit RunningStats(int channels = 0)
  : mean(Vec<T>::Zero(channels)), var(Vec<T>::Ones(channels))
  {
  }
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// 3x3 cross-correlation, stride 1, zero padding 1.
/// weight: (cout, cin, 3, 3), bias: (cout, 1, 1, 1).
template <typename T>
Tensor<T> conv2d(const Tensor<T> & x, const Tensor<T> & weight, const Tensor<T> & bias);

/// 2x2 stride-2 transposed convolution; doubles h and w.
/// weight: (cin, cout, 2, 2), bias: (cout, 1, 1, 1).
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T> & x, const Tensor<T> & weight, const Tensor<T> & bias);

/// 2x2 stride-2 max pooling. Ties go to the first element in row-major order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T> & x);

template <typename T>
Tensor<T> pointwise(const Tensor<T> & x, Activation kind);

template <typename T>
Tensor<T> relu(const Tensor<T> & x)
{
  return pointwise(x, Activation::relu);
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T> & x)
{
  return pointwise(x, Activation::sigmoid);
}
template <typename T>
Tensor<T> tanh(const Tensor<T> & x)
{
  return pointwise(x, Activation::tanh);
}

/// Softmax across the channel axis at every pixel (max-subtracted).
template <typename T>
Tensor<T> channel_softmax(const Tensor<T> & x);

/// `a` fills channels [0, ca), `b` fills [ca, ca + cb).
template <typename T>
Tensor<T> channel_concat(const Tensor<T> & a, const Tensor<T> & b);

/// Channels [begin, begin + count).
template <typename T>
Tensor<T> channel_slice(const Tensor<T> & x, int begin, int count);

template <typename T>
Tensor<T> elementwise(const Tensor<T> & a, const Tensor<T> & b, Elementwise kind);

template <typename T>
Tensor<T> add(const Tensor<T> & a, const Tensor<T> & b)
{
  return elementwise(a, b, Elementwise::add);
}
template <typename T>
Tensor<T> hadamard(const Tensor<T> & a, const Tensor<T> & b)
{
  return elementwise(a, b, Elementwise::hadamard);
}

template <typename T>
Tensor<T> scale(const Tensor<T> & x, T factor);

/// Sum of all entries as a (1,1,1,1) tensor.
template <typename T>
Tensor<T> sum(const Tensor<T> & x);

/// Per-channel batch normalization. gamma, beta: (c, 1, 1, 1).
/// Training mode normalizes with batch statistics over (n, h, w) and folds
/// them into `stats`; inference mode uses `stats`.
template <typename T>
Tensor<T> batchnorm(
  const Tensor<T> & x, const Tensor<T> & gamma, const Tensor<T> & beta, RunningStats<T> & stats,
  bool training);

/// Numerically stable logistic function.
template <typename T>
inline T stable_sigmoid(T v)
{
  if (v >= T(0)) {
    return T(1) / (T(1) + std::exp(-v));
  }
  const T e = std::exp(v);
  return e / (T(1) + e);
}

}  // namespace fbunet

#endif  // FBUNET_OPS_HPP_
