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

#ifndef FBUNET_OPTIM_HPP_
#define FBUNET_OPTIM_HPP_

#include <cstdint>
#include <span>

#include "fbunet/tensor.hpp"

namespace fbunet
{

/// Trainable leaf tensor plus its Adam moments. Move-only: copying would
/// alias the underlying graph node, so use `clone()` for an independent copy.
template <typename T>
struct Parameter
{
  Tensor<T> tensor;
  Vec<T> m;
  Vec<T> v;
  std::int64_t step = 0;

  Parameter() = default;
  explicit Parameter(const Shape & shape, T fill = T(0))
  : tensor(shape, fill), m(Vec<T>::Zero(shape.numel())), v(Vec<T>::Zero(shape.numel()))
  {
    tensor.set_requires_grad(true);
  }

  Parameter(Parameter &&) noexcept = default;
  Parameter & operator=(Parameter &&) noexcept = default;
  Parameter(const Parameter &) = delete;
  Parameter & operator=(const Parameter &) = delete;

  Parameter clone() const
  {
    Parameter copy(tensor.shape());
    copy.tensor.values() = tensor.values();
    copy.m = m;
    copy.v = v;
    copy.step = step;
    return copy;
  }

  const Shape & shape() const { return tensor.shape(); }
  std::int64_t numel() const { return tensor.numel(); }
  Vec<T> & values() { return tensor.values(); }
  const Vec<T> & values() const { return tensor.values(); }
  Vec<T> & grad() { return tensor.grad(); }
};

struct AdamOptions
{
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update, in place. Gradients are left untouched.
template <typename T>
void adam_step(std::span<Parameter<T> * const> params, const AdamOptions & options = {});

template <typename T>
void zero_grad(std::span<Parameter<T> * const> params)
{
  for (Parameter<T> * p : params) {
    p->tensor.zero_grad();
  }
}

extern template void adam_step(std::span<Parameter<float> * const>, const AdamOptions &);
extern template void adam_step(std::span<Parameter<double> * const>, const AdamOptions &);

}  // namespace fbunet

#endif  // FBUNET_OPTIM_HPP_
