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

#include "fbunet/loss.hpp"

#include <cmath>
#include <string>

#include "fbunet/ops.hpp"

namespace fbunet
{

ClassWeights::ClassWeights(std::vector<double> weights) : weights_(std::move(weights))
{
  if (weights_.empty()) {
    throw ConfigError("class_weights", "empty weight vector");
  }
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    if (!std::isfinite(weights_[c]) || weights_[c] <= 0.0) {
      throw ConfigError("class_weights", "weight of class " + std::to_string(c) + " must be > 0");
    }
  }
}

template <typename T>
Tensor<T> weighted_cross_entropy(
  const Tensor<T> & probs, const LabelMap & labels, const ClassWeights & weights)
{
  const Shape ps = probs.shape();
  if (ps.n != labels.n || ps.h != labels.h || ps.w != labels.w) {
    throw ShapeError("weighted_cross_entropy: labels do not match probabilities " + ps.str());
  }
  if (weights.classes() != ps.c) {
    throw ShapeError("weighted_cross_entropy: weight count does not match channels");
  }
  const std::int64_t plane = ps.plane();
  const std::int64_t count = labels.pixels();
  std::vector<std::int64_t> picked(static_cast<std::size_t>(count));
  double total = 0.0;
  for (int n = 0; n < ps.n; ++n) {
    for (std::int64_t i = 0; i < plane; ++i) {
      const std::int64_t px = std::int64_t{n} * plane + i;
      const std::int32_t label = labels.values[px];
      if (label < 0 || label >= ps.c) {
        throw DataError(
          "label " + std::to_string(label) + " out of range for " + std::to_string(ps.c) +
          " classes");
      }
      const std::int64_t idx = (std::int64_t{n} * ps.c + label) * plane + i;
      picked[static_cast<std::size_t>(px)] = idx;
      total += weights[label] * std::log(static_cast<double>(probs.values()[idx]) + kLogEpsilon);
    }
  }
  Vec<T> out(1);
  out[0] = static_cast<T>(-total / static_cast<double>(count));

  std::vector<T> coef(static_cast<std::size_t>(count));
  for (std::int64_t px = 0; px < count; ++px) {
    coef[static_cast<std::size_t>(px)] =
      static_cast<T>(-weights[labels.values[px]] / static_cast<double>(count));
  }
  return Tensor<T>::make_result(
    Shape{1, 1, 1, 1}, std::move(out), {probs},
    [picked = std::move(picked), coef = std::move(coef)](detail::Node<T> & self) {
      detail::Node<T> & parent = *self.parents[0];
      if (!parent.requires_grad) return;
      Vec<T> & g = parent.grad_buffer();
      const T upstream = self.grad[0];
      for (std::size_t px = 0; px < picked.size(); ++px) {
        const std::int64_t idx = picked[px];
        g[idx] += upstream * coef[px] / (parent.values[idx] + static_cast<T>(kLogEpsilon));
      }
    });
}

template <typename T>
Tensor<T> feedback_loss(const Tensor<T> & first, const Tensor<T> & second, double lambda)
{
  return add(scale(first, static_cast<T>(lambda)), second);
}

ClassWeights compute_class_weights(std::span<const LabelImage> labels, int classes)
{
  if (classes < 1) {
    throw ConfigError("num_classes", "must be >= 1");
  }
  std::vector<std::int64_t> counts(static_cast<std::size_t>(classes), 0);
  std::int64_t total = 0;
  for (const LabelImage & img : labels) {
    for (Eigen::Index i = 0; i < img.size(); ++i) {
      const std::int32_t v = img.data()[i];
      if (v < 0 || v >= classes) {
        throw DataError("label " + std::to_string(v) + " out of range");
      }
      ++counts[static_cast<std::size_t>(v)];
    }
    total += img.size();
  }
  std::vector<double> weights(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    const auto n = counts[static_cast<std::size_t>(c)];
    if (n == 0) {
      throw DataError("class " + std::to_string(c) + " never occurs in the training labels");
    }
    weights[static_cast<std::size_t>(c)] =
      static_cast<double>(total) / (static_cast<double>(classes) * static_cast<double>(n));
  }
  return ClassWeights(std::move(weights));
}

template Tensor<float> weighted_cross_entropy(
  const Tensor<float> &, const LabelMap &, const ClassWeights &);
template Tensor<double> weighted_cross_entropy(
  const Tensor<double> &, const LabelMap &, const ClassWeights &);
template Tensor<float> feedback_loss(const Tensor<float> &, const Tensor<float> &, double);
template Tensor<double> feedback_loss(const Tensor<double> &, const Tensor<double> &, double);

}  // namespace fbunet
