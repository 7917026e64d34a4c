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

#ifndef FBUNET_LOSS_HPP_
#define FBUNET_LOSS_HPP_

#include <span>
#include <vector>

#include "fbunet/labels.hpp"
#include "fbunet/tensor.hpp"

namespace fbunet
{

inline constexpr double kLogEpsilon = 1e-8;

/// Positive, finite per-class loss multipliers.
class ClassWeights
{
public:
  explicit ClassWeights(std::vector<double> weights);
  static ClassWeights uniform(int classes) { return ClassWeights(std::vector<double>(classes, 1.0)); }

  int classes() const { return static_cast<int>(weights_.size()); }
  double operator[](int c) const { return weights_[static_cast<std::size_t>(c)]; }
  const std::vector<double> & values() const { return weights_; }

private:
  std::vector<double> weights_;
};

/// -(1/N) * sum_pixels w[label] * ln(probs[label] + eps), N = n*h*w.
/// Consumes probabilities (softmax is part of the model).
template <typename T>
Tensor<T> weighted_cross_entropy(
  const Tensor<T> & probs, const LabelMap & labels, const ClassWeights & weights);

/// lambda * first + second.
template <typename T>
Tensor<T> feedback_loss(const Tensor<T> & first, const Tensor<T> & second, double lambda);

/// Inverse-frequency weights normalized so a balanced set gives all ones:
/// w[c] = total / (C * count[c]). Every class must occur.
ClassWeights compute_class_weights(std::span<const LabelImage> labels, int classes);

}  // namespace fbunet

#endif  // FBUNET_LOSS_HPP_
