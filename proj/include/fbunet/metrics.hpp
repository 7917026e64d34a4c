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

#ifndef FBUNET_METRICS_HPP_
#define FBUNET_METRICS_HPP_

#include <optional>
#include <vector>

#include "fbunet/labels.hpp"
#include "fbunet/tensor.hpp"

namespace fbunet
{

/// counts(g, p) = number of pixels with ground truth g predicted as p.
struct ConfusionMatrix
{
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

  int classes = 0;
  Counts counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes)
  : classes(num_classes), counts(Counts::Zero(num_classes, num_classes))
  {
  }

  std::int64_t total() const { return counts.sum(); }
  /// Entrywise sum; lets evaluation shard across workers.
  ConfusionMatrix & merge(const ConfusionMatrix & other);
};

/// Per-pixel channel argmax; the lowest class index wins ties.
template <typename T>
LabelMap argmax_labels(const Tensor<T> & probs);

template <typename T>
void accumulate_confusion(ConfusionMatrix & cm, const Tensor<T> & probs, const LabelMap & truth);

void accumulate_confusion(ConfusionMatrix & cm, const LabelMap & predicted, const LabelMap & truth);

struct IouResult
{
  /// TP / (TP + FP + FN); empty when the denominator is zero.
  std::vector<std::optional<double>> per_class;
  /// Unweighted mean over defined classes (0 if none are defined).
  double mean = 0.0;
};

IouResult iou(const ConfusionMatrix & cm);

extern template LabelMap argmax_labels(const Tensor<float> &);
extern template LabelMap argmax_labels(const Tensor<double> &);

}  // namespace fbunet

#endif  // FBUNET_METRICS_HPP_
