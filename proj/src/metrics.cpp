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

#include "fbunet/metrics.hpp"

#include <string>

namespace fbunet
{

ConfusionMatrix & ConfusionMatrix::merge(const ConfusionMatrix & other)
{
  if (other.classes != classes) {
    throw ShapeError("confusion matrices have different class counts");
  }
  counts += other.counts;
  return *this;
}

template <typename T>
LabelMap argmax_labels(const Tensor<T> & probs)
{
  const Shape s = probs.shape();
  LabelMap out(s.n, s.h, s.w);
  const std::int64_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T * base = probs.data() + std::int64_t{n} * s.c * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      int best = 0;
      T best_v = base[i];
      for (int c = 1; c < s.c; ++c) {
        const T v = base[c * plane + i];
        if (v > best_v) {
          best = c;
          best_v = v;
        }
      }
      out.values[std::int64_t{n} * plane + i] = best;
    }
  }
  return out;
}

void accumulate_confusion(ConfusionMatrix & cm, const LabelMap & predicted, const LabelMap & truth)
{
  if (predicted.n != truth.n || predicted.h != truth.h || predicted.w != truth.w) {
    throw ShapeError("accumulate_confusion: prediction and label shapes differ");
  }
  for (std::int64_t i = 0; i < truth.pixels(); ++i) {
    const std::int32_t g = truth.values[i];
    const std::int32_t p = predicted.values[i];
    if (g < 0 || g >= cm.classes || p < 0 || p >= cm.classes) {
      throw DataError("accumulate_confusion: class index out of range");
    }
    ++cm.counts(g, p);
  }
}

template <typename T>
void accumulate_confusion(ConfusionMatrix & cm, const Tensor<T> & probs, const LabelMap & truth)
{
  if (probs.c() != cm.classes) {
    throw ShapeError("accumulate_confusion: channel count differs from confusion matrix");
  }
  accumulate_confusion(cm, argmax_labels(probs), truth);
}

IouResult iou(const ConfusionMatrix & cm)
{
  IouResult result;
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < cm.classes; ++c) {
    const std::int64_t tp = cm.counts(c, c);
    const std::int64_t fn = cm.counts.row(c).sum() - tp;
    const std::int64_t fp = cm.counts.col(c).sum() - tp;
    const std::int64_t denom = tp + fp + fn;
    if (denom == 0) {
      result.per_class.emplace_back(std::nullopt);
      continue;
    }
    const double value = static_cast<double>(tp) / static_cast<double>(denom);
    result.per_class.emplace_back(value);
    sum += value;
    ++defined;
  }
  result.mean = defined > 0 ? sum / defined : 0.0;
  return result;
}

template LabelMap argmax_labels(const Tensor<float> &);
template LabelMap argmax_labels(const Tensor<double> &);
template void accumulate_confusion(ConfusionMatrix &, const Tensor<float> &, const LabelMap &);
template void accumulate_confusion(ConfusionMatrix &, const Tensor<double> &, const LabelMap &);

}  // namespace fbunet
