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

#ifndef FBUNET_LABELS_HPP_
#define FBUNET_LABELS_HPP_

#include <Eigen/Core>

#include <cstdint>

namespace fbunet
{

/// Per-pixel class indices of one image.
using LabelImage = Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Class indices for a batch, flattened in (n, h, w) order.
struct LabelMap
{
  int n = 0;
  int h = 0;
  int w = 0;
  Eigen::Array<std::int32_t, Eigen::Dynamic, 1> values;

  LabelMap() = default;
  LabelMap(int batch, int height, int width)
  : n(batch), h(height), w(width),
    values(Eigen::Array<std::int32_t, Eigen::Dynamic, 1>::Zero(std::int64_t{batch} * height * width))
  {
  }

  std::int64_t pixels() const { return std::int64_t{n} * h * w; }
  std::int32_t operator()(int in, int ih, int iw) const
  {
    return values[(std::int64_t{in} * h + ih) * w + iw];
  }
  std::int32_t & operator()(int in, int ih, int iw)
  {
    return values[(std::int64_t{in} * h + ih) * w + iw];
  }
};

}  // namespace fbunet

#endif  // FBUNET_LABELS_HPP_
