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

#ifndef FBUNET_INSPECT_HPP_
#define FBUNET_INSPECT_HPP_

#include <filesystem>
#include <optional>
#include <vector>

#include "fbunet/dataset.hpp"
#include "fbunet/model.hpp"

namespace fbunet
{

/// Class index c drawn as gray level round(c * 255 / (C - 1)).
GrayImage label_to_gray(const LabelImage & label, int classes);

/// Linear map of [min, max] onto [0, 255]; a constant map becomes all zeros.
GrayImage min_max_gray(const Image & values);

struct InspectPanels
{
  std::filesystem::path input;
  std::optional<std::filesystem::path> ground_truth;
  std::filesystem::path prediction;
  std::vector<std::filesystem::path> probabilities;  // prob_{c}.pgm, class order
  std::optional<std::filesystem::path> activation_sum;
};

/// Runs the model on one image in inference mode and writes the panel PGMs
/// into `dir`. The activation-sum panel is produced for feedback variants only.
template <typename T>
InspectPanels inspect(
  Model<T> & model, const Image & image, const std::optional<LabelImage> & label,
  const std::filesystem::path & dir);

}  // namespace fbunet

#endif  // FBUNET_INSPECT_HPP_
