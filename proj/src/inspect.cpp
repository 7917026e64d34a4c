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

#include "fbunet/inspect.hpp"

#include <cmath>

#include "fbunet/errors.hpp"
#include "fbunet/metrics.hpp"

namespace fbunet
{

GrayImage label_to_gray(const LabelImage & label, int classes)
{
  if (classes < 2) throw ConfigError("classes", "must be >= 2");
  const double step = 255.0 / (classes - 1);
  return label.unaryExpr([step](std::int32_t c) { return static_cast<std::uint8_t>(std::lround(c * step)); });
}

GrayImage min_max_gray(const Image & values)
{
  const float lo = values.minCoeff();
  const float hi = values.maxCoeff();
  if (!(hi > lo)) return GrayImage::Zero(values.rows(), values.cols());
  return ((values - lo) / (hi - lo) * 255.0F).round().max(0.0F).min(255.0F).cast<std::uint8_t>();
}

template <typename T>
InspectPanels inspect(
  Model<T> & model, const Image & image, const std::optional<LabelImage> & label,
  const std::filesystem::path & dir)
{
  const int h = static_cast<int>(image.rows());
  const int w = static_cast<int>(image.cols());
  const int classes = model.config().num_classes;
  if (label && (label->rows() != h || label->cols() != w)) {
    throw ShapeError("inspect: image and label sizes differ");
  }
  std::filesystem::create_directories(dir);
  const Tensor<T> input(
    Shape{1, 1, h, w}, Eigen::Map<const Eigen::ArrayXf>(image.data(), image.size()).cast<T>());

  ForwardOutput<T> out = [&] {
    NoGradGuard no_grad;
    model.reset_state();
    auto result = model.forward(input, false);
    model.reset_state();
    return result;
  }();

  InspectPanels panels;
  panels.input = dir / "input.pgm";
  save_pgm(to_gray(image), panels.input);
  if (label) {
    panels.ground_truth = dir / "ground_truth.pgm";
    save_pgm(label_to_gray(*label, classes), *panels.ground_truth);
  }

  const Tensor<T> & probs = out.final_probs();
  const LabelMap predicted = argmax_labels(probs);
  const LabelImage predicted_image =
    Eigen::Map<const LabelImage>(predicted.values.data(), h, w);
  panels.prediction = dir / "prediction.pgm";
  save_pgm(label_to_gray(predicted_image, classes), panels.prediction);

  using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::int64_t plane = std::int64_t{h} * w;
  for (int c = 0; c < classes; ++c) {
    const Image p = Eigen::Map<const Plane>(probs.data() + c * plane, h, w).template cast<float>();
    panels.probabilities.push_back(dir / ("prob_" + std::to_string(c) + ".pgm"));
    save_pgm(to_gray(p), panels.probabilities.back());
  }

  if (model.config().is_feedback()) {
    const Tensor<T> act = first_layer_activation_sum(model, input);
    const Image a = Eigen::Map<const Plane>(act.data(), h, w).template cast<float>();
    panels.activation_sum = dir / "activation_sum.pgm";
    save_pgm(min_max_gray(a), *panels.activation_sum);
  }
  return panels;
}

template InspectPanels inspect(
  Model<float> &, const Image &, const std::optional<LabelImage> &, const std::filesystem::path &);
template InspectPanels inspect(
  Model<double> &, const Image &, const std::optional<LabelImage> &, const std::filesystem::path &);

}  // namespace fbunet
