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

#ifndef FBUNET_TRAIN_HPP_
#define FBUNET_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fbunet/checkpoint.hpp"
#include "fbunet/dataset.hpp"
#include "fbunet/loss.hpp"
#include "fbunet/metrics.hpp"
#include "fbunet/model.hpp"

namespace fbunet
{

struct TrainConfig
{
  ModelConfig model;
  double lr = 1e-4;
  int epochs = 1500;
  int batch_size = 16;
  std::uint64_t seed = 0;
  /// Validation every `eval_every` epochs and after the last one.
  int eval_every = 1;
  bool class_weighting = true;
  /// When set, `latest.ckpt`, `best.ckpt` and `metrics.tsv` are written here.
  std::optional<std::filesystem::path> checkpoint_dir;

  /// Throws ConfigError. `epochs == 0` is accepted and trains nothing.
  void validate() const;
};

/// Sample indices of a fold's three splits within a dataset.
struct SplitIndices
{
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

SplitIndices resolve_fold(const Dataset & dataset, const FoldSpec & fold);

struct EpochLog
{
  int epoch = 0;
  std::optional<double> loss_first;
  std::optional<double> loss_second;
  double loss = 0.0;
  std::optional<double> val_miou;

  /// `epoch<TAB>N<TAB>L_first<TAB>x<TAB>L_second<TAB>x<TAB>L<TAB>x<TAB>val_mIoU<TAB>x`,
  /// with `n/a` for absent values.
  std::string format() const;
};

template <typename T>
struct TrainResult
{
  Model<T> latest;
  /// Best validation mean IoU snapshot (equal to `latest` without validation data).
  Model<T> best;
  std::optional<double> best_val_miou;
  int best_epoch = 0;
  std::vector<EpochLog> log;
};

/// Mean per-pixel loss terms of one batch.
struct LossTerms
{
  std::optional<double> first;
  std::optional<double> second;
  double total = 0.0;
};

/// Forward pass and loss for one batch in training mode. Resets the model's
/// recurrent state first. The returned tensor is the scalar objective.
template <typename T>
Tensor<T> batch_loss(
  Model<T> & model, const Tensor<T> & images, const LabelMap & labels,
  const ClassWeights & weights, LossTerms * terms = nullptr);

/// Runs `config.epochs` epochs on `split.train`. Throws DivergenceError on a
/// non-finite loss. `metrics` receives one EpochLog::format line per epoch.
template <typename T>
TrainResult<T> train(
  const TrainConfig & config, const Dataset & dataset, const SplitIndices & split,
  std::ostream * metrics = nullptr);

struct EvalReport
{
  std::vector<std::string> class_names;
  ConfusionMatrix confusion_round1;
  std::optional<ConfusionMatrix> confusion_round2;
  IouResult round1;
  std::optional<IouResult> round2;
  std::size_t samples = 0;

  /// The model's segmentation output: round 2 when present.
  const IouResult & final() const { return round2 ? *round2 : round1; }
};

/// Inference-mode evaluation with a global confusion matrix per round.
template <typename T>
EvalReport evaluate(
  Model<T> & model, const Dataset & dataset, std::span<const std::size_t> indices, int batch_size = 8);

/// Plain-text table: one row per entry, class columns in manifest order, then
/// meanIoU, values in percent.
struct TableRow
{
  std::string label;
  IouResult result;
};
std::string format_iou_table(const std::vector<std::string> & class_names, const std::vector<TableRow> & rows);

/// `iou<TAB>row<TAB>class<TAB>value` lines followed by `miou<TAB>row<TAB>value`.
std::string format_iou_rows(const std::vector<std::string> & class_names, const std::vector<TableRow> & rows);

struct AblationArm
{
  std::string label;
  LocationSet locations;
};

/// a, b, c, d, e, "a, b, d, e", ours.
std::vector<AblationArm> default_ablation_arms();

struct AblationRow
{
  std::string label;
  LocationSet locations;
  std::int64_t parameters = 0;
  std::optional<double> best_val_miou;
  EvalReport test;
};

/// Trains and evaluates one feedback-convlstm model per arm with identical
/// seed and schedule. Arms run on up to `jobs` threads.
template <typename T>
std::vector<AblationRow> ablate(
  const TrainConfig & base, const std::vector<AblationArm> & arms, const Dataset & dataset,
  const SplitIndices & split, int jobs = 1);

std::string format_ablation_table(
  const std::vector<std::string> & class_names, const std::vector<AblationRow> & rows);

}  // namespace fbunet

#endif  // FBUNET_TRAIN_HPP_
