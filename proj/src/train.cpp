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

#include "fbunet/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "fbunet/errors.hpp"
#include "fbunet/optim.hpp"
#include "fbunet/rng.hpp"

namespace fbunet
{
namespace
{

std::string format_value(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string format_optional(const std::optional<double> & v) { return v ? format_value(*v) : "n/a"; }

std::string percent(const std::optional<double> & v)
{
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * *v);
  return buf;
}

ClassWeights training_weights(const TrainConfig & config, const Dataset & dataset, const SplitIndices & split)
{
  if (!config.class_weighting) return ClassWeights::uniform(dataset.classes);
  std::vector<LabelImage> labels;
  labels.reserve(split.train.size());
  for (std::size_t i : split.train) labels.push_back(dataset.samples.at(i).label);
  return compute_class_weights(labels, dataset.classes);
}

std::string rng_text(const Rng & rng)
{
  std::ostringstream out;
  out << rng;
  return out.str();
}

}  // namespace

void TrainConfig::validate() const
{
  model.validate();
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be > 0");
  if (epochs < 0) throw ConfigError("epochs", "must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every", "must be >= 1");
}

SplitIndices resolve_fold(const Dataset & dataset, const FoldSpec & fold)
{
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) index.emplace(dataset.samples[i].id, i);
  auto lookup = [&](const std::vector<std::string> & ids) {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto & id : ids) {
      const auto it = index.find(id);
      if (it == index.end()) throw DataError("fold references unknown sample '" + id + "'");
      out.push_back(it->second);
    }
    return out;
  };
  return {lookup(fold.train), lookup(fold.val), lookup(fold.test)};
}

std::string EpochLog::format() const
{
  return "epoch\t" + std::to_string(epoch) + "\tL_first\t" + format_optional(loss_first) +
         "\tL_second\t" + format_optional(loss_second) + "\tL\t" + format_value(loss) +
         "\tval_mIoU\t" + format_optional(val_miou);
}

template <typename T>
Tensor<T> batch_loss(
  Model<T> & model, const Tensor<T> & images, const LabelMap & labels,
  const ClassWeights & weights, LossTerms * terms)
{
  model.reset_state();
  const ForwardOutput<T> out = model.forward(images, true);
  Tensor<T> loss;
  LossTerms local;
  if (out.probs_round2) {
    Tensor<T> first = weighted_cross_entropy(out.probs_round1, labels, weights);
    Tensor<T> second = weighted_cross_entropy(*out.probs_round2, labels, weights);
    local.first = static_cast<double>(first.values()[0]);
    local.second = static_cast<double>(second.values()[0]);
    loss = feedback_loss(first, second, model.config().lambda);
  } else {
    loss = weighted_cross_entropy(out.probs_round1, labels, weights);
  }
  local.total = static_cast<double>(loss.values()[0]);
  if (terms) *terms = local;
  return loss;
}

template <typename T>
TrainResult<T> train(
  const TrainConfig & config, const Dataset & dataset, const SplitIndices & split,
  std::ostream * metrics)
{
  config.validate();
  if (config.model.num_classes != dataset.classes) {
    throw ConfigError(
      "classes", "model has " + std::to_string(config.model.num_classes) + " classes, dataset has " +
                   std::to_string(dataset.classes));
  }
  if (config.epochs > 0 && split.train.empty()) {
    throw ConfigError("fold", "training split is empty");
  }
  Model<T> model(config.model, config.seed);
  TrainResult<T> result{model.clone(), model.clone(), std::nullopt, 0, {}};
  if (config.epochs == 0) {
    result.latest = std::move(model);
    return result;
  }

  const ClassWeights weights = training_weights(config, dataset, split);
  const AdamOptions adam{config.lr};
  const std::vector<Parameter<T> *> params = model.parameters();
  Rng rng = derive_rng(config.seed, 0x5EED);
  std::vector<std::size_t> order = split.train;

  std::optional<std::ofstream> metrics_file;
  if (config.checkpoint_dir) {
    std::filesystem::create_directories(*config.checkpoint_dir);
    metrics_file.emplace(*config.checkpoint_dir / "metrics.tsv", std::ios::binary);
  }

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    double sum_first = 0.0;
    double sum_second = 0.0;
    double sum_total = 0.0;
    bool has_terms = false;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> indices(order.data() + start, end - start);
      const Tensor<T> images = batch_images<T>(dataset, indices);
      const LabelMap labels = batch_labels(dataset, indices);
      LossTerms terms;
      Tensor<T> loss = batch_loss(model, images, labels, weights, &terms);
      if (!std::isfinite(terms.total)) {
        throw DivergenceError(
          "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
          ": L_first=" + format_optional(terms.first) + " L_second=" + format_optional(terms.second) +
          " L=" + format_value(terms.total));
      }
      backward(loss);
      adam_step<T>(params, adam);
      zero_grad<T>(params);
      const double n = static_cast<double>(indices.size());
      sum_total += n * terms.total;
      if (terms.first) {
        has_terms = true;
        sum_first += n * *terms.first;
        sum_second += n * *terms.second;
      }
    }
    model.reset_state();

    EpochLog entry;
    entry.epoch = epoch;
    const double count = static_cast<double>(order.size());
    entry.loss = sum_total / count;
    if (has_terms) {
      entry.loss_first = sum_first / count;
      entry.loss_second = sum_second / count;
    }
    const bool eval_now = epoch % config.eval_every == 0 || epoch == config.epochs;
    bool improved = false;
    if (eval_now && !split.val.empty()) {
      entry.val_miou = evaluate(model, dataset, split.val, config.batch_size).final().mean;
      if (!result.best_val_miou || *entry.val_miou > *result.best_val_miou) {
        result.best_val_miou = entry.val_miou;
        result.best_epoch = epoch;
        result.best = model.clone();
        improved = true;
      }
    }
    const std::string line = entry.format();
    if (metrics) *metrics << line << '\n' << std::flush;
    if (metrics_file) *metrics_file << line << '\n' << std::flush;
    result.log.push_back(std::move(entry));

    if (config.checkpoint_dir && (eval_now || epoch == config.epochs)) {
      const std::string state = rng_text(rng);
      save_checkpoint(capture(model, state, epoch), *config.checkpoint_dir / "latest.ckpt");
      if (improved) {
        save_checkpoint(capture(result.best, state, epoch), *config.checkpoint_dir / "best.ckpt");
      }
    }
  }
  if (split.val.empty()) {
    result.best = model.clone();
    result.best_epoch = config.epochs;
    if (config.checkpoint_dir) {
      save_checkpoint(capture(result.best, rng_text(rng), config.epochs), *config.checkpoint_dir / "best.ckpt");
    }
  }
  result.latest = std::move(model);
  return result;
}

template <typename T>
EvalReport evaluate(
  Model<T> & model, const Dataset & dataset, std::span<const std::size_t> indices, int batch_size)
{
  if (model.config().num_classes != dataset.classes) {
    throw ConfigError(
      "classes", "model has " + std::to_string(model.config().num_classes) + " classes, dataset has " +
                   std::to_string(dataset.classes));
  }
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  NoGradGuard no_grad;
  EvalReport report;
  report.class_names = dataset.class_names;
  report.samples = indices.size();
  report.confusion_round1 = ConfusionMatrix(dataset.classes);
  if (model.config().is_feedback()) report.confusion_round2 = ConfusionMatrix(dataset.classes);
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
    const auto chunk = indices.subspan(start, end - start);
    const Tensor<T> images = batch_images<T>(dataset, chunk);
    const LabelMap labels = batch_labels(dataset, chunk);
    model.reset_state();
    const ForwardOutput<T> out = model.forward(images, false);
    accumulate_confusion(report.confusion_round1, out.probs_round1, labels);
    if (out.probs_round2) accumulate_confusion(*report.confusion_round2, *out.probs_round2, labels);
  }
  model.reset_state();
  report.round1 = iou(report.confusion_round1);
  if (report.confusion_round2) report.round2 = iou(*report.confusion_round2);
  return report;
}

std::string format_iou_table(const std::vector<std::string> & class_names, const std::vector<TableRow> & rows)
{
  std::vector<std::string> header{""};
  header.insert(header.end(), class_names.begin(), class_names.end());
  header.emplace_back("meanIoU");
  std::vector<std::vector<std::string>> cells{header};
  for (const auto & row : rows) {
    std::vector<std::string> line{row.label};
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      line.push_back(c < row.result.per_class.size() ? percent(row.result.per_class[c]) : "n/a");
    }
    line.push_back(percent(row.result.mean));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto & line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (const auto & line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) out += "  ";
      const std::string pad(width[i] - line[i].size(), ' ');
      out += i == 0 ? line[i] + pad : pad + line[i];
    }
    out += '\n';
  }
  return out;
}

std::string format_iou_rows(const std::vector<std::string> & class_names, const std::vector<TableRow> & rows)
{
  std::string out;
  for (const auto & row : rows) {
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      const auto v = c < row.result.per_class.size() ? row.result.per_class[c] : std::nullopt;
      out += "iou\t" + row.label + "\t" + class_names[c] + "\t" + format_optional(v) + "\n";
    }
    out += "miou\t" + row.label + "\t" + format_value(row.result.mean) + "\n";
  }
  return out;
}

std::vector<AblationArm> default_ablation_arms()
{
  using L = Location;
  return {
    {"a", {L::a}},
    {"b", {L::b}},
    {"c", {L::c}},
    {"d", {L::d}},
    {"e", {L::e}},
    {"a, b, d, e", {L::a, L::b, L::d, L::e}},
    {"ours", kAllLocations},
  };
}

template <typename T>
std::vector<AblationRow> ablate(
  const TrainConfig & base, const std::vector<AblationArm> & arms, const Dataset & dataset,
  const SplitIndices & split, int jobs)
{
  if (base.model.variant != Variant::feedback_convlstm) {
    throw ConfigError("variant", "ablation sweeps feedback-convlstm locations");
  }
  for (const auto & arm : arms) {
    if (arm.locations.empty()) throw ConfigError("lstm_locations", "arm '" + arm.label + "' is empty");
  }
  std::vector<AblationRow> rows(arms.size());
  std::vector<std::exception_ptr> errors(arms.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < arms.size(); i = next++) {
      try {
        TrainConfig config = base;
        config.model.lstm_locations = arms[i].locations;
        if (base.checkpoint_dir) {
          config.checkpoint_dir = *base.checkpoint_dir / ("arm_" + std::to_string(i));
        }
        TrainResult<T> result = train<T>(config, dataset, split);
        AblationRow & row = rows[i];
        row.label = arms[i].label;
        row.locations = arms[i].locations;
        row.parameters = result.best.parameter_count();
        row.best_val_miou = result.best_val_miou;
        row.test = evaluate(result.best, dataset, split.test, config.batch_size);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(arms.size(), 1)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto & th : pool) th.join();
  }
  for (const auto & e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

std::string format_ablation_table(
  const std::vector<std::string> & class_names, const std::vector<AblationRow> & rows)
{
  std::vector<TableRow> table;
  for (const auto & row : rows) table.push_back({row.label, row.test.final()});
  return format_iou_table(class_names, table);
}

#define FBUNET_INSTANTIATE_TRAIN(T)                                                              \
  template Tensor<T> batch_loss(                                                                 \
    Model<T> &, const Tensor<T> &, const LabelMap &, const ClassWeights &, LossTerms *);         \
  template TrainResult<T> train(const TrainConfig &, const Dataset &, const SplitIndices &,       \
                                std::ostream *);                                                 \
  template EvalReport evaluate(Model<T> &, const Dataset &, std::span<const std::size_t>, int);  \
  template std::vector<AblationRow> ablate<T>(                                                   \
    const TrainConfig &, const std::vector<AblationArm> &, const Dataset &, const SplitIndices &, \
    int);

FBUNET_INSTANTIATE_TRAIN(float)
FBUNET_INSTANTIATE_TRAIN(double)

}  // namespace fbunet
