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

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fbunet/checkpoint.hpp"
#include "fbunet/dataset.hpp"
#include "fbunet/errors.hpp"
#include "fbunet/gradcheck.hpp"
#include "fbunet/inspect.hpp"
#include "fbunet/train.hpp"

namespace fs = std::filesystem;
using namespace fbunet;

namespace
{

struct Options
{
  std::string manifest;
  std::string variant = "feedback-convlstm";
  int classes = 0;
  std::string filters = "8,16,32,64,128";
  std::string lstm_locations = "a,b,c,d,e";
  std::string feedback_input = "probs-only";
  double lambda = 0.5;
  double lr = 1e-4;
  int epochs = 1500;
  int batch = 16;
  std::uint64_t seed = 0;
  std::string fold = "5/0";
  std::string ratios;
  std::string out = "run";
  std::string precision = "standard";
  int eval_every = 1;
  bool no_class_weights = false;
  // evaluate / inspect
  std::string checkpoint;
  std::string split = "test";
  std::string image;
  std::string label;
  // ablate
  std::vector<std::string> arms;
  int jobs = 1;
  // make-synth
  int count = 64;
  int size = 64;
};

std::vector<std::string> split_on(const std::string & text, char sep)
{
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

std::pair<int, int> parse_fold(const std::string & text)
{
  const auto parts = split_on(text, '/');
  if (parts.size() != 2) throw ConfigError("fold", "expected K/I, got '" + text + "'");
  const int k = std::stoi(parts[0]);
  const int i = std::stoi(parts[1]);
  if (k < 1 || i < 0 || i >= k) throw ConfigError("fold", "need K >= 1 and 0 <= I < K");
  return {k, i};
}

SplitRatios parse_ratios(const std::string & text, int k)
{
  if (text.empty()) {
    if (k < 3) throw ConfigError("ratios", "pass --ratios when K < 3");
    return {double(k - 2), 1.0, 1.0};
  }
  const auto parts = split_on(text, ',');
  if (parts.size() != 3) throw ConfigError("ratios", "expected train,val,test");
  return {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
}

ModelConfig model_config(const Options & o, int dataset_classes)
{
  ModelConfig config = ModelConfig::for_variant(parse_variant(o.variant));
  config.num_classes = o.classes > 0 ? o.classes : dataset_classes;
  const auto widths = split_on(o.filters, ',');
  if (widths.size() != 5) throw ConfigError("filters", "expected five comma-separated widths");
  for (std::size_t i = 0; i < 5; ++i) config.filters[i] = std::stoi(widths[i]);
  if (config.variant == Variant::feedback_convlstm) {
    config.lstm_locations = parse_locations(o.lstm_locations);
  }
  config.feedback_input = parse_feedback_input(o.feedback_input);
  config.lambda = o.lambda;
  config.validate();
  return config;
}

TrainConfig train_config(const Options & o, int dataset_classes)
{
  TrainConfig config;
  config.model = model_config(o, dataset_classes);
  config.lr = o.lr;
  config.epochs = o.epochs;
  config.batch_size = o.batch;
  config.seed = o.seed;
  config.eval_every = o.eval_every;
  config.class_weighting = !o.no_class_weights;
  config.validate();
  return config;
}

struct LoadedData
{
  DatasetManifest manifest;
  Dataset dataset;
  FoldSpec fold;
  SplitIndices split;
};

LoadedData load_data(const Options & o)
{
  if (o.manifest.empty()) throw ConfigError("manifest", "--manifest is required");
  LoadedData data;
  data.manifest = read_manifest(o.manifest);
  data.dataset = load_dataset(data.manifest);
  const auto [k, i] = parse_fold(o.fold);
  data.fold = make_folds(data.manifest, k, parse_ratios(o.ratios, k), o.seed).at(static_cast<std::size_t>(i));
  data.split = resolve_fold(data.dataset, data.fold);
  return data;
}

std::vector<std::size_t> pick_split(const LoadedData & data, const std::string & name)
{
  if (name == "train") return data.split.train;
  if (name == "val") return data.split.val;
  if (name == "test") return data.split.test;
  if (name == "all") {
    std::vector<std::size_t> all(data.dataset.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  throw ConfigError("split", "expected train, val, test or all");
}

std::vector<TableRow> report_rows(const std::string & label, const EvalReport & report)
{
  std::vector<TableRow> rows;
  if (report.round2) {
    rows.push_back({label + " (round 1)", report.round1});
    rows.push_back({label, *report.round2});
  } else {
    rows.push_back({label, report.round1});
  }
  return rows;
}

void print_report(const std::string & label, const EvalReport & report, const fs::path * file)
{
  const auto rows = report_rows(label, report);
  const std::string text =
    format_iou_table(report.class_names, rows) + "\n" + format_iou_rows(report.class_names, rows);
  std::cout << text;
  if (file) {
    std::ofstream out(*file, std::ios::binary);
    out << text;
  }
}

template <typename T>
int run_train(const Options & o)
{
  const LoadedData data = load_data(o);
  TrainConfig config = train_config(o, data.dataset.classes);
  config.checkpoint_dir = fs::path(o.out);
  std::cerr << "train " << data.split.train.size() << " / val " << data.split.val.size() << " / test "
            << data.split.test.size() << " samples, " << serialize(config.model) << "\n";
  TrainResult<T> result = train<T>(config, data.dataset, data.split, &std::cout);
  if (!data.split.test.empty()) {
    const EvalReport report = evaluate(result.best, data.dataset, data.split.test, config.batch_size);
    const fs::path file = fs::path(o.out) / "report.txt";
    print_report(to_string(config.model.variant), report, &file);
  }
  return 0;
}

template <typename T>
int run_evaluate(const Options & o)
{
  if (o.checkpoint.empty()) throw ConfigError("checkpoint", "--checkpoint is required");
  const LoadedData data = load_data(o);
  Model<T> model = model_from_checkpoint<T>(load_checkpoint(o.checkpoint));
  if (model.config().num_classes != data.dataset.classes) {
    throw ConfigError("classes", "checkpoint and manifest class counts differ");
  }
  const auto indices = pick_split(data, o.split);
  print_report(to_string(model.config().variant), evaluate(model, data.dataset, indices, o.batch), nullptr);
  return 0;
}

template <typename T>
int run_ablate(const Options & o)
{
  const LoadedData data = load_data(o);
  TrainConfig config = train_config(o, data.dataset.classes);
  config.checkpoint_dir = fs::path(o.out);
  std::vector<AblationArm> arms;
  if (o.arms.empty()) {
    arms = default_ablation_arms();
  } else {
    for (const auto & spec : o.arms) {
      const auto eq = spec.find('=');
      const std::string locs = eq == std::string::npos ? spec : spec.substr(eq + 1);
      const std::string label = eq == std::string::npos ? spec : spec.substr(0, eq);
      arms.push_back({label, parse_locations(locs)});
    }
  }
  const auto rows = ablate<T>(config, arms, data.dataset, data.split, o.jobs);
  std::string text = format_ablation_table(data.dataset.class_names, rows) + "\n";
  std::vector<TableRow> machine;
  for (const auto & row : rows) {
    machine.push_back({row.label, row.test.final()});
    text += "params\t" + row.label + "\t" + std::to_string(row.parameters) + "\n";
  }
  text += format_iou_rows(data.dataset.class_names, machine);
  std::cout << text;
  fs::create_directories(o.out);
  std::ofstream(fs::path(o.out) / "ablation.txt", std::ios::binary) << text;
  return 0;
}

int run_gradcheck(const Options & o)
{
  const GradcheckReport report = run_gradcheck(gradcheck_registry(), o.seed == 0 ? 1 : o.seed);
  std::cout << report.format();
  std::cout << (report.passed() ? "gradcheck: all ops passed" : "gradcheck: FAILED") << " (tolerance "
            << report.tolerance << ")\n";
  return report.passed() ? 0 : 1;
}

template <typename T>
int run_inspect(const Options & o)
{
  if (o.checkpoint.empty()) throw ConfigError("checkpoint", "--checkpoint is required");
  if (o.image.empty()) throw ConfigError("image", "--image is required");
  Model<T> model = model_from_checkpoint<T>(load_checkpoint(o.checkpoint));
  const Image image = from_gray(load_pgm(o.image));
  std::optional<LabelImage> label;
  if (!o.label.empty()) {
    if (fs::exists(o.label)) {
      label = load_pgm(o.label).cast<std::int32_t>();
    } else {
      std::cerr << "warning: label file " << o.label << " not found, skipping ground truth panel\n";
    }
  }
  const InspectPanels panels = inspect(model, image, label, o.out);
  std::cout << panels.input.string() << "\n";
  if (panels.ground_truth) std::cout << panels.ground_truth->string() << "\n";
  std::cout << panels.prediction.string() << "\n";
  for (const auto & p : panels.probabilities) std::cout << p.string() << "\n";
  if (panels.activation_sum) std::cout << panels.activation_sum->string() << "\n";
  return 0;
}

int run_make_synth(const Options & o)
{
  const int classes = o.classes > 0 ? o.classes : 4;
  const DatasetManifest manifest = synthetic_dataset(classes, o.count, o.size, o.seed, o.out);
  std::cout << (fs::path(o.out) / "manifest.tsv").string() << "\t" << manifest.entries.size() << " samples\n";
  return 0;
}

int run_make_folds(const Options & o)
{
  if (o.manifest.empty()) throw ConfigError("manifest", "--manifest is required");
  const DatasetManifest manifest = read_manifest(o.manifest);
  const int k = std::stoi(split_on(o.fold, '/').at(0));
  const auto folds = make_folds(manifest, k, parse_ratios(o.ratios, k), o.seed);
  fs::create_directories(o.out);
  for (const auto & fold : folds) {
    const fs::path path = fs::path(o.out) / ("fold_" + std::to_string(fold.index) + ".tsv");
    std::ofstream out(path, std::ios::binary);
    for (const auto & id : fold.train) out << "train\t" << id << "\n";
    for (const auto & id : fold.val) out << "val\t" << id << "\n";
    for (const auto & id : fold.test) out << "test\t" << id << "\n";
    std::cout << path.string() << "\t" << fold.train.size() << "/" << fold.val.size() << "/"
              << fold.test.size() << "\n";
  }
  return 0;
}

template <typename Fn>
int with_precision(const Options & o, Fn && fn)
{
  if (o.precision == "standard") return fn(float{});
  if (o.precision == "extended") return fn(double{});
  throw ConfigError("precision", "expected standard or extended");
}

void add_model_flags(CLI::App * cmd, Options & o)
{
  cmd->add_option("--variant", o.variant, "unet|runet|feedback-plain|feedback-rcl|feedback-convlstm");
  cmd->add_option("--classes", o.classes, "Number of classes (default: from manifest)");
  cmd->add_option("--filters", o.filters, "Encoder widths a,b,c,d,e");
  cmd->add_option("--lstm-locations", o.lstm_locations, "ConvLSTM locations, subset of a,b,c,d,e");
  cmd->add_option("--feedback-input", o.feedback_input, "probs-only|concat-image");
  cmd->add_option("--lambda", o.lambda, "Weight of the round-1 loss");
}

void add_data_flags(CLI::App * cmd, Options & o)
{
  cmd->add_option("--manifest", o.manifest, "Dataset manifest")->required();
  cmd->add_option("--fold", o.fold, "Fold selector K/I");
  cmd->add_option("--ratios", o.ratios, "train,val,test group ratios (default K-2,1,1)");
  cmd->add_option("--seed", o.seed, "Seed for folds, initialization and shuffling");
  cmd->add_option("--batch", o.batch, "Batch size");
  cmd->add_option("--precision", o.precision, "standard|extended");
}

void add_train_flags(CLI::App * cmd, Options & o)
{
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--eval-every", o.eval_every, "Epochs between validation passes");
  cmd->add_flag("--no-class-weights", o.no_class_weights, "Use unit class weights");
  cmd->add_option("--out", o.out, "Output directory");
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Feedback U-Net segmentation"};
  app.require_subcommand(1);
  Options o;

  auto * train_cmd = app.add_subcommand("train", "Train a model on one fold");
  add_model_flags(train_cmd, o);
  add_data_flags(train_cmd, o);
  add_train_flags(train_cmd, o);

  auto * eval_cmd = app.add_subcommand("evaluate", "IoU report for a checkpoint");
  add_data_flags(eval_cmd, o);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--split", o.split, "train|val|test|all");

  auto * ablate_cmd = app.add_subcommand("ablate", "ConvLSTM location sweep");
  add_model_flags(ablate_cmd, o);
  add_data_flags(ablate_cmd, o);
  add_train_flags(ablate_cmd, o);
  ablate_cmd->add_option("--arm", o.arms, "LABEL=locations (repeatable; default: standard sweep)");
  ablate_cmd->add_option("--jobs", o.jobs, "Arms trained in parallel");

  auto * grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad_cmd->add_option("--seed", o.seed, "Seed for random inputs");

  auto * inspect_cmd = app.add_subcommand("inspect", "Write prediction panels for one image");
  inspect_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  inspect_cmd->add_option("--image", o.image, "Input PGM")->required();
  inspect_cmd->add_option("--label", o.label, "Ground-truth label PGM");
  inspect_cmd->add_option("--out", o.out, "Output directory");
  inspect_cmd->add_option("--precision", o.precision, "standard|extended");

  auto * synth_cmd = app.add_subcommand("make-synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--classes", o.classes, "Number of classes");
  synth_cmd->add_option("--count", o.count, "Number of images");
  synth_cmd->add_option("--size", o.size, "Image side length");
  synth_cmd->add_option("--seed", o.seed, "Generator seed");
  synth_cmd->add_option("--out", o.out, "Output directory");

  auto * folds_cmd = app.add_subcommand("make-folds", "Write fold assignments");
  folds_cmd->add_option("--manifest", o.manifest, "Dataset manifest")->required();
  folds_cmd->add_option("--fold", o.fold, "Fold count K (an /I suffix is ignored)");
  folds_cmd->add_option("--ratios", o.ratios, "train,val,test group ratios (default K-2,1,1)");
  folds_cmd->add_option("--seed", o.seed, "Shuffle seed");
  folds_cmd->add_option("--out", o.out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      return with_precision(o, [&](auto t) { return run_train<decltype(t)>(o); });
    }
    if (eval_cmd->parsed()) {
      return with_precision(o, [&](auto t) { return run_evaluate<decltype(t)>(o); });
    }
    if (ablate_cmd->parsed()) {
      return with_precision(o, [&](auto t) { return run_ablate<decltype(t)>(o); });
    }
    if (grad_cmd->parsed()) return run_gradcheck(o);
    if (inspect_cmd->parsed()) {
      return with_precision(o, [&](auto t) { return run_inspect<decltype(t)>(o); });
    }
    if (synth_cmd->parsed()) return run_make_synth(o);
    if (folds_cmd->parsed()) return run_make_folds(o);
  } catch (const ConfigError & e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
