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

#include "fbunet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fbunet/errors.hpp"
#include "fbunet/rng.hpp"

namespace fbunet
{
namespace
{

std::vector<std::string> split(const std::string & s, char sep)
{
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string join(const std::vector<std::string> & items, char sep)
{
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path & root, const std::filesystem::path & p)
{
  return p.is_absolute() ? p : root / p;
}

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open manifest " + path.string());
  }
  DatasetManifest manifest;
  manifest.root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const std::uint64_t line_start = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (line.front() == '#') {
      if (fields.size() == 2 && fields[0] == "# classes") {
        try {
          manifest.classes = std::stoi(fields[1]);
        } catch (const std::exception &) {
          throw FormatError("manifest: bad class count '" + fields[1] + "'", line_start);
        }
      } else if (fields.size() == 2 && fields[0] == "# names") {
        manifest.class_names = split(fields[1], ',');
      }
      continue;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw FormatError("manifest: expected image<TAB>label<TAB>id", line_start);
    }
    manifest.entries.push_back({fields[0], fields[1], fields[2]});
  }
  if (manifest.classes < 2) {
    throw FormatError("manifest: missing or invalid '# classes' header", 0);
  }
  if (manifest.class_names.empty()) {
    for (int c = 0; c < manifest.classes; ++c) manifest.class_names.push_back("class" + std::to_string(c));
  }
  if (static_cast<int>(manifest.class_names.size()) != manifest.classes) {
    throw FormatError("manifest: class name count differs from class count", 0);
  }
  return manifest;
}

void write_manifest(const DatasetManifest & manifest, const std::filesystem::path & path)
{
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << "# classes\t" << manifest.classes << '\n';
  out << "# names\t" << join(manifest.class_names, ',') << '\n';
  for (const auto & e : manifest.entries) {
    out << e.image.generic_string() << '\t' << e.label.generic_string() << '\t' << e.id << '\n';
  }
  if (!out) {
    throw std::runtime_error("failed to write " + path.string());
  }
}

std::vector<std::string> Dataset::ids() const
{
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto & s : samples) out.push_back(s.id);
  return out;
}

const SegmentationSample & Dataset::find(const std::string & id) const
{
  for (const auto & s : samples) {
    if (s.id == id) return s;
  }
  throw DataError("no sample with id '" + id + "'");
}

GrayImage to_gray(const Image & image)
{
  return (image.max(0.0F).min(1.0F) * 255.0F).round().cast<std::uint8_t>();
}

Image from_gray(const GrayImage & gray) { return gray.cast<float>() / 255.0F; }

SegmentationSample load_sample(
  const ManifestEntry & entry, const std::filesystem::path & root, int classes)
{
  const auto image_path = resolve(root, entry.image);
  const auto label_path = resolve(root, entry.label);
  for (const auto & p : {image_path, label_path}) {
    if (!std::filesystem::exists(p)) {
      throw DataError("missing file " + p.string() + " for sample '" + entry.id + "'");
    }
  }
  SegmentationSample sample;
  sample.id = entry.id;
  sample.image = from_gray(load_pgm(image_path));
  const GrayImage label = load_pgm(label_path);
  if (label.rows() != sample.image.rows() || label.cols() != sample.image.cols()) {
    throw ShapeError("sample '" + entry.id + "': image and label sizes differ");
  }
  if (label.size() > 0 && label.maxCoeff() >= classes) {
    throw DataError(
      "sample '" + entry.id + "': label value " + std::to_string(int{label.maxCoeff()}) +
      " out of range for " + std::to_string(classes) + " classes");
  }
  sample.label = label.cast<std::int32_t>();
  return sample;
}

Dataset load_dataset(const DatasetManifest & manifest)
{
  Dataset dataset;
  dataset.classes = manifest.classes;
  dataset.class_names = manifest.class_names;
  dataset.samples.reserve(manifest.entries.size());
  for (const auto & e : manifest.entries) {
    dataset.samples.push_back(load_sample(e, manifest.root, manifest.classes));
  }
  return dataset;
}

DatasetManifest write_dataset(const Dataset & dataset, const std::filesystem::path & dir)
{
  DatasetManifest manifest;
  manifest.root = dir;
  manifest.classes = dataset.classes;
  manifest.class_names = dataset.class_names;
  for (const auto & s : dataset.samples) {
    ManifestEntry e{
      std::filesystem::path("images") / (s.id + ".pgm"),
      std::filesystem::path("labels") / (s.id + ".pgm"), s.id};
    save_pgm(to_gray(s.image), dir / e.image);
    save_pgm(s.label.cast<std::uint8_t>(), dir / e.label);
    manifest.entries.push_back(std::move(e));
  }
  write_manifest(manifest, dir / "manifest.tsv");
  return manifest;
}

std::vector<SegmentationSample> crop_grid(const SegmentationSample & sample, int size)
{
  const auto h = sample.image.rows();
  const auto w = sample.image.cols();
  if (size < 1 || h % size != 0 || w % size != 0) {
    throw ShapeError(
      "crop_grid: " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by " +
      std::to_string(size));
  }
  if (sample.label.rows() != h || sample.label.cols() != w) {
    throw ShapeError("crop_grid: image and label sizes differ");
  }
  std::vector<SegmentationSample> out;
  for (Eigen::Index r = 0; r < h / size; ++r) {
    for (Eigen::Index c = 0; c < w / size; ++c) {
      out.push_back(
        {sample.image.block(r * size, c * size, size, size),
         sample.label.block(r * size, c * size, size, size),
         sample.id + "_r" + std::to_string(r) + "_c" + std::to_string(c)});
    }
  }
  return out;
}

std::vector<SegmentationSample> augment_8x(const SegmentationSample & sample)
{
  if (sample.image.rows() != sample.image.cols()) {
    throw ShapeError("augment_8x: raster must be square");
  }
  if (sample.label.rows() != sample.image.rows() || sample.label.cols() != sample.image.cols()) {
    throw ShapeError("augment_8x: image and label sizes differ");
  }
  std::vector<SegmentationSample> out;
  out.reserve(8);
  for (int turns = 0; turns < 4; ++turns) {
    for (bool mirror : {false, true}) {
      out.push_back(
        {dihedral(sample.image, turns, mirror), dihedral(sample.label, turns, mirror),
         sample.id + "@r" + std::to_string(turns * 90) + (mirror ? "f" : "")});
    }
  }
  return out;
}

std::string group_of(const std::string & id) { return id.substr(0, id.find('@')); }

std::vector<FoldSpec> make_folds(
  std::span<const std::string> ids, int k, const SplitRatios & ratios, std::uint64_t seed)
{
  if (k < 1) {
    throw ConfigError("k", "fold count must be at least 1");
  }
  if (!(ratios.train >= 0 && ratios.val >= 0 && ratios.test > 0)) {
    throw ConfigError("ratios", "train/val must be >= 0 and test > 0");
  }
  std::vector<std::string> groups;
  std::unordered_map<std::string, std::size_t> group_index;
  std::vector<std::size_t> sample_group;
  std::set<std::string> seen;
  for (const auto & id : ids) {
    if (!seen.insert(id).second) {
      throw DataError("duplicate sample id '" + id + "'");
    }
    const std::string g = group_of(id);
    auto [it, inserted] = group_index.try_emplace(g, groups.size());
    if (inserted) groups.push_back(g);
    sample_group.push_back(it->second);
  }
  const auto total = static_cast<double>(groups.size());
  const double sum = ratios.train + ratios.val + ratios.test;
  auto count_for = [&](double ratio, const char * field) {
    const double exact = total * ratio / sum;
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-9 * std::max(1.0, exact)) {
      throw ConfigError(
        field, std::to_string(groups.size()) + " groups do not split exactly by the given ratios");
    }
    return static_cast<std::size_t>(rounded);
  };
  const std::size_t n_test = count_for(ratios.test, "ratios.test");
  const std::size_t n_val = count_for(ratios.val, "ratios.val");
  if (n_test == 0) {
    throw ConfigError("ratios.test", "test split is empty");
  }

  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = derive_rng(seed, 0xF01D);
  shuffle(order, rng);

  std::vector<FoldSpec> folds;
  const std::size_t g_count = groups.size();
  for (int i = 0; i < k; ++i) {
    // 0 = train, 1 = val, 2 = test
    std::vector<int> role(g_count, 0);
    const std::size_t start = static_cast<std::size_t>(i) * g_count / static_cast<std::size_t>(k);
    for (std::size_t j = 0; j < n_test + n_val; ++j) {
      role[order[(start + j) % g_count]] = j < n_test ? 2 : 1;
    }
    FoldSpec fold;
    fold.k = k;
    fold.index = i;
    for (std::size_t s = 0; s < ids.size(); ++s) {
      auto & dst = role[sample_group[s]] == 2 ? fold.test : role[sample_group[s]] == 1 ? fold.val : fold.train;
      dst.push_back(ids[s]);
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::vector<FoldSpec> make_folds(
  const DatasetManifest & manifest, int k, const SplitRatios & ratios, std::uint64_t seed)
{
  std::vector<std::string> ids;
  ids.reserve(manifest.entries.size());
  for (const auto & e : manifest.entries) ids.push_back(e.id);
  return make_folds(ids, k, ratios, seed);
}

namespace
{

struct Blob
{
  double cy, cx, radius;
  double amp[3];
  double phase[3];

  double edge(double theta) const
  {
    double r = 1.0;
    for (int m = 0; m < 3; ++m) r += amp[m] * std::cos((m + 2) * theta + phase[m]);
    return radius * r;
  }
};

SegmentationSample draw_sample(int classes, int size, Rng & rng)
{
  const double scale = size / 64.0;
  Image intensity = Image::Zero(size, size);
  LabelImage label = LabelImage::Zero(size, size);
  for (int c = 1; c < classes; ++c) {
    const double f = classes > 2 ? double(c - 1) / double(classes - 2) : 0.0;
    const double centre = 12.0 * std::pow(0.28, f) * scale;
    const int count = 1 + c;
    const auto level = static_cast<float>(double(c) / double(classes - 1));
    for (int b = 0; b < count; ++b) {
      Blob blob{};
      blob.radius = centre * uniform(rng, 0.85, 1.15);
      blob.cy = uniform(rng, blob.radius, size - blob.radius);
      blob.cx = uniform(rng, blob.radius, size - blob.radius);
      for (int m = 0; m < 3; ++m) {
        blob.amp[m] = uniform(rng, 0.0, 0.08);
        blob.phase[m] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      }
      const double reach = blob.radius * 1.3 + 2.0;
      const int y0 = std::max(0, int(std::floor(blob.cy - reach)));
      const int y1 = std::min(size - 1, int(std::ceil(blob.cy + reach)));
      const int x0 = std::max(0, int(std::floor(blob.cx - reach)));
      const int x1 = std::min(size - 1, int(std::ceil(blob.cx + reach)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double dy = y + 0.5 - blob.cy;
          const double dx = x + 0.5 - blob.cx;
          const double dist = std::hypot(dy, dx);
          const double coverage = std::clamp(blob.edge(std::atan2(dy, dx)) - dist + 0.5, 0.0, 1.0);
          if (coverage <= 0.0) continue;
          const auto cov = static_cast<float>(coverage);
          intensity(y, x) = (1.0F - cov) * intensity(y, x) + cov * level;
          if (coverage >= 0.5) label(y, x) = c;
        }
      }
    }
  }
  for (Eigen::Index i = 0; i < intensity.size(); ++i) {
    intensity.data()[i] += static_cast<float>(0.1 * normal(rng));
  }
  SegmentationSample sample;
  sample.image = from_gray(to_gray(intensity));
  sample.label = std::move(label);
  return sample;
}

}  // namespace

Dataset generate_synthetic(int classes, int count, int size, std::uint64_t seed)
{
  if (classes < 2 || classes > 255) {
    throw ConfigError("classes", "synthetic data needs 2..255 classes");
  }
  if (count < 1) {
    throw ConfigError("count", "must be positive");
  }
  if (size < 16 || size % 16 != 0) {
    throw ConfigError("size", "must be a positive multiple of 16");
  }
  Dataset dataset;
  dataset.classes = classes;
  const std::vector<std::string> names{"background", "large", "medium", "small"};
  for (int c = 0; c < classes; ++c) {
    dataset.class_names.push_back(
      classes == 4 ? names[c] : c == 0 ? std::string("background") : "blob" + std::to_string(c));
  }
  for (int i = 0; i < count; ++i) {
    Rng rng = derive_rng(seed, static_cast<std::uint64_t>(i));
    for (int attempt = 0;; ++attempt) {
      SegmentationSample sample = draw_sample(classes, size, rng);
      std::vector<bool> present(classes, false);
      for (Eigen::Index p = 0; p < sample.label.size(); ++p) present[sample.label.data()[p]] = true;
      if (std::all_of(present.begin(), present.end(), [](bool b) { return b; })) {
        char id[32];
        std::snprintf(id, sizeof(id), "synth_%04d", i);
        sample.id = id;
        dataset.samples.push_back(std::move(sample));
        break;
      }
      if (attempt == 1000) {
        throw DataError("synthetic generator could not place every class");
      }
    }
  }
  return dataset;
}

DatasetManifest synthetic_dataset(
  int classes, int count, int size, std::uint64_t seed, const std::filesystem::path & dir)
{
  return write_dataset(generate_synthetic(classes, count, size, seed), dir);
}

template <typename T>
Tensor<T> batch_images(const Dataset & dataset, std::span<const std::size_t> indices)
{
  if (indices.empty()) {
    throw ShapeError("batch_images: empty batch");
  }
  const auto & first = dataset.samples.at(indices[0]).image;
  const int h = static_cast<int>(first.rows());
  const int w = static_cast<int>(first.cols());
  Vec<T> values(static_cast<Eigen::Index>(indices.size()) * h * w);
  Eigen::Index offset = 0;
  for (std::size_t idx : indices) {
    const auto & img = dataset.samples.at(idx).image;
    if (img.rows() != h || img.cols() != w) {
      throw ShapeError("batch_images: samples have different sizes");
    }
    values.segment(offset, img.size()) =
      Eigen::Map<const Eigen::ArrayXf>(img.data(), img.size()).cast<T>();
    offset += img.size();
  }
  return Tensor<T>(Shape{static_cast<int>(indices.size()), 1, h, w}, std::move(values));
}

LabelMap batch_labels(const Dataset & dataset, std::span<const std::size_t> indices)
{
  if (indices.empty()) {
    throw ShapeError("batch_labels: empty batch");
  }
  const auto & first = dataset.samples.at(indices[0]).label;
  LabelMap out(static_cast<int>(indices.size()), static_cast<int>(first.rows()), static_cast<int>(first.cols()));
  Eigen::Index offset = 0;
  for (std::size_t idx : indices) {
    const auto & lab = dataset.samples.at(idx).label;
    if (lab.rows() != out.h || lab.cols() != out.w) {
      throw ShapeError("batch_labels: samples have different sizes");
    }
    out.values.segment(offset, lab.size()) =
      Eigen::Map<const Eigen::Array<std::int32_t, Eigen::Dynamic, 1>>(lab.data(), lab.size());
    offset += lab.size();
  }
  return out;
}

template Tensor<float> batch_images(const Dataset &, std::span<const std::size_t>);
template Tensor<double> batch_images(const Dataset &, std::span<const std::size_t>);

}  // namespace fbunet
