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

#ifndef FBUNET_DATASET_HPP_
#define FBUNET_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fbunet/labels.hpp"
#include "fbunet/pgm.hpp"
#include "fbunet/tensor.hpp"

namespace fbunet
{

/// Grayscale intensities in [0, 1].
using Image = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SegmentationSample
{
  Image image;
  LabelImage label;
  std::string id;
};

struct ManifestEntry
{
  std::filesystem::path image;
  std::filesystem::path label;
  std::string id;
};

/// Text manifest: `# classes<TAB>C`, `# names<TAB>n0,n1,...` header lines, then
/// one `image<TAB>label<TAB>id` line per sample. Relative paths resolve
/// against the manifest's directory.
struct DatasetManifest
{
  std::filesystem::path root;
  int classes = 0;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
};

DatasetManifest read_manifest(const std::filesystem::path & path);
void write_manifest(const DatasetManifest & manifest, const std::filesystem::path & path);

/// Samples in manifest order plus class metadata.
struct Dataset
{
  int classes = 0;
  std::vector<std::string> class_names;
  std::vector<SegmentationSample> samples;

  std::vector<std::string> ids() const;
  const SegmentationSample & find(const std::string & id) const;
};

SegmentationSample load_sample(const ManifestEntry & entry, const std::filesystem::path & root, int classes);
Dataset load_dataset(const DatasetManifest & manifest);

/// Writes images and labels as PGMs under `dir` and a `manifest.tsv` next to them.
DatasetManifest write_dataset(
  const Dataset & dataset, const std::filesystem::path & dir);

GrayImage to_gray(const Image & image);
Image from_gray(const GrayImage & gray);

/// Non-overlapping row-major tiles; ids gain a `_r{row}_c{col}` suffix.
std::vector<SegmentationSample> crop_grid(const SegmentationSample & sample, int size = 256);

/// Dihedral transform: optional left-right mirror, then `quarter_turns` x 90
/// degrees counter-clockwise.
template <typename Derived>
auto dihedral(const Eigen::ArrayBase<Derived> & a, int quarter_turns, bool mirror)
{
  using Plain = typename Derived::PlainObject;
  Plain out = mirror ? Plain(a.rowwise().reverse()) : Plain(a);
  for (int k = 0; k < ((quarter_turns % 4) + 4) % 4; ++k) {
    out = Plain(out.transpose().colwise().reverse());
  }
  return out;
}

/// The 8 dihedral variants ordered (0, id), (0, mirror), (90, id), ... Ids
/// gain an `@r{deg}` / `@r{deg}f` suffix; the part before '@' is the group.
std::vector<SegmentationSample> augment_8x(const SegmentationSample & sample);

/// Sample id with any augmentation suffix removed.
std::string group_of(const std::string & id);

struct SplitRatios
{
  double train = 3;
  double val = 1;
  double test = 1;
};

struct FoldSpec
{
  int k = 1;
  int index = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Group-aware folds. Groups are shuffled once by `seed`; fold i takes a
/// contiguous (cyclic) block of groups starting at floor(i * G / k) as its
/// test set, the next groups as validation and the rest as training.
/// Ratios are applied in units of groups and must divide exactly.
std::vector<FoldSpec> make_folds(
  std::span<const std::string> ids, int k, const SplitRatios & ratios, std::uint64_t seed);
std::vector<FoldSpec> make_folds(
  const DatasetManifest & manifest, int k, const SplitRatios & ratios, std::uint64_t seed);

/// Blob images for desk-scale runs. Class 0 is background; classes
/// 1..C-1 are drawn as progressively smaller, more numerous blobs so the last
/// class is rare. Image intensity is label / (C-1) with anti-aliased blob
/// rims, plus N(0, 0.1) noise, clipped and quantized to 8 bits.
Dataset generate_synthetic(int classes, int count, int size, std::uint64_t seed);

/// generate_synthetic written to `dir`.
DatasetManifest synthetic_dataset(
  int classes, int count, int size, std::uint64_t seed, const std::filesystem::path & dir);

/// Stacks the selected samples into an (n, 1, h, w) tensor and a label map.
template <typename T>
Tensor<T> batch_images(const Dataset & dataset, std::span<const std::size_t> indices);
LabelMap batch_labels(const Dataset & dataset, std::span<const std::size_t> indices);

}  // namespace fbunet

#endif  // FBUNET_DATASET_HPP_
