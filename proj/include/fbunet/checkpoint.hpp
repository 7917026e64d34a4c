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

#ifndef FBUNET_CHECKPOINT_HPP_
#define FBUNET_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fbunet/model.hpp"

namespace fbunet
{

inline constexpr char kCheckpointMagic[8] = {'F', 'B', 'U', 'N', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor
{
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const CheckpointTensor &) const = default;
};

struct CheckpointCounter
{
  std::string name;
  std::uint64_t value = 0;

  bool operator==(const CheckpointCounter &) const = default;
};

/// Layout (all integers little-endian):
///   magic[8] u32 version
///   u32 len, config text
///   u32 count, then per tensor: u32 len, name, u32 n c h w, f32 values
///   u32 count, then per counter: u32 len, name, u64 value
///   u32 len, rng state text
///   u64 epoch
struct Checkpoint
{
  ModelConfig config;
  std::vector<CheckpointTensor> tensors;
  std::vector<CheckpointCounter> counters;
  std::string rng_state;
  std::uint64_t epoch = 0;

  const CheckpointTensor & tensor(const std::string & name) const;
  bool operator==(const Checkpoint &) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint & checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint & checkpoint, const std::filesystem::path & path);
Checkpoint load_checkpoint(const std::filesystem::path & path);

/// Parameters, running statistics and Adam moments of `model`.
template <typename T>
Checkpoint capture(Model<T> & model, const std::string & rng_state = {}, std::uint64_t epoch = 0);

/// Copies checkpoint contents into `model`. Throws ConfigError when the
/// checkpoint was written for a different configuration.
template <typename T>
void restore(const Checkpoint & checkpoint, Model<T> & model);

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint & checkpoint);

}  // namespace fbunet

#endif  // FBUNET_CHECKPOINT_HPP_
