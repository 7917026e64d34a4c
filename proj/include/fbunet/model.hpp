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

#ifndef FBUNET_MODEL_HPP_
#define FBUNET_MODEL_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fbunet/layers.hpp"

namespace fbunet
{

enum class Variant { unet, runet, feedback_plain, feedback_rcl, feedback_convlstm };

/// How the backbone input is formed in each round.
///  probs_only:   C channels. Round 1 tiles the image, round 2 feeds the round-1 probabilities.
///  concat_image: 1 + C channels. The image is always channel 0; the rest is a
///                uniform 1/C prior in round 1 and the round-1 probabilities in round 2.
enum class FeedbackInput { probs_only, concat_image };

/// ConvLSTM placement tags:
///   a: encoder scale 0 block 0    b: encoder scale 0 block 1
///   c: both bottleneck blocks     d: decoder scale 0 block 0
///   e: decoder scale 0 block 1
enum class Location { a, b, c, d, e };
using LocationSet = std::set<Location>;

inline const LocationSet kAllLocations{Location::a, Location::b, Location::c, Location::d, Location::e};

std::string to_string(Variant v);
std::string to_string(FeedbackInput mode);
std::string to_string(const LocationSet & locations);  // "a,b,c"
Variant parse_variant(std::string_view text);
FeedbackInput parse_feedback_input(std::string_view text);
LocationSet parse_locations(std::string_view text);

struct ModelConfig
{
  Variant variant = Variant::feedback_convlstm;
  int num_classes = 4;
  std::array<int, 5> filters{8, 16, 32, 64, 128};
  LocationSet lstm_locations = kAllLocations;
  FeedbackInput feedback_input = FeedbackInput::probs_only;
  int rcl_time_steps = 2;
  double lambda = 0.5;
  double forget_bias = kDefaultForgetBias;

  /// Defaults for a variant (ConvLSTM locations only for feedback_convlstm).
  static ModelConfig for_variant(Variant v);

  bool is_feedback() const;
  int rounds() const { return is_feedback() ? 2 : 1; }
  int input_channels() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig &) const = default;
};

/// Single-line `key=value;...` form used in checkpoints and reports.
std::string serialize(const ModelConfig & config);
ModelConfig parse_model_config(std::string_view text);

template <typename T>
struct ForwardOutput
{
  Tensor<T> probs_round1;
  std::optional<Tensor<T>> probs_round2;
  /// Channel sum of the first block's round-2 activation, (n, 1, h, w).
  std::optional<Tensor<T>> first_layer_sum;

  /// The segmentation output: round 2 when present.
  const Tensor<T> & final_probs() const { return probs_round2 ? *probs_round2 : probs_round1; }
};

template <typename T>
struct NamedParameter
{
  std::string name;
  Parameter<T> * param;
};

template <typename T>
struct NamedStats
{
  std::string name;
  Vec<T> * values;
};

/// U-Net backbone (4 encoder scales, bottleneck, 4 decoder scales, softmax head)
/// plus the two-round feedback driver. Move-only; `clone()` deep-copies.
template <typename T>
class Model
{
public:
  Model(const ModelConfig & config, std::uint64_t seed);
  Model(Model &&) noexcept = default;
  Model & operator=(Model &&) noexcept = default;
  Model(const Model &) = delete;
  Model & operator=(const Model &) = delete;

  Model clone() const;

  const ModelConfig & config() const { return config_; }

  /// Image (n, 1, h, w) with h, w divisible by 16. Recurrent state must be
  /// clear on entry (see reset_state); it is left populated afterwards.
  ForwardOutput<T> forward(const Tensor<T> & image, bool training);

  /// One pass through the shared backbone using the round's batch-norm set.
  Tensor<T> backbone(const Tensor<T> & input, Round round, bool training);

  /// Backbone input for a round. `probs` is the round-1 output (null in round 1).
  Tensor<T> round_input(const Tensor<T> & image, const Tensor<T> * probs) const;

  void reset_state();
  bool has_state() const;

  std::vector<NamedParameter<T>> named_parameters();
  std::vector<Parameter<T> *> parameters();
  std::vector<NamedStats<T>> named_running_stats();
  std::int64_t parameter_count() const;

  /// Block positions in execution order: enc{s}.{b}, mid.{b}, dec{s}.{b}.
  std::vector<std::string> block_positions() const;
  Block<T> & block(std::string_view position);
  const Block<T> & block(std::string_view position) const;
  int lstm_cell_count() const;
  int rcl_count() const;

  /// First block's post-ReLU activation from the most recent backbone call per round.
  const std::optional<Tensor<T>> & first_block_output(Round round) const
  {
    return first_block_[round_index(round)];
  }

private:
  ModelConfig config_;
  std::vector<std::pair<std::string, Block<T>>> blocks_;
  std::array<UpConv<T>, 4> up_;  // indexed by decoder scale
  Conv3x3<T> head_;
  std::array<std::optional<Tensor<T>>, 2> first_block_;

  Model() = default;
  Block<T> & block_at(std::size_t index) { return blocks_[index].second; }
};

template <typename T>
Model<T> build_model(const ModelConfig & config, std::uint64_t seed)
{
  return Model<T>(config, seed);
}

/// Channel sum of the first block's round-2 activation (inference mode).
/// Feedback variants only.
template <typename T>
Tensor<T> first_layer_activation_sum(Model<T> & model, const Tensor<T> & image);

/// Position names hosting a ConvLSTM cell for the given tags.
std::vector<std::string> positions_for(const LocationSet & locations);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace fbunet

#endif  // FBUNET_MODEL_HPP_
