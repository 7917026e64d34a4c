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

#include "fbunet/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fbunet
{
namespace
{

std::vector<std::string_view> split(std::string_view text, char sep)
{
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find(sep, start);
    if (end == std::string_view::npos) {
      parts.push_back(text.substr(start));
      break;
    }
    parts.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view text, const std::string & field)
{
  int value = 0;
  text = trim(text);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(field, "not an integer: '" + std::string(text) + "'");
  }
  return value;
}

double parse_double(std::string_view text, const std::string & field)
{
  const std::string s(trim(text));
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(s, &used);
  } catch (const std::exception &) {
    throw ConfigError(field, "not a number: '" + s + "'");
  }
  if (used != s.size()) {
    throw ConfigError(field, "not a number: '" + s + "'");
  }
  return value;
}

std::string format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool is_feedback_variant(Variant v)
{
  return v == Variant::feedback_plain || v == Variant::feedback_rcl ||
         v == Variant::feedback_convlstm;
}

}  // namespace

std::string to_string(Variant v)
{
  switch (v) {
    case Variant::unet:
      return "unet";
    case Variant::runet:
      return "runet";
    case Variant::feedback_plain:
      return "feedback-plain";
    case Variant::feedback_rcl:
      return "feedback-rcl";
    case Variant::feedback_convlstm:
      return "feedback-convlstm";
  }
  return "?";
}

std::string to_string(FeedbackInput mode)
{
  return mode == FeedbackInput::probs_only ? "probs-only" : "concat-image";
}

std::string to_string(const LocationSet & locations)
{
  std::string out;
  for (Location loc : locations) {
    if (!out.empty()) out += ',';
    out += static_cast<char>('a' + static_cast<int>(loc));
  }
  return out;
}

Variant parse_variant(std::string_view text)
{
  for (Variant v :
       {Variant::unet, Variant::runet, Variant::feedback_plain, Variant::feedback_rcl,
        Variant::feedback_convlstm}) {
    if (text == to_string(v)) return v;
  }
  throw ConfigError("variant", "unknown variant '" + std::string(text) + "'");
}

FeedbackInput parse_feedback_input(std::string_view text)
{
  if (text == "probs-only") return FeedbackInput::probs_only;
  if (text == "concat-image") return FeedbackInput::concat_image;
  throw ConfigError("feedback_input", "unknown mode '" + std::string(text) + "'");
}

LocationSet parse_locations(std::string_view text)
{
  LocationSet out;
  text = trim(text);
  if (text.empty()) return out;
  for (std::string_view part : split(text, ',')) {
    part = trim(part);
    if (part.size() != 1 || part[0] < 'a' || part[0] > 'e') {
      throw ConfigError("lstm_locations", "unknown location '" + std::string(part) + "'");
    }
    out.insert(static_cast<Location>(part[0] - 'a'));
  }
  return out;
}

ModelConfig ModelConfig::for_variant(Variant v)
{
  ModelConfig config;
  config.variant = v;
  if (v != Variant::feedback_convlstm) {
    config.lstm_locations.clear();
  }
  return config;
}

bool ModelConfig::is_feedback() const { return is_feedback_variant(variant); }

int ModelConfig::input_channels() const
{
  if (!is_feedback()) return 1;
  return feedback_input == FeedbackInput::probs_only ? num_classes : num_classes + 1;
}

void ModelConfig::validate() const
{
  if (num_classes < 2) {
    throw ConfigError("num_classes", "must be >= 2");
  }
  for (int f : filters) {
    if (f < 1) throw ConfigError("filters", "all widths must be >= 1");
  }
  if (variant == Variant::feedback_convlstm) {
    if (lstm_locations.empty()) {
      throw ConfigError("lstm_locations", "feedback-convlstm needs at least one location");
    }
  } else if (!lstm_locations.empty()) {
    throw ConfigError("lstm_locations", "only feedback-convlstm accepts ConvLSTM locations");
  }
  if (rcl_time_steps < 1) {
    throw ConfigError("rcl_time_steps", "must be >= 1");
  }
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw ConfigError("lambda", "must be finite and >= 0");
  }
  if (!std::isfinite(forget_bias)) {
    throw ConfigError("forget_bias", "must be finite");
  }
}

std::string serialize(const ModelConfig & config)
{
  std::ostringstream out;
  out << "variant=" << to_string(config.variant) << ";classes=" << config.num_classes
      << ";filters=";
  for (std::size_t i = 0; i < config.filters.size(); ++i) {
    out << (i ? "," : "") << config.filters[i];
  }
  out << ";lstm=" << to_string(config.lstm_locations)
      << ";feedback_input=" << to_string(config.feedback_input)
      << ";rcl_steps=" << config.rcl_time_steps << ";lambda=" << format_double(config.lambda)
      << ";forget_bias=" << format_double(config.forget_bias);
  return out.str();
}

ModelConfig parse_model_config(std::string_view text)
{
  ModelConfig config;
  for (std::string_view item : split(text, ';')) {
    if (trim(item).empty()) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("model_config", "missing '=' in '" + std::string(item) + "'");
    }
    const std::string_view key = trim(item.substr(0, eq));
    const std::string_view value = trim(item.substr(eq + 1));
    if (key == "variant") {
      config.variant = parse_variant(value);
    } else if (key == "classes") {
      config.num_classes = parse_int(value, "num_classes");
    } else if (key == "filters") {
      const auto parts = split(value, ',');
      if (parts.size() != 5) throw ConfigError("filters", "exactly 5 widths required");
      for (std::size_t i = 0; i < 5; ++i) config.filters[i] = parse_int(parts[i], "filters");
    } else if (key == "lstm") {
      config.lstm_locations = parse_locations(value);
    } else if (key == "feedback_input") {
      config.feedback_input = parse_feedback_input(value);
    } else if (key == "rcl_steps") {
      config.rcl_time_steps = parse_int(value, "rcl_time_steps");
    } else if (key == "lambda") {
      config.lambda = parse_double(value, "lambda");
    } else if (key == "forget_bias") {
      config.forget_bias = parse_double(value, "forget_bias");
    } else {
      throw ConfigError("model_config", "unknown key '" + std::string(key) + "'");
    }
  }
  config.validate();
  return config;
}

std::vector<std::string> positions_for(const LocationSet & locations)
{
  std::vector<std::string> out;
  for (Location loc : locations) {
    switch (loc) {
      case Location::a:
        out.push_back("enc0.0");
        break;
      case Location::b:
        out.push_back("enc0.1");
        break;
      case Location::c:
        out.push_back("mid.0");
        out.push_back("mid.1");
        break;
      case Location::d:
        out.push_back("dec0.0");
        break;
      case Location::e:
        out.push_back("dec0.1");
        break;
    }
  }
  return out;
}

template <typename T>
Model<T>::Model(const ModelConfig & config, std::uint64_t seed) : config_(config)
{
  config_.validate();
  Rng rng = derive_rng(seed, 0x1417);
  const int rounds = config_.rounds();
  const auto & f = config_.filters;

  const auto lstm_positions = positions_for(config_.lstm_locations);
  const auto rcl_positions = positions_for(kAllLocations);
  auto contains = [](const std::vector<std::string> & v, const std::string & s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };

  auto make_block = [&](const std::string & pos, int cin, int cout) {
    Block<T> block = [&]() -> Block<T> {
      switch (config_.variant) {
        case Variant::runet:
          return make_recurrent_conv_layer<T>(cin, cout, rounds, config_.rcl_time_steps, rng);
        case Variant::feedback_rcl:
          if (contains(rcl_positions, pos)) {
            return make_recurrent_conv_layer<T>(cin, cout, rounds, config_.rcl_time_steps, rng);
          }
          break;
        case Variant::feedback_convlstm:
          if (contains(lstm_positions, pos)) {
            return make_convlstm_cell<T>(cin, cout, rounds, rng, config_.forget_bias);
          }
          break;
        default:
          break;
      }
      return make_conv_bn_block<T>(cin, cout, rounds, rng);
    }();
    blocks_.emplace_back(pos, std::move(block));
  };

  int cin = config_.input_channels();
  for (int s = 0; s < 4; ++s) {
    const std::string prefix = "enc" + std::to_string(s) + ".";
    make_block(prefix + "0", cin, f[s]);
    make_block(prefix + "1", f[s], f[s]);
    cin = f[s];
  }
  make_block("mid.0", f[3], f[4]);
  make_block("mid.1", f[4], f[4]);
  for (int s = 3; s >= 0; --s) {
    up_[s] = make_upconv<T>(f[s + 1], f[s], rng);
    const std::string prefix = "dec" + std::to_string(s) + ".";
    make_block(prefix + "0", 2 * f[s], f[s]);
    make_block(prefix + "1", f[s], f[s]);
  }
  head_ = make_conv3x3<T>(f[0], config_.num_classes, rng);
}

template <typename T>
Model<T> Model<T>::clone() const
{
  Model copy;
  copy.config_ = config_;
  for (const auto & [name, block] : blocks_) {
    copy.blocks_.emplace_back(name, clone_block(block));
  }
  for (std::size_t s = 0; s < up_.size(); ++s) {
    copy.up_[s] = up_[s].clone();
  }
  copy.head_ = head_.clone();
  return copy;
}

template <typename T>
Tensor<T> Model<T>::backbone(const Tensor<T> & input, Round round, bool training)
{
  if (input.c() != config_.input_channels()) {
    throw ShapeError(
      "backbone: expected " + std::to_string(config_.input_channels()) + " input channels, got " +
      std::to_string(input.c()));
  }
  if (input.h() % 16 != 0 || input.w() % 16 != 0) {
    throw ShapeError("backbone: spatial size must be divisible by 16, got " + input.shape().str());
  }
  if (round_index(round) >= static_cast<std::size_t>(config_.rounds())) {
    throw ContractError("backbone: round 2 requested on a single-round model");
  }

  std::size_t next = 0;
  std::array<Tensor<T>, 4> skips;
  Tensor<T> x = input;
  for (int s = 0; s < 4; ++s) {
    x = apply_block(block_at(next++), x, round, training);
    if (s == 0) first_block_[round_index(round)] = x;
    x = apply_block(block_at(next++), x, round, training);
    skips[s] = x;
    x = maxpool2d(x);
  }
  x = apply_block(block_at(next++), x, round, training);
  x = apply_block(block_at(next++), x, round, training);
  for (int s = 3; s >= 0; --s) {
    x = channel_concat(skips[s], up_[s](x));
    x = apply_block(block_at(next++), x, round, training);
    x = apply_block(block_at(next++), x, round, training);
  }
  return channel_softmax(head_(x));
}

template <typename T>
Tensor<T> Model<T>::round_input(const Tensor<T> & image, const Tensor<T> * probs) const
{
  const int classes = config_.num_classes;
  const Shape s = image.shape();
  if (!config_.is_feedback()) {
    return image;
  }
  if (config_.feedback_input == FeedbackInput::probs_only) {
    if (probs) return *probs;
    Tensor<T> tiled(Shape{s.n, classes, s.h, s.w});
    const std::int64_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < classes; ++c) {
        tiled.values().segment((std::int64_t{n} * classes + c) * plane, plane) =
          image.values().segment(std::int64_t{n} * plane, plane);
      }
    }
    return tiled;
  }
  if (probs) return channel_concat(image, *probs);
  return channel_concat(image, Tensor<T>(Shape{s.n, classes, s.h, s.w}, T(1) / T(classes)));
}

template <typename T>
ForwardOutput<T> Model<T>::forward(const Tensor<T> & image, bool training)
{
  if (image.c() != 1) {
    throw ShapeError("forward: expected a single-channel image, got " + image.shape().str());
  }
  if (image.h() % 16 != 0 || image.w() % 16 != 0) {
    throw ShapeError("forward: spatial size must be divisible by 16, got " + image.shape().str());
  }
  if (has_state()) {
    throw ContractError("forward: recurrent state not reset since the previous batch");
  }
  ForwardOutput<T> out;
  out.probs_round1 = backbone(round_input(image, nullptr), Round::first, training);
  if (!config_.is_feedback()) {
    return out;
  }
  out.probs_round2 = backbone(round_input(image, &out.probs_round1), Round::second, training);

  const Tensor<T> & act = *first_block_[1];
  const Shape as = act.shape();
  Tensor<T> total(Shape{as.n, 1, as.h, as.w});
  const std::int64_t plane = as.plane();
  for (int n = 0; n < as.n; ++n) {
    auto dst = total.values().segment(std::int64_t{n} * plane, plane);
    for (int c = 0; c < as.c; ++c) {
      dst += act.values().segment((std::int64_t{n} * as.c + c) * plane, plane);
    }
  }
  out.first_layer_sum = std::move(total);
  return out;
}

template <typename T>
void Model<T>::reset_state()
{
  for (auto & [name, block] : blocks_) {
    if (auto * cell = std::get_if<ConvLSTMCell<T>>(&block)) {
      fbunet::reset_state(*cell);
    }
  }
  first_block_ = {};
}

template <typename T>
bool Model<T>::has_state() const
{
  return std::any_of(blocks_.begin(), blocks_.end(), [](const auto & entry) {
    const auto * cell = std::get_if<ConvLSTMCell<T>>(&entry.second);
    return cell && cell->state.has_value();
  });
}

template <typename T>
std::vector<NamedParameter<T>> Model<T>::named_parameters()
{
  std::vector<NamedParameter<T>> out;
  auto add_bn = [&](const std::string & prefix, std::vector<BatchNorm<T>> & sets) {
    for (std::size_t r = 0; r < sets.size(); ++r) {
      const std::string p = prefix + ".bn" + std::to_string(r);
      out.push_back({p + ".gamma", &sets[r].gamma});
      out.push_back({p + ".beta", &sets[r].beta});
    }
  };
  for (auto & [name, block] : blocks_) {
    if (name.rfind("dec", 0) == 0 && name.back() == '0') {
      // upsampling precedes the first block of each decoder scale
      const int s = name[3] - '0';
      out.push_back({"up" + std::to_string(s) + ".weight", &up_[s].weight});
      out.push_back({"up" + std::to_string(s) + ".bias", &up_[s].bias});
    }
    std::visit(
      [&](auto & b) {
        using B = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<B, ConvBNBlock<T>>) {
          out.push_back({name + ".conv.weight", &b.conv.weight});
          out.push_back({name + ".conv.bias", &b.conv.bias});
        } else if constexpr (std::is_same_v<B, ConvLSTMCell<T>>) {
          out.push_back({name + ".conv.weight", &b.gates.weight});
          out.push_back({name + ".conv.bias", &b.gates.bias});
        } else {
          out.push_back({name + ".ff.weight", &b.feedforward.weight});
          out.push_back({name + ".ff.bias", &b.feedforward.bias});
          out.push_back({name + ".rec.weight", &b.recurrent.weight});
          out.push_back({name + ".rec.bias", &b.recurrent.bias});
        }
        add_bn(name, b.bn);
      },
      block);
  }
  out.push_back({"head.weight", &head_.weight});
  out.push_back({"head.bias", &head_.bias});
  return out;
}

template <typename T>
std::vector<Parameter<T> *> Model<T>::parameters()
{
  std::vector<Parameter<T> *> out;
  for (auto & np : named_parameters()) out.push_back(np.param);
  return out;
}

template <typename T>
std::vector<NamedStats<T>> Model<T>::named_running_stats()
{
  std::vector<NamedStats<T>> out;
  for (auto & [name, block] : blocks_) {
    std::visit(
      [&](auto & b) {
        for (std::size_t r = 0; r < b.bn.size(); ++r) {
          const std::string p = name + ".bn" + std::to_string(r);
          out.push_back({p + ".running_mean", &b.bn[r].stats.mean});
          out.push_back({p + ".running_var", &b.bn[r].stats.var});
        }
      },
      block);
  }
  return out;
}

template <typename T>
std::int64_t Model<T>::parameter_count() const
{
  std::int64_t total = 0;
  for (auto & np : const_cast<Model *>(this)->named_parameters()) total += np.param->numel();
  return total;
}

template <typename T>
std::vector<std::string> Model<T>::block_positions() const
{
  std::vector<std::string> out;
  for (const auto & entry : blocks_) out.push_back(entry.first);
  return out;
}

template <typename T>
Block<T> & Model<T>::block(std::string_view position)
{
  for (auto & entry : blocks_) {
    if (entry.first == position) return entry.second;
  }
  throw ContractError("unknown block position '" + std::string(position) + "'");
}

template <typename T>
const Block<T> & Model<T>::block(std::string_view position) const
{
  return const_cast<Model *>(this)->block(position);
}

template <typename T>
int Model<T>::lstm_cell_count() const
{
  return static_cast<int>(std::count_if(blocks_.begin(), blocks_.end(), [](const auto & e) {
    return std::holds_alternative<ConvLSTMCell<T>>(e.second);
  }));
}

template <typename T>
int Model<T>::rcl_count() const
{
  return static_cast<int>(std::count_if(blocks_.begin(), blocks_.end(), [](const auto & e) {
    return std::holds_alternative<RecurrentConvLayer<T>>(e.second);
  }));
}

template <typename T>
Tensor<T> first_layer_activation_sum(Model<T> & model, const Tensor<T> & image)
{
  if (!model.config().is_feedback()) {
    throw ContractError("first_layer_activation_sum: only defined for feedback variants");
  }
  NoGradGuard no_grad;
  model.reset_state();
  auto out = model.forward(image, false);
  model.reset_state();
  return *out.first_layer_sum;
}

template class Model<float>;
template class Model<double>;
template Tensor<float> first_layer_activation_sum(Model<float> &, const Tensor<float> &);
template Tensor<double> first_layer_activation_sum(Model<double> &, const Tensor<double> &);

}  // namespace fbunet
