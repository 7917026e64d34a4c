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


#include <gtest/gtest.h>

#include <set>

#include "fbunet/errors.hpp"
#include "fbunet/model.hpp"
#include "fbunet/rng.hpp"

namespace fbunet
{
namespace
{

// Hand-counted trainable sizes for 4 classes and widths 8,16,32,64,128.
std::int64_t conv_size(std::int64_t in, std::int64_t out) { return 9 * in * out + out; }
std::int64_t lstm_size(std::int64_t in, std::int64_t hidden) { return conv_size(in + hidden, 4 * hidden); }

Tensor<double> random_image(int n, int size, std::uint64_t seed)
{
  Rng rng = derive_rng(seed, 0);
  Vec<double> v(std::int64_t{n} * size * size);
  for (auto & x : v) x = uniform01(rng);
  return Tensor<double>(Shape{n, 1, size, size}, std::move(v));
}

ModelConfig tiny(Variant v)
{
  ModelConfig c = ModelConfig::for_variant(v);
  c.num_classes = 3;
  c.filters = {2, 3, 4, 5, 6};
  return c;
}

const Variant kVariants[] = {
  Variant::unet, Variant::runet, Variant::feedback_plain, Variant::feedback_rcl, Variant::feedback_convlstm};

TEST(Model, ParameterCountFullConvLstm)
{
  const Model<float> model(ModelConfig{}, 0);
  EXPECT_EQ(model.parameter_count(), 2350172);
  EXPECT_EQ(model.lstm_cell_count(), 6);
}

TEST(Model, ParameterCountPlainUnet)
{
  ModelConfig config = ModelConfig::for_variant(Variant::unet);
  const Model<float> model(config, 0);
  EXPECT_EQ(model.parameter_count(), 487428);
  EXPECT_EQ(model.lstm_cell_count(), 0);
  EXPECT_EQ(model.rcl_count(), 0);
}

TEST(Model, LocationArmsDifferOnlyBySubstitutedBlocks)
{
  const ModelConfig plain = ModelConfig::for_variant(Variant::feedback_plain);
  const std::int64_t base = Model<float>(plain, 0).parameter_count();
  struct Arm
  {
    LocationSet locations;
    std::int64_t delta;
  };
  const std::int64_t a = lstm_size(4, 8) - conv_size(4, 8);
  const std::int64_t b = lstm_size(8, 8) - conv_size(8, 8);
  const std::int64_t c = lstm_size(64, 128) - conv_size(64, 128) + lstm_size(128, 128) - conv_size(128, 128);
  const std::int64_t d = lstm_size(16, 8) - conv_size(16, 8);
  const std::int64_t e = lstm_size(8, 8) - conv_size(8, 8);
  const Arm arms[] = {
    {{Location::a}, a}, {{Location::b}, b}, {{Location::c}, c}, {{Location::d}, d}, {{Location::e}, e},
    {{Location::a, Location::b, Location::d, Location::e}, a + b + d + e},
    {kAllLocations, a + b + c + d + e}};
  for (const auto & arm : arms) {
    ModelConfig config = ModelConfig::for_variant(Variant::feedback_convlstm);
    config.lstm_locations = arm.locations;
    const Model<float> model(config, 0);
    EXPECT_EQ(model.parameter_count() - base, arm.delta) << to_string(arm.locations);
    EXPECT_EQ(model.lstm_cell_count(), static_cast<int>(positions_for(arm.locations).size()));
  }
}

TEST(Model, BlockKindsPerVariant)
{
  EXPECT_EQ(Model<float>(tiny(Variant::runet), 0).rcl_count(), 18);
  EXPECT_EQ(Model<float>(tiny(Variant::feedback_rcl), 0).rcl_count(), 6);
  EXPECT_EQ(Model<float>(tiny(Variant::feedback_rcl), 0).lstm_cell_count(), 0);
  EXPECT_EQ(Model<float>(tiny(Variant::feedback_plain), 0).rcl_count(), 0);
  const Model<float> m(tiny(Variant::unet), 0);
  const auto positions = m.block_positions();
  ASSERT_EQ(positions.size(), 18U);
  EXPECT_EQ(positions.front(), "enc0.0");
  EXPECT_EQ(positions[8], "mid.0");
  EXPECT_EQ(positions.back(), "dec0.1");
}

TEST(Model, EachBlockHasOneConvAndOneNormPerRound)
{
  for (Variant v : {Variant::feedback_plain, Variant::feedback_convlstm}) {
    Model<float> model(tiny(v), 0);
    std::set<std::string> names;
    for (const auto & np : model.named_parameters()) {
      EXPECT_TRUE(names.insert(np.name).second) << np.name;
    }
    for (const auto & pos : model.block_positions()) {
      int convs = 0;
      int gammas = 0;
      for (const auto & name : names) {
        if (name.rfind(pos + ".", 0) != 0) continue;
        convs += name.ends_with(".weight");
        gammas += name.ends_with(".gamma");
      }
      EXPECT_EQ(convs, 1) << pos;
      EXPECT_EQ(gammas, 2) << pos;
      EXPECT_TRUE(names.count(pos + ".bn0.beta") && names.count(pos + ".bn1.beta")) << pos;
    }
  }
}

TEST(Model, ForwardShapesAndProbabilities)
{
  for (Variant v : kVariants) {
    Model<double> model(tiny(v), 1);
    const auto out = model.forward(random_image(2, 32, 1), true);
    EXPECT_EQ(out.probs_round1.shape(), (Shape{2, 3, 32, 32})) << to_string(v);
    EXPECT_EQ(out.probs_round2.has_value(), model.config().is_feedback());
    EXPECT_EQ(out.first_layer_sum.has_value(), model.config().is_feedback());
    const auto & p = out.final_probs();
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 32; i += 7)
        for (int j = 0; j < 32; j += 5) {
          EXPECT_NEAR(p(n, 0, i, j) + p(n, 1, i, j) + p(n, 2, i, j), 1.0, 1e-12);
        }
    if (out.first_layer_sum) {
      EXPECT_EQ(out.first_layer_sum->shape(), (Shape{2, 1, 32, 32}));
    }
  }
}

TEST(Model, ForwardContract)
{
  Model<double> model(tiny(Variant::feedback_convlstm), 1);
  EXPECT_THROW(model.forward(random_image(1, 24, 1), false), ShapeError);
  EXPECT_THROW(model.forward(Tensor<double>(Shape{1, 2, 16, 16}), false), ShapeError);
  model.forward(random_image(1, 16, 1), false);
  EXPECT_TRUE(model.has_state());
  EXPECT_THROW(model.forward(random_image(1, 16, 1), false), ContractError);
  model.reset_state();
  EXPECT_FALSE(model.has_state());
  EXPECT_NO_THROW(model.forward(random_image(1, 16, 1), false));
}

TEST(Model, RoundInputs)
{
  ModelConfig config = tiny(Variant::feedback_plain);
  const auto image = random_image(1, 16, 2);
  Model<double> probs_only(config, 0);
  const auto r1 = probs_only.round_input(image, nullptr);
  ASSERT_EQ(r1.c(), 3);
  EXPECT_EQ(r1(0, 2, 5, 7), image(0, 0, 5, 7));
  const Tensor<double> probs(Shape{1, 3, 16, 16}, 0.25);
  EXPECT_EQ(probs_only.round_input(image, &probs).values()[0], 0.25);

  config.feedback_input = FeedbackInput::concat_image;
  Model<double> concat(config, 0);
  const auto c1 = concat.round_input(image, nullptr);
  ASSERT_EQ(c1.c(), 4);
  EXPECT_EQ(c1(0, 0, 3, 3), image(0, 0, 3, 3));
  EXPECT_DOUBLE_EQ(c1(0, 2, 3, 3), 1.0 / 3.0);
  EXPECT_EQ(concat.round_input(image, &probs)(0, 3, 1, 1), 0.25);
  EXPECT_NO_THROW(concat.forward(image, false));
}

TEST(Model, SeedDeterminesInitialization)
{
  Model<float> a(tiny(Variant::feedback_convlstm), 5);
  Model<float> b(tiny(Variant::feedback_convlstm), 5);
  Model<float> c(tiny(Variant::feedback_convlstm), 6);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  const auto pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->values().matrix(), pb[i]->values().matrix());
    differs = differs || pa[i]->values().matrix() != pc[i]->values().matrix();
  }
  EXPECT_TRUE(differs);
}

TEST(Model, CloneIsIndependentAndEquivalent)
{
  Model<double> model(tiny(Variant::feedback_convlstm), 3);
  Model<double> copy = model.clone();
  const auto image = random_image(2, 16, 3);
  const auto y1 = model.forward(image, false).final_probs();
  const auto y2 = copy.forward(image, false).final_probs();
  EXPECT_EQ(y1.values().matrix(), y2.values().matrix());
  copy.parameters().front()->values().setZero();
  EXPECT_GT(model.parameters().front()->values().abs().maxCoeff(), 0.0);
}

TEST(Model, FirstLayerActivationSum)
{
  Model<double> model(tiny(Variant::feedback_convlstm), 3);
  const auto image = random_image(1, 16, 4);
  const auto sum = first_layer_activation_sum(model, image);
  EXPECT_EQ(sum.shape(), (Shape{1, 1, 16, 16}));
  EXPECT_GE(sum.values().minCoeff(), 0.0);
  EXPECT_FALSE(model.has_state());
  Model<double> plain(tiny(Variant::unet), 3);
  EXPECT_THROW(first_layer_activation_sum(plain, image), ContractError);
}

TEST(ModelConfig, SerializeRoundTrip)
{
  ModelConfig config = tiny(Variant::feedback_convlstm);
  config.lstm_locations = {Location::a, Location::d};
  config.lambda = 0.1;
  config.feedback_input = FeedbackInput::concat_image;
  const std::string text = serialize(config);
  EXPECT_EQ(parse_model_config(text), config);
  for (Variant v : kVariants) {
    EXPECT_EQ(parse_model_config(serialize(ModelConfig::for_variant(v))), ModelConfig::for_variant(v));
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
}

TEST(ModelConfig, Validation)
{
  EXPECT_THROW(parse_variant("resnet"), ConfigError);
  EXPECT_THROW(parse_locations("a,f"), ConfigError);
  EXPECT_THROW(parse_feedback_input("both"), ConfigError);
  ModelConfig empty = ModelConfig::for_variant(Variant::feedback_convlstm);
  empty.lstm_locations.clear();
  try {
    empty.validate();
    FAIL() << "empty location set accepted";
  } catch (const ConfigError & e) {
    EXPECT_EQ(e.field(), "lstm_locations");
  }
  ModelConfig bad = ModelConfig{};
  bad.num_classes = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_EQ(to_string(parse_locations("e,a,c")), "a,c,e");
  EXPECT_EQ(ModelConfig{}.lambda, 0.5);
}

}  // namespace
}  // namespace fbunet
