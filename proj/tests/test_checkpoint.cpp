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

#include <filesystem>
#include <fstream>

#include "fbunet/checkpoint.hpp"
#include "fbunet/errors.hpp"
#include "fbunet/rng.hpp"

namespace fbunet
{
namespace
{

namespace fs = std::filesystem;

ModelConfig small_config()
{
  ModelConfig c = ModelConfig::for_variant(Variant::feedback_convlstm);
  c.num_classes = 3;
  c.filters = {2, 3, 4, 5, 6};
  return c;
}

Tensor<float> image(std::uint64_t seed)
{
  Rng rng = derive_rng(seed, 1);
  Vec<float> v(2 * 16 * 16);
  for (auto & x : v) x = static_cast<float>(uniform01(rng));
  return Tensor<float>(Shape{2, 1, 16, 16}, std::move(v));
}

std::vector<std::uint8_t> read_bytes(const fs::path & p)
{
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical)
{
  const auto dir = fs::temp_directory_path() / "fbunet_test_ckpt";
  fs::remove_all(dir);
  Model<float> model(small_config(), 4);
  model.forward(image(1), true);
  model.reset_state();
  for (auto * p : model.parameters()) {
    p->step = 3;
    p->m.setConstant(0.25F);
  }
  const Checkpoint ck = capture(model, "rng-state", 12);
  save_checkpoint(ck, dir / "a.ckpt");
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back, ck);
  EXPECT_EQ(back.epoch, 12U);
  save_checkpoint(back, dir / "b.ckpt");
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
  EXPECT_EQ(std::string(ck.tensor("enc0.0.conv.weight").name), "enc0.0.conv.weight");
}

TEST(Checkpoint, ReloadedModelIsBitIdentical)
{
  Model<float> model(small_config(), 4);
  for (int i = 0; i < 3; ++i) {
    model.forward(image(static_cast<std::uint64_t>(i)), true);
    model.reset_state();
  }
  Model<float> copy = model_from_checkpoint<float>(decode_checkpoint(encode_checkpoint(capture(model))));
  const auto x = image(9);
  const auto a = model.forward(x, false).final_probs();
  const auto b = copy.forward(x, false).final_probs();
  EXPECT_EQ(a.values().matrix(), b.values().matrix());
  const auto pa = model.parameters();
  const auto pb = copy.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->step, pb[i]->step);
}

TEST(Checkpoint, ConfigMismatch)
{
  Model<float> model(small_config(), 4);
  const auto ck = capture(model);
  ModelConfig other = small_config();
  other.lstm_locations = {Location::a};
  Model<float> target(other, 4);
  try {
    restore(ck, target);
    FAIL();
  } catch (const ConfigError & e) {
    EXPECT_EQ(e.field(), "config");
  }
}

TEST(Checkpoint, CorruptBytes)
{
  Model<float> model(small_config(), 4);
  auto bytes = encode_checkpoint(capture(model));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    decode_checkpoint(bad_magic);
    FAIL();
  } catch (const FormatError & e) {
    EXPECT_EQ(e.offset(), 0U);
  }
  auto bad_version = bytes;
  bad_version[8] = 99;
  EXPECT_THROW(decode_checkpoint(bad_version), FormatError);
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 5);
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  bytes.push_back(0);
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/fbunet.ckpt"), std::exception);
}

}  // namespace
}  // namespace fbunet
