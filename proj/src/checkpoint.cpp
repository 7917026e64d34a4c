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

#include "fbunet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "fbunet/errors.hpp"

namespace fbunet
{
namespace
{

class Writer
{
public:
  void bytes(const void * data, std::size_t n)
  {
    const auto * p = static_cast<const std::uint8_t *>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u32(std::uint32_t v)
  {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v)
  {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string & s)
  {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

private:
  std::vector<std::uint8_t> out_;
};

class Reader
{
public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n, const char * what) const
  {
    if (in_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint: truncated ") + what, pos_);
    }
  }
  std::uint32_t u32(const char * what)
  {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char * what)
  {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const char * what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char * what)
  {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char *>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointTensor & Checkpoint::tensor(const std::string & name) const
{
  for (const auto & t : tensors) {
    if (t.name == name) return t;
  }
  throw FormatError("checkpoint: no tensor named '" + name + "'", 0);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint & checkpoint)
{
  Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.str(serialize(checkpoint.config));
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto & t : checkpoint.tensors) {
    w.str(t.name);
    for (int d : {t.shape.n, t.shape.c, t.shape.h, t.shape.w}) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.f32(v);
  }
  w.u32(static_cast<std::uint32_t>(checkpoint.counters.size()));
  for (const auto & c : checkpoint.counters) {
    w.str(c.name);
    w.u64(c.value);
  }
  w.str(checkpoint.rng_state);
  w.u64(checkpoint.epoch);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
  Reader r(bytes);
  r.need(sizeof(kCheckpointMagic), "magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("checkpoint: bad magic", 0);
  }
  Reader body(bytes.subspan(sizeof(kCheckpointMagic)));
  const std::size_t base = sizeof(kCheckpointMagic);
  auto fail = [&](const std::string & msg) { throw FormatError("checkpoint: " + msg, base + body.pos()); };

  const std::uint32_t version = body.u32("version");
  if (version != kCheckpointVersion) fail("unsupported version " + std::to_string(version));
  Checkpoint ck;
  const std::size_t config_pos = base + body.pos();
  const std::string config_text = body.str("config");
  try {
    ck.config = parse_model_config(config_text);
  } catch (const ConfigError & e) {
    throw FormatError(std::string("checkpoint: bad config: ") + e.what(), config_pos);
  }
  const std::uint32_t n_tensors = body.u32("tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    CheckpointTensor t;
    t.name = body.str("tensor name");
    std::uint32_t dims[4];
    for (auto & d : dims) d = body.u32("tensor shape");
    for (auto d : dims) {
      if (d > (1U << 30)) fail("implausible dimension in '" + t.name + "'");
    }
    t.shape = Shape{int(dims[0]), int(dims[1]), int(dims[2]), int(dims[3])};
    const auto numel = static_cast<std::size_t>(t.shape.numel());
    body.need(numel * 4, "tensor values");
    t.values.resize(numel);
    for (auto & v : t.values) v = body.f32("tensor values");
    ck.tensors.push_back(std::move(t));
  }
  const std::uint32_t n_counters = body.u32("counter count");
  for (std::uint32_t i = 0; i < n_counters; ++i) {
    CheckpointCounter c;
    c.name = body.str("counter name");
    c.value = body.u64("counter value");
    ck.counters.push_back(std::move(c));
  }
  ck.rng_state = body.str("rng state");
  ck.epoch = body.u64("epoch");
  if (!body.done()) fail("trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint & checkpoint, const std::filesystem::path & path)
{
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_checkpoint(checkpoint);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed to write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  const std::vector<std::uint8_t> bytes(
    (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError & e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

template <typename T>
Checkpoint capture(Model<T> & model, const std::string & rng_state, std::uint64_t epoch)
{
  Checkpoint ck;
  ck.config = model.config();
  ck.rng_state = rng_state;
  ck.epoch = epoch;
  auto to_floats = [](const auto & values) {
    std::vector<float> out(static_cast<std::size_t>(values.size()));
    for (Eigen::Index i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i]);
    return out;
  };
  const auto named = model.named_parameters();
  for (const auto & np : named) {
    ck.tensors.push_back({np.name, np.param->shape(), to_floats(np.param->values())});
  }
  for (const auto & ns : model.named_running_stats()) {
    const int c = static_cast<int>(ns.values->size());
    ck.tensors.push_back({ns.name, Shape{c, 1, 1, 1}, to_floats(*ns.values)});
  }
  for (const auto & np : named) {
    ck.tensors.push_back({np.name + ".adam_m", np.param->shape(), to_floats(np.param->m)});
    ck.tensors.push_back({np.name + ".adam_v", np.param->shape(), to_floats(np.param->v)});
  }
  for (const auto & np : named) {
    ck.counters.push_back({np.name + ".step", static_cast<std::uint64_t>(np.param->step)});
  }
  return ck;
}

template <typename T>
void restore(const Checkpoint & checkpoint, Model<T> & model)
{
  if (!(checkpoint.config == model.config())) {
    throw ConfigError(
      "config", "checkpoint was written for '" + serialize(checkpoint.config) + "' but model is '" +
                  serialize(model.config()) + "'");
  }
  std::unordered_map<std::string, const CheckpointTensor *> by_name;
  for (const auto & t : checkpoint.tensors) by_name[t.name] = &t;
  std::unordered_map<std::string, std::uint64_t> counters;
  for (const auto & c : checkpoint.counters) counters[c.name] = c.value;

  auto fetch = [&](const std::string & name, std::int64_t numel) -> const CheckpointTensor & {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing tensor '" + name + "'", 0);
    if (it->second->shape.numel() != numel) {
      throw ShapeError("checkpoint: tensor '" + name + "' has " + it->second->shape.str());
    }
    return *it->second;
  };
  auto assign = [](Vec<T> & dst, const CheckpointTensor & src) {
    dst = Eigen::Map<const Eigen::ArrayXf>(src.values.data(), static_cast<Eigen::Index>(src.values.size()))
            .template cast<T>();
  };
  for (const auto & np : model.named_parameters()) {
    const auto & t = fetch(np.name, np.param->numel());
    if (!(t.shape == np.param->shape())) {
      throw ShapeError("checkpoint: tensor '" + np.name + "' has " + t.shape.str());
    }
    assign(np.param->values(), t);
    assign(np.param->m, fetch(np.name + ".adam_m", np.param->numel()));
    assign(np.param->v, fetch(np.name + ".adam_v", np.param->numel()));
    const auto step = counters.find(np.name + ".step");
    np.param->step = step == counters.end() ? 0 : static_cast<std::int64_t>(step->second);
  }
  for (const auto & ns : model.named_running_stats()) {
    assign(*ns.values, fetch(ns.name, ns.values->size()));
  }
}

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint & checkpoint)
{
  Model<T> model(checkpoint.config, 0);
  restore(checkpoint, model);
  return model;
}

template Checkpoint capture(Model<float> &, const std::string &, std::uint64_t);
template Checkpoint capture(Model<double> &, const std::string &, std::uint64_t);
template void restore(const Checkpoint &, Model<float> &);
template void restore(const Checkpoint &, Model<double> &);
template Model<float> model_from_checkpoint(const Checkpoint &);
template Model<double> model_from_checkpoint(const Checkpoint &);

}  // namespace fbunet
