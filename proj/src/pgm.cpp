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

#include "fbunet/pgm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "fbunet/errors.hpp"

namespace fbunet
{
namespace
{

class HeaderReader
{
public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments()
  {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_number(const char * what)
  {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L) {
        throw FormatError(std::string("PGM ") + what + " too large", start);
      }
      ++pos_;
    }
    if (pos_ == start) {
      throw FormatError(std::string("PGM: expected ") + what, pos_);
    }
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes)
{
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("PGM: bad magic, expected P5", 0);
  }
  HeaderReader reader(bytes);
  reader.advance(2);
  const long width = reader.read_number("width");
  const long height = reader.read_number("height");
  const std::size_t maxval_pos = reader.pos();
  const long maxval = reader.read_number("maxval");
  if (maxval != 255) {
    throw FormatError("PGM: maxval must be 255, got " + std::to_string(maxval), maxval_pos);
  }
  if (width < 1 || height < 1) {
    throw FormatError("PGM: empty raster", maxval_pos);
  }
  if (reader.pos() >= bytes.size() || !std::isspace(bytes[reader.pos()])) {
    throw FormatError("PGM: missing whitespace after header", reader.pos());
  }
  reader.advance(1);
  const std::size_t payload = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - reader.pos() < payload) {
    throw FormatError(
      "PGM: truncated payload, expected " + std::to_string(payload) + " bytes", bytes.size());
  }
  GrayImage image(height, width);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos()), payload, image.data());
  return image;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage & image)
{
  const std::string header =
    "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.data(), image.data() + image.size());
  return out;
}

GrayImage load_pgm(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string(), 0);
  }
  const std::vector<std::uint8_t> bytes(
    (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const FormatError & e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

void save_pgm(const GrayImage & image, const std::filesystem::path & path)
{
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  const auto bytes = encode_pgm(image);
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error("failed to write " + path.string());
  }
}

}  // namespace fbunet
