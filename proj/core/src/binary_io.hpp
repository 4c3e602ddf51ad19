// Copyright 2026 The fsdelib Authors. All Rights Reserved.
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

#pragma once

// Little-endian byte buffers shared by the checkpoint and feature formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "fsdelib/errors.hpp"

namespace fsd::io {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    v = to_little(v);
    raw(&v, sizeof v);
  }
  void f64(double v) {
    auto bits = to_little(std::bit_cast<std::uint64_t>(v));
    raw(&bits, sizeof bits);
  }
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw DataError("write failed for " + path.string());
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    buf_.assign(std::istreambuf_iterator<char>(in), {});
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return to_little(v);
  }
  double f64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return std::bit_cast<double>(to_little(v));
  }
  std::size_t offset() const { return pos_; }
  std::size_t size() const { return buf_.size(); }
  bool at_end() const { return pos_ == buf_.size(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) {
      throw FormatError(path_.string() + ": truncated at offset " +
                        std::to_string(pos_) + ", needed " + std::to_string(n) +
                        " more bytes, file has " + std::to_string(buf_.size()));
    }
  }

  std::filesystem::path path_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace fsd::io
