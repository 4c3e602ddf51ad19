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

#include "fsdelib/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fsdelib/errors.hpp"
#include "binary_io.hpp"

namespace fsd {

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::ByteWriter w;
  w.raw("FSDT", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  w.raw(ckpt.metadata.data(), ckpt.metadata.size());
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f64(v);
  }
  w.save(path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  io::ByteReader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "FSDT", 4) != 0) {
    throw FormatError(path.string() + ": bad checkpoint magic at offset 0");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.metadata.resize(r.u32());
  r.raw(ckpt.metadata.data(), ckpt.metadata.size());
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.u32(), '\0');
    r.raw(name.data(), name.size());
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = r.f64();
    ckpt.tensors.emplace_back(std::move(name),
                              Tensor(std::move(shape), std::move(data)));
  }
  if (!r.at_end()) {
    throw FormatError(path.string() + ": trailing bytes after offset " +
                      std::to_string(r.offset()));
  }
  return ckpt;
}

}  // namespace fsd
