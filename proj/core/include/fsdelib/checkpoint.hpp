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

// Binary parameter container.
//
// Layout (all integers little-endian):
//   "FSDT"             4 bytes magic
//   u32 version        currently 1
//   u32 meta_len       followed by meta_len bytes of UTF-8 metadata text
//   u32 count          number of tensor records
//   count records of:  u32 name_len, name bytes, u32 rank, rank x u32 dims,
//                      prod(dims) x f64 values

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fsdelib/tensor.hpp"

namespace fsd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace fsd
