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

#include "fsdelib/features.hpp"

#include <cstring>

#include "binary_io.hpp"
#include "fsdelib/errors.hpp"

namespace fsd {

void write_feature_file(const std::filesystem::path& path, const Tensor& features) {
  if (features.rank() != 2) {
    throw DimensionError("feature matrix must be rank 2, got " +
                         shape_string(features.shape()));
  }
  if (features.rows() == 0) throw DataError("refusing to write an empty utterance");
  io::ByteWriter w;
  w.raw("FSFT", 4);
  w.u32(kFeatureFileVersion);
  w.u32(static_cast<std::uint32_t>(features.rows()));
  w.u32(static_cast<std::uint32_t>(features.cols()));
  for (double v : features.data()) w.f64(v);
  w.save(path);
}

Tensor read_feature_file(const std::filesystem::path& path) {
  io::ByteReader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "FSFT", 4) != 0) {
    throw FormatError(path.string() + ": bad magic at offset 0, expected \"FSFT\"");
  }
  const auto version = r.u32();
  if (version != kFeatureFileVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version) +
                      " at offset 4");
  }
  const std::uint32_t T = r.u32();
  const std::uint32_t F = r.u32();
  if (T == 0) throw FormatError(path.string() + ": zero-frame utterance at offset 8");
  if (F == 0) throw FormatError(path.string() + ": zero feature width at offset 12");
  const std::size_t expected = 16 + std::size_t{T} * F * sizeof(double);
  if (r.size() != expected) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected) +
                      " bytes for " + std::to_string(T) + "x" + std::to_string(F) +
                      " features, file has " + std::to_string(r.size()));
  }
  std::vector<double> data(std::size_t{T} * F);
  for (auto& v : data) v = r.f64();
  return Tensor({T, F}, std::move(data));
}

}  // namespace fsd
