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

// Feature matrices on disk: little-endian "FSFT", u32 version (1), u32 T,
// u32 F, then T*F float64 values row-major.

#include <cstdint>
#include <filesystem>

#include "fsdelib/tensor.hpp"

namespace fsd {

inline constexpr std::uint32_t kFeatureFileVersion = 1;

void write_feature_file(const std::filesystem::path& path, const Tensor& features);
Tensor read_feature_file(const std::filesystem::path& path);

}  // namespace fsd
