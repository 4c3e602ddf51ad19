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

// Run configuration for the command line harness. Every field has a dotted
// key (model.*, beam.*, train.*, paths.*, data.*, metrics.*).

#include <cstdint>
#include <optional>
#include <string>

#include "fsdelib/corpus.hpp"
#include "fsdelib/decoder.hpp"
#include "fsdelib/keyvalue.hpp"
#include "fsdelib/model.hpp"

namespace fsd {

enum class FreezeMode { kNone, kBase };

struct TrainConfig {
  double lr = 3e-3;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double lambda = 0.5;
  double mask_p = 0.1;
  std::uint64_t seed = 1;
  bool alignment_restriction = true;
  std::size_t ar_left = 1;
  std::size_t ar_right = 4;
  // Stage-2 schedule; unset means lr / 100 and epochs / 2.
  std::optional<double> delib_lr;
  std::optional<std::size_t> delib_epochs;
  FreezeMode freeze = FreezeMode::kNone;
  double grad_clip = 5.0;  // global L2 norm, 0 disables

  double stage2_lr() const { return delib_lr ? *delib_lr : lr / 100.0; }
  std::size_t stage2_epochs() const {
    return delib_epochs ? *delib_epochs : std::max<std::size_t>(1, epochs / 2);
  }
};

struct PathsConfig {
  std::string manifest;
  std::string checkpoint_in;
  std::string checkpoint_out;
  std::string report_out;
  std::string hyps_out;
  std::string trace_out;
  std::string output_dir;  // gen-data target
};

struct MetricsConfig {
  double frame_ms = 40.0;
  double slice_threshold_s = 3.0;
};

struct RunConfig {
  ModelConfig model;
  BeamConfig beam;
  TrainConfig train;
  PathsConfig paths;
  SyntheticConfig data;
  MetricsConfig metrics;

  // Unknown keys are rejected. Beam segment sizes follow the model unless
  // given explicitly.
  static RunConfig from_document(const KeyValueDocument& doc);
  KeyValueDocument to_document() const;
  void validate() const;
};

std::string to_string(FreezeMode m);

// Reads a config file (may be empty path) and applies `key=value` overrides.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace fsd
