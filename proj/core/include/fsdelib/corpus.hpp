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

// Utterance manifests (one JSON object per line) and the synthetic corpus
// generator used for desk-scale training.
//
// Manifest record:
//   {"id": "utt0001", "features": "feats/utt0001.fsft", "text": "ab c",
//    "transcript": [2, 3, 11, 4], "alignment": [0, 3, 6, 9],
//    "num_frames": 12}
// `features` is resolved relative to the manifest's directory. `alignment`
// and `num_frames` are optional.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fsdelib/tensor.hpp"
#include "fsdelib/text.hpp"

namespace fsd {

struct UtteranceRecord {
  std::string id;
  std::string features;
  std::string text;
  std::vector<int> transcript;
  std::optional<std::vector<std::size_t>> alignment;
  std::optional<std::size_t> num_frames;

  bool operator==(const UtteranceRecord&) const = default;
  // Throws DataError when the alignment is malformed for `frames` frames.
  void validate(std::optional<std::size_t> frames = std::nullopt) const;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<UtteranceRecord> records;

  std::filesystem::path feature_path(const UtteranceRecord& r) const;
  Tensor load_features(const UtteranceRecord& r) const;
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path,
                   const std::vector<UtteranceRecord>& records);

// Alphabet stored next to a corpus as {"alphabet": "..."}.
void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::filesystem::path& path);

struct SyntheticConfig {
  std::size_t n_utts = 200;
  std::string alphabet = "abcdefghi ";
  std::size_t min_tokens = 5;
  std::size_t max_tokens = 20;
  std::size_t frames_per_token = 3;
  std::size_t feature_dim = 16;
  double noise_std = 0.1;
  std::uint64_t seed = 7;
  // Templates are drawn from their own seed so that corpora generated with
  // different `seed`s share acoustics.
  std::uint64_t template_seed = 1234;
  std::string id_prefix = "utt";

  // Confusion variant. When both strings hold two characters, every
  // utterance opens with the one-letter word topic_markers[k] and uses
  // confusable_pair[k] in place of the other member; both members of the pair
  // share one acoustic template, so only the marker disambiguates them.
  std::string topic_markers;
  std::string confusable_pair;

  bool confusion_enabled() const {
    return topic_markers.size() == 2 && confusable_pair.size() == 2;
  }
};

struct SyntheticCorpus {
  Vocabulary vocab;
  std::vector<UtteranceRecord> records;
  std::vector<Tensor> features;
  Tensor templates;  // [alphabet x F]
};

// Each utterance: a random sequence without immediate repeats (a repeated
// symbol would be acoustically indistinguishable from a longer one), spaces
// only between letters; features are per-symbol templates repeated
// frames_per_token times plus Gaussian noise; alignment a_u = u *
// frames_per_token.
SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg);

// Writes manifest.jsonl, vocab.json and feats/*.fsft under `dir`.
void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus);

}  // namespace fsd
