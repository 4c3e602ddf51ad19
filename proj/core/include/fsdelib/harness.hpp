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

// Training, decoding and evaluation drivers behind the command line tool.

#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fsdelib/config.hpp"
#include "fsdelib/corpus.hpp"
#include "fsdelib/decoder.hpp"
#include "fsdelib/metrics.hpp"
#include "fsdelib/model.hpp"
#include "fsdelib/text.hpp"

namespace fsd {

struct Utterance {
  UtteranceRecord record;
  Tensor features;
};

struct Dataset {
  Vocabulary vocab;
  std::vector<Utterance> utterances;
};

// Loads the manifest, its vocab.json and every feature file.
Dataset load_dataset(const std::string& manifest_path);
Dataset dataset_from_corpus(const SyntheticCorpus& corpus);

struct LossTerms {
  Tensor total;
  Tensor slow;
  Tensor fast;
};

// Joint loss of one utterance. `partials` holds one conditioning hypothesis
// per slow segment and is required when the model has a deliberation branch.
LossTerms utterance_loss(const FastSlowTransducer& model, const Utterance& utt,
                         const TrainConfig& cfg,
                         const std::vector<std::vector<int>>* partials = nullptr);

// Beam-1 decode of the utterance without gradients; returns the masked
// partial hypotheses seen at each slow-segment boundary.
std::vector<std::vector<int>> training_partials(const FastSlowTransducer& model,
                                                const Tensor& features, double mask_p,
                                                std::mt19937_64& rng);

// Mean joint loss over `batch` (indices into data), drawing partials and
// masks from `rng` as a training step would.
double batch_loss(const FastSlowTransducer& model, const Dataset& data,
                  const std::vector<std::size_t>& batch, const TrainConfig& cfg,
                  std::mt19937_64& rng);

// Deep copy through the checkpoint representation.
FastSlowTransducer clone_model(const FastSlowTransducer& model);

// Base model plus a deliberation branch whose merge output paths are zero.
FastSlowTransducer deliberation_from_base(const FastSlowTransducer& base, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
};

struct TrainResult {
  FastSlowTransducer model;
  std::vector<EpochRecord> epochs;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Stage 1: fast-slow model without deliberation.
TrainResult train_base(const RunConfig& cfg, const Dataset& data, const EpochCallback& on_epoch = {});
// Stage 2: joint training with the deliberation branch, starting from `base`
// (which must already have a deliberation branch).
TrainResult train_delib(const RunConfig& cfg, FastSlowTransducer model, const Dataset& data,
                        const EpochCallback& on_epoch = {});

// Stage-2 schedule applied to a base model without deliberation; the control
// for measuring what stage 2 gains from deliberation itself.
TrainResult continue_base(const RunConfig& cfg, FastSlowTransducer model, const Dataset& data,
                          const EpochCallback& on_epoch = {});

struct HypothesisRecord {
  std::string id;
  std::vector<int> tokens;
  std::string text;
  std::vector<std::size_t> emit_frames;
  double log_prob = 0.0;
  std::optional<std::string> error;
};

// Decodes every utterance; per-utterance failures are recorded, not thrown.
std::vector<HypothesisRecord> decode_dataset(const FastSlowTransducer& model, const Dataset& data,
                                             const BeamConfig& beam,
                                             std::vector<std::string>* trace_lines = nullptr);

void save_hypotheses(const std::string& path, const std::vector<HypothesisRecord>& hyps);
std::vector<HypothesisRecord> load_hypotheses(const std::string& path);

struct EvalReport {
  std::size_t utterances = 0;
  std::size_t failed = 0;
  ErrorCounts counts;
  DelayReport delays;
  SlicedReport sliced;
};

// Throws DataError listing ids missing on either side.
EvalReport evaluate(const Dataset& refs, const std::vector<HypothesisRecord>& hyps,
                    const MetricsConfig& metrics);

std::string format_eval_text(const EvalReport& r);
std::string eval_report_json(const EvalReport& r, const RunConfig& cfg);
std::string train_report_json(const std::string& command, const TrainResult& r,
                              const RunConfig& cfg, const std::optional<EvalReport>& eval);

}  // namespace fsd
