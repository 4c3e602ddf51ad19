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

// Frame-synchronous transducer beam search and the parallel fast/slow beam
// search with streaming deliberation.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fsdelib/model.hpp"
#include "fsdelib/tensor.hpp"

namespace fsd {

struct SearchState {
  virtual ~SearchState() = default;
};
using StateHandle = std::shared_ptr<const SearchState>;

// The scoring context shared by every beam search of one decoding session. A
// hypothesis produced by one search can be extended by any other.
class SearchSpace {
 public:
  virtual ~SearchSpace() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual StateHandle initial_state() const = 0;
  virtual StateHandle extend(const StateHandle& state, int token) const = 0;
  // Log-probabilities over the vocabulary for encoder row `row` of `enc`,
  // which sits at utterance frame `frame`.
  virtual std::vector<double> log_probs(const Tensor& enc, std::size_t row,
                                        std::size_t frame,
                                        const StateHandle& state) const = 0;
  virtual bool emittable(int token) const { return token != 0; }
};

// Predictor state plus the predictor output row for the last token.
class TransducerSearchSpace final : public SearchSpace {
 public:
  explicit TransducerSearchSpace(const FastSlowTransducer& model) : model_(&model) {}

  struct State final : SearchState {
    LstmState lstm;
    Tensor output;  // [1 x D]
  };

  std::size_t vocab_size() const override;
  StateHandle initial_state() const override;
  StateHandle extend(const StateHandle& state, int token) const override;
  std::vector<double> log_probs(const Tensor& enc, std::size_t row, std::size_t frame,
                                const StateHandle& state) const override;
  bool emittable(int token) const override { return token > kBosId; }

 private:
  const FastSlowTransducer* model_;
};

struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  StateHandle state;
  std::vector<std::size_t> emit_times;  // exclusive end frame of the writing search call
};

using Beam = std::vector<Hypothesis>;

Beam initial_beam(const SearchSpace& space);

// Score descending, then fewer tokens, then lexicographically smaller tokens.
bool hypothesis_before(const Hypothesis& a, const Hypothesis& b);

struct BeamConfig {
  std::size_t fast_segment = 4;   // frames per fast chunk
  std::size_t slow_segment = 20;  // frames per slow segment
  std::size_t fast_beam = 10;
  std::size_t slow_beam = 10;
  std::size_t max_symbols_per_frame = 4;

  void validate() const;
  // Segment sizes taken from the model.
  static BeamConfig for_model(const ModelConfig& cfg, std::size_t beam = 10);
};

// Searches the rows of `enc`, the first at utterance frame `start_frame`.
// Tokens written here are stamped start_frame + enc.rows().
Beam beam_search_segment(const Tensor& enc, std::size_t start_frame, const Beam& beam,
                         std::size_t beam_size, const SearchSpace& space,
                         std::size_t max_symbols_per_frame = 4);

const Hypothesis& best_hypothesis(const Beam& beam);
std::vector<int> get_best_hypo(const Beam& beam);
// Highest log_prob / max(1, |tokens|).
const Hypothesis& finalize(const Beam& beam);

struct TraceRecord {
  std::string branch;  // "fast" or "slow"
  std::size_t frame_begin = 0;
  std::size_t frame_end = 0;
  bool deliberation = false;
  std::optional<std::vector<int>> y_p;
  std::vector<std::pair<std::vector<int>, double>> beam;
};

std::string to_json_line(const TraceRecord& r);

struct DecodeStats {
  std::size_t fast_chunks = 0;
  std::size_t fast_encoder_calls = 0;
  std::size_t slow_encoder_calls = 0;
  std::size_t deliberation_calls = 0;
  std::size_t fast_search_calls = 0;
  std::size_t slow_search_calls = 0;
};

struct DecodeResult {
  std::vector<int> tokens;
  std::vector<std::size_t> emit_frames;
  double log_prob = 0.0;
  Beam final_beam;
  // Fast-branch 1-best at each slow-segment boundary, as fed to deliberation.
  std::vector<std::vector<int>> partials;
  std::vector<TraceRecord> trace;
  DecodeStats stats;
};

// Streams the utterance chunk by chunk. At each slow-segment boundary the fast
// beam's 1-best y_p (taken after the boundary chunk's fast search) conditions
// the slow beam search, whose beam then replaces the fast beam. Tokens of the
// slow result that agree with y_p keep y_p's emission frames.
DecodeResult parallel_beam_search(const Tensor& features, const FastSlowTransducer& model,
                                  const BeamConfig& cfg, bool record_trace = false);

// Fast branch only, over the same chunk schedule.
DecodeResult fast_beam_search(const Tensor& features, const FastSlowTransducer& model,
                              const BeamConfig& cfg);

}  // namespace fsd
