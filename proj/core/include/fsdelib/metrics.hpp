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

// Word error rate and emission-delay statistics.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace fsd {

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_words = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  double wer() const;
  ErrorCounts& operator+=(const ErrorCounts& o);
};

enum class EditOp { kMatch, kSubstitute, kInsert, kDelete };

struct EditStep {
  EditOp op;
  std::optional<std::size_t> ref;  // index into the reference
  std::optional<std::size_t> hyp;  // index into the hypothesis
};

// Unit-cost Levenshtein alignment. Ties prefer match/substitution, then
// deletion, then insertion.
std::vector<EditStep> align_sequences(const std::vector<std::string>& ref,
                                      const std::vector<std::string>& hyp);
ErrorCounts count_errors(const std::vector<std::string>& ref,
                         const std::vector<std::string>& hyp);

std::vector<std::string> split_words(const std::string& text);

// Corpus WER over whitespace-separated words; counts are summed over
// utterances. Throws DataError on an empty reference corpus or size mismatch.
ErrorCounts wer(const std::vector<std::string>& refs, const std::vector<std::string>& hyps);

// Nearest-rank percentile: the ceil(q/100 * n)-th smallest value (1-based).
double percentile(std::vector<double> values, double q);

struct DelayReport {
  std::vector<double> delays_ms;
  double avg = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
  bool empty() const { return delays_ms.empty(); }
  static DelayReport from_delays(std::vector<double> delays_ms);
};

// Delays of reference tokens that the hypothesis reproduces, matched by a
// token-level alignment: emit_frame * frame_ms - (a_u + 1) * frame_ms.
std::vector<double> token_delays(const std::vector<int>& ref_tokens,
                                 const std::vector<std::size_t>& ref_frames,
                                 const std::vector<int>& hyp_tokens,
                                 const std::vector<std::size_t>& emit_frames,
                                 double frame_ms = 40.0);

struct UtteranceResult {
  std::string id;
  std::string ref_text;
  std::string hyp_text;
  double duration_s = 0.0;
};

struct SlicedReport {
  double threshold_s = 3.0;
  std::size_t short_count = 0;
  std::size_t long_count = 0;
  ErrorCounts short_errors;
  ErrorCounts long_errors;
};

// Utterances with duration < threshold go to the short slice.
SlicedReport sliced_report(const std::vector<UtteranceResult>& results, double threshold_s = 3.0);

}  // namespace fsd
