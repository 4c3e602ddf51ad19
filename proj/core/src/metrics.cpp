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

#include "fsdelib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fsdelib/errors.hpp"

namespace fsd {

double ErrorCounts::wer() const {
  if (reference_words == 0) throw DataError("WER over an empty reference");
  return static_cast<double>(errors()) / static_cast<double>(reference_words);
}

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  reference_words += o.reference_words;
  return *this;
}

namespace {

template <typename T>
std::vector<EditStep> align_impl(const std::vector<T>& ref, const std::vector<T>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1),
                           at(i - 1, j) + 1, at(i, j - 1) + 1});
  std::vector<EditStep> steps;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        steps.push_back({same ? EditOp::kMatch : EditOp::kSubstitute, i - 1, j - 1});
        --i, --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      steps.push_back({EditOp::kDelete, i - 1, std::nullopt});
      --i;
    } else {
      steps.push_back({EditOp::kInsert, std::nullopt, j - 1});
      --j;
    }
  }
  std::reverse(steps.begin(), steps.end());
  return steps;
}

ErrorCounts counts_of(const std::vector<EditStep>& steps, std::size_t ref_len) {
  ErrorCounts c;
  c.reference_words = ref_len;
  for (const auto& s : steps) {
    if (s.op == EditOp::kSubstitute) ++c.substitutions;
    if (s.op == EditOp::kInsert) ++c.insertions;
    if (s.op == EditOp::kDelete) ++c.deletions;
  }
  return c;
}

}  // namespace

std::vector<EditStep> align_sequences(const std::vector<std::string>& ref,
                                      const std::vector<std::string>& hyp) {
  return align_impl(ref, hyp);
}

ErrorCounts count_errors(const std::vector<std::string>& ref,
                         const std::vector<std::string>& hyp) {
  return counts_of(align_impl(ref, hyp), ref.size());
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

ErrorCounts wer(const std::vector<std::string>& refs, const std::vector<std::string>& hyps) {
  if (refs.size() != hyps.size()) {
    throw DataError("WER needs as many hypotheses as references (" + std::to_string(refs.size()) +
                    " vs " + std::to_string(hyps.size()) + ")");
  }
  ErrorCounts total;
  for (std::size_t i = 0; i < refs.size(); ++i)
    total += count_errors(split_words(refs[i]), split_words(hyps[i]));
  if (total.reference_words == 0) throw DataError("empty reference corpus");
  return total;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty set");
  if (!(q > 0.0 && q <= 100.0)) throw ConfigError("percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  // Guard against q/100*n landing a hair above an integer.
  const double rank = std::ceil(q / 100.0 * n - 1e-9);
  const std::size_t k = static_cast<std::size_t>(std::max(1.0, rank));
  return values[std::min(k, values.size()) - 1];
}

DelayReport DelayReport::from_delays(std::vector<double> delays_ms) {
  DelayReport r;
  r.delays_ms = std::move(delays_ms);
  if (r.delays_ms.empty()) return r;
  r.avg = std::accumulate(r.delays_ms.begin(), r.delays_ms.end(), 0.0) /
          static_cast<double>(r.delays_ms.size());
  r.p95 = percentile(r.delays_ms, 95.0);
  r.p99 = percentile(r.delays_ms, 99.0);
  return r;
}

std::vector<double> token_delays(const std::vector<int>& ref_tokens,
                                 const std::vector<std::size_t>& ref_frames,
                                 const std::vector<int>& hyp_tokens,
                                 const std::vector<std::size_t>& emit_frames,
                                 double frame_ms) {
  if (ref_tokens.size() != ref_frames.size() || hyp_tokens.size() != emit_frames.size()) {
    throw DataError("token and frame sequences differ in length");
  }
  const auto steps = align_impl(ref_tokens, hyp_tokens);
  std::vector<double> out;
  for (const auto& s : steps) {
    if (s.op != EditOp::kMatch) continue;
    const double emitted = static_cast<double>(emit_frames[*s.hyp]) * frame_ms;
    const double spoken_end = static_cast<double>(ref_frames[*s.ref] + 1) * frame_ms;
    out.push_back(emitted - spoken_end);
  }
  return out;
}

SlicedReport sliced_report(const std::vector<UtteranceResult>& results, double threshold_s) {
  SlicedReport r;
  r.threshold_s = threshold_s;
  for (const auto& u : results) {
    const auto c = count_errors(split_words(u.ref_text), split_words(u.hyp_text));
    if (u.duration_s < threshold_s) {
      ++r.short_count;
      r.short_errors += c;
    } else {
      ++r.long_count;
      r.long_errors += c;
    }
  }
  return r;
}

}  // namespace fsd
