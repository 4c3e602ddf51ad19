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

#include "fsdelib/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "fsdelib/errors.hpp"
#include "json.hpp"

namespace fsd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct Candidate {
  Hypothesis hyp;
  bool finished = false;    // blank taken for this frame
  std::size_t symbols = 0;  // labels emitted in this frame
};

bool candidate_before(const Candidate& a, const Candidate& b) {
  if (hypothesis_before(a.hyp, b.hyp)) return true;
  if (hypothesis_before(b.hyp, a.hyp)) return false;
  return a.finished && !b.finished;
}

// Merges candidates with identical (tokens, finished) by log-add.
void merge_into(std::vector<Candidate>& pool,
                std::map<std::pair<std::vector<int>, bool>, std::size_t>& index,
                Candidate c) {
  auto key = std::make_pair(c.hyp.tokens, c.finished);
  auto it = index.find(key);
  if (it == index.end()) {
    index.emplace(std::move(key), pool.size());
    pool.push_back(std::move(c));
    return;
  }
  auto& e = pool[it->second];
  e.hyp.log_prob = log_add(e.hyp.log_prob, c.hyp.log_prob);
  e.symbols = std::min(e.symbols, c.symbols);
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t TransducerSearchSpace::vocab_size() const { return model_->config().vocab_size; }

StateHandle TransducerSearchSpace::initial_state() const {
  const int bos[] = {kBosId};
  auto [out, st] = model_->predictor_forward(bos, model_->predictor_initial_state());
  auto s = std::make_shared<State>();
  s->lstm = std::move(st);
  s->output = std::move(out);
  return s;
}

StateHandle TransducerSearchSpace::extend(const StateHandle& state, int token) const {
  const auto& prev = static_cast<const State&>(*state);
  const int tok[] = {token};
  auto [out, st] = model_->predictor_forward(tok, prev.lstm);
  auto s = std::make_shared<State>();
  s->lstm = std::move(st);
  s->output = std::move(out);
  return s;
}

std::vector<double> TransducerSearchSpace::log_probs(const Tensor& enc, std::size_t row,
                                                     std::size_t,
                                                     const StateHandle& state) const {
  const auto& s = static_cast<const State&>(*state);
  const Tensor lp = log_softmax(model_->joiner().forward(slice_rows(enc, row, row + 1), s.output));
  const auto d = lp.data();
  return {d.begin(), d.end()};
}

// ---------------------------------------------------------------------------

Beam initial_beam(const SearchSpace& space) {
  Hypothesis h;
  h.state = space.initial_state();
  return {h};
}

bool hypothesis_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

void BeamConfig::validate() const {
  if (fast_segment < 1) throw ConfigError("beam.fast_segment must be >= 1");
  if (slow_segment < fast_segment || slow_segment % fast_segment != 0) {
    throw ConfigError("beam.slow_segment must be a positive multiple of beam.fast_segment");
  }
  if (fast_beam < 1 || slow_beam < 1) throw ConfigError("beam sizes must be >= 1");
  if (max_symbols_per_frame < 1) throw ConfigError("beam.max_symbols_per_frame must be >= 1");
}

BeamConfig BeamConfig::for_model(const ModelConfig& cfg, std::size_t beam) {
  BeamConfig b;
  b.fast_segment = cfg.fast_chunk;
  b.slow_segment = cfg.slow_segment_frames();
  b.fast_beam = b.slow_beam = beam;
  return b;
}

Beam beam_search_segment(const Tensor& enc, std::size_t start_frame, const Beam& beam,
                         std::size_t beam_size, const SearchSpace& space,
                         std::size_t max_symbols_per_frame) {
  if (beam_size < 1) throw ConfigError("beam size must be >= 1");
  if (beam.empty()) throw ContractError("beam search needs a nonempty beam");
  const std::size_t stamp = start_frame + enc.rows();
  const std::size_t V = space.vocab_size();
  Beam current = beam;
  for (std::size_t row = 0; row < enc.rows(); ++row) {
    const std::size_t frame = start_frame + row;
    std::vector<Candidate> finished;
    std::vector<Candidate> active;
    for (auto& h : current) active.push_back({h, false, 0});
    while (!active.empty()) {
      std::vector<Candidate> pool;
      std::map<std::pair<std::vector<int>, bool>, std::size_t> index;
      for (auto& c : finished) merge_into(pool, index, c);
      for (const auto& c : active) {
        const auto lp = space.log_probs(enc, row, frame, c.hyp.state);
        if (lp.size() != V) throw DimensionError("search space returned a wrong-sized distribution");
        if (lp[0] != kNegInf) {
          Candidate done = c;
          done.hyp.log_prob += lp[0];
          done.finished = true;
          merge_into(pool, index, std::move(done));
        }
        if (c.symbols >= max_symbols_per_frame) continue;
        for (std::size_t k = 1; k < V; ++k) {
          const int tok = static_cast<int>(k);
          if (!space.emittable(tok) || lp[k] == kNegInf) continue;
          Candidate next;
          next.hyp.tokens = c.hyp.tokens;
          next.hyp.tokens.push_back(tok);
          next.hyp.emit_times = c.hyp.emit_times;
          next.hyp.emit_times.push_back(stamp);
          next.hyp.log_prob = c.hyp.log_prob + lp[k];
          next.hyp.state = c.hyp.state;  // extended lazily if it survives
          next.symbols = c.symbols + 1;
          merge_into(pool, index, std::move(next));
        }
      }
      std::sort(pool.begin(), pool.end(), candidate_before);
      if (pool.size() > beam_size) pool.resize(beam_size);
      finished.clear();
      active.clear();
      for (auto& c : pool) {
        if (c.finished) {
          finished.push_back(std::move(c));
        } else {
          c.hyp.state = space.extend(c.hyp.state, c.hyp.tokens.back());
          active.push_back(std::move(c));
        }
      }
    }
    if (finished.empty()) throw NumericError("beam search pruned every hypothesis at frame " +
                                             std::to_string(frame));
    current.clear();
    for (auto& c : finished) current.push_back(std::move(c.hyp));
  }
  return current;
}

const Hypothesis& best_hypothesis(const Beam& beam) {
  if (beam.empty()) throw ContractError("best hypothesis of an empty beam");
  return *std::min_element(beam.begin(), beam.end(), hypothesis_before);
}

std::vector<int> get_best_hypo(const Beam& beam) { return best_hypothesis(beam).tokens; }

const Hypothesis& finalize(const Beam& beam) {
  if (beam.empty()) throw ContractError("finalize on an empty beam");
  auto norm = [](const Hypothesis& h) {
    return h.log_prob / static_cast<double>(std::max<std::size_t>(1, h.tokens.size()));
  };
  const Hypothesis* best = &beam.front();
  for (const auto& h : beam) {
    const double a = norm(h), b = norm(*best);
    if (a > b || (a == b && hypothesis_before(h, *best))) best = &h;
  }
  return *best;
}

std::string to_json_line(const TraceRecord& r) {
  nlohmann::json j;
  j["branch"] = r.branch;
  j["frame_begin"] = r.frame_begin;
  j["frame_end"] = r.frame_end;
  j["deliberation"] = r.deliberation;
  j["y_p"] = r.y_p ? nlohmann::json(*r.y_p) : nlohmann::json(nullptr);
  auto& b = j["beam"] = nlohmann::json::array();
  for (const auto& [tokens, score] : r.beam) b.push_back({{"tokens", tokens}, {"log_prob", score}});
  return j.dump();
}

// ---------------------------------------------------------------------------

namespace {

TraceRecord trace_of(const char* branch, std::size_t begin, std::size_t end, const Beam& beam) {
  TraceRecord r;
  r.branch = branch;
  r.frame_begin = begin;
  r.frame_end = end;
  Beam sorted = beam;
  std::sort(sorted.begin(), sorted.end(), hypothesis_before);
  for (const auto& h : sorted) r.beam.emplace_back(h.tokens, h.log_prob);
  return r;
}

void check_schedule(const FastSlowTransducer& model, const BeamConfig& cfg) {
  cfg.validate();
  const auto& m = model.config();
  if (cfg.fast_segment != m.fast_chunk || cfg.slow_segment != m.slow_segment_frames()) {
    throw ConfigError("beam segments (" + std::to_string(cfg.fast_segment) + ", " +
                      std::to_string(cfg.slow_segment) + ") disagree with the model's (" +
                      std::to_string(m.fast_chunk) + ", " +
                      std::to_string(m.slow_segment_frames()) + ")");
  }
}

DecodeResult result_from(const Beam& beam) {
  DecodeResult res;
  const Hypothesis& best = finalize(beam);
  res.tokens = best.tokens;
  res.emit_frames = best.emit_times;
  res.log_prob = best.log_prob;
  res.final_beam = beam;
  return res;
}

}  // namespace

DecodeResult parallel_beam_search(const Tensor& features, const FastSlowTransducer& model,
                                  const BeamConfig& cfg, bool record_trace) {
  check_schedule(model, cfg);
  NoGradGuard no_grad;
  const auto& m = model.config();
  const TransducerSearchSpace space(model);
  const Tensor padded = model.pad_features(features);
  const std::size_t C = m.fast_chunk, Lf = m.fast_lookahead, Ls = m.slow_lookahead;
  const std::size_t S = cfg.slow_segment;
  const std::size_t Tp = model.padded_frames(features.rows());
  const std::size_t chunks = Tp / C;

  DecodeStats stats;
  stats.fast_chunks = chunks;
  std::vector<TraceRecord> trace;
  std::vector<std::vector<int>> partials;
  EncoderState h_fast = model.fast_encoder().initial_state();
  EncoderState h_slow = model.slow_encoder().initial_state();
  Beam b_fast = initial_beam(space);
  Beam b_slow = b_fast;
  std::vector<Tensor> i_slow;
  std::size_t segment_start = 0;

  for (std::size_t i = 0; i < chunks; ++i) {
    const std::size_t t0 = i * C, t = t0 + C;
    auto fast = model.fast_encoder().forward_chunk(slice_rows(padded, t0, t + Lf), h_fast);
    ++stats.fast_encoder_calls;
    h_fast = std::move(fast.state);
    b_fast = beam_search_segment(fast.output, t0, b_fast, cfg.fast_beam, space,
                                 cfg.max_symbols_per_frame);
    ++stats.fast_search_calls;
    if (record_trace) trace.push_back(trace_of("fast", t0, t, b_fast));
    i_slow.push_back(fast.output);

    if (t % S != 0 && t != Tp) continue;
    const Hypothesis y_p = best_hypothesis(b_fast);
    partials.push_back(y_p.tokens);
    if (Ls > 0) i_slow.push_back(slice_rows(fast.lookahead, 0, Ls));
    auto slow = model.slow_encoder().forward_chunk(concat_rows(i_slow), h_slow);
    ++stats.slow_encoder_calls;
    h_slow = std::move(slow.state);
    const Tensor e_comb = model.encode_deliberation(slow.output, y_p.tokens);
    ++stats.deliberation_calls;
    b_slow = beam_search_segment(e_comb, segment_start, b_slow, cfg.slow_beam, space,
                                 cfg.max_symbols_per_frame);
    ++stats.slow_search_calls;
    for (auto& h : b_slow) {
      std::size_t k = 0;
      while (k < h.tokens.size() && k < y_p.tokens.size() && h.tokens[k] == y_p.tokens[k]) {
        h.emit_times[k] = y_p.emit_times[k];
        ++k;
      }
    }
    if (record_trace) {
      auto rec = trace_of("slow", segment_start, t, b_slow);
      rec.deliberation = model.has_deliberation();
      rec.y_p = y_p.tokens;
      trace.push_back(std::move(rec));
    }
    b_fast = b_slow;
    i_slow.clear();
    segment_start = t;
  }

  DecodeResult res = result_from(b_slow);
  res.partials = std::move(partials);
  res.trace = std::move(trace);
  res.stats = stats;
  return res;
}

DecodeResult fast_beam_search(const Tensor& features, const FastSlowTransducer& model,
                              const BeamConfig& cfg) {
  check_schedule(model, cfg);
  NoGradGuard no_grad;
  const auto& m = model.config();
  const TransducerSearchSpace space(model);
  const Tensor padded = model.pad_features(features);
  const std::size_t C = m.fast_chunk, Lf = m.fast_lookahead;
  const std::size_t chunks = model.padded_frames(features.rows()) / C;
  EncoderState h_fast = model.fast_encoder().initial_state();
  Beam b_fast = initial_beam(space);
  DecodeStats stats;
  stats.fast_chunks = chunks;
  for (std::size_t i = 0; i < chunks; ++i) {
    const std::size_t t0 = i * C;
    auto fast = model.fast_encoder().forward_chunk(slice_rows(padded, t0, t0 + C + Lf), h_fast);
    h_fast = std::move(fast.state);
    ++stats.fast_encoder_calls;
    b_fast = beam_search_segment(fast.output, t0, b_fast, cfg.fast_beam, space,
                                 cfg.max_symbols_per_frame);
    ++stats.fast_search_calls;
  }
  DecodeResult res = result_from(b_fast);
  res.stats = stats;
  return res;
}

}  // namespace fsd
