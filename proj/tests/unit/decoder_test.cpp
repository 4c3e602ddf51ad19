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

#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "doctest.h"
#include "fsdelib/decoder.hpp"
#include "fsdelib/errors.hpp"
#include "support/lookup_space.hpp"

using namespace fsd;
using fsd::testing::LookupSpace;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 7;
  c.feature_dim = 5;
  c.model_dim = 8;
  c.num_heads = 2;
  c.ff_dim = 12;
  c.fast_layers = 1;
  c.fast_chunk = 2;
  c.fast_left_cache = 4;
  c.slow_layers = 1;
  c.slow_chunks = 3;
  c.slow_left_cache = 6;
  c.predictor_layers = 1;
  c.joiner_dim = 8;
  c.seed = 5;
  return c;
}

void perturb_merge(FastSlowTransducer& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& b : m.merge_model()->blocks()) {
    for (double& v : b.attn.output_proj().weight.mutable_data()) v = n(rng);
    for (double& v : b.ff.down.weight.mutable_data()) v = n(rng);
  }
}

// Sharper joiner output so the untrained model emits tokens.
void sharpen(FastSlowTransducer& m, double factor) {
  for (double& v : m.joiner().output.weight.mutable_data()) v *= factor;
}

Tensor frames(std::size_t n) { return Tensor::zeros({n, 1}); }

std::pair<std::vector<int>, double> argmax(const std::map<std::vector<int>, double>& scores) {
  std::pair<std::vector<int>, double> best{{}, -std::numeric_limits<double>::infinity()};
  for (const auto& [k, v] : scores) {
    Hypothesis a{k, v, nullptr, {}}, b{best.first, best.second, nullptr, {}};
    if (hypothesis_before(a, b)) best = {k, v};
  }
  return best;
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("beam of one is greedy decoding") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    LookupSpace space(4, 3, seed);
    const std::size_t T = 1 + seed % 4;
    const Beam out = beam_search_segment(frames(T), 0, initial_beam(space), 1, space, 2);
    REQUIRE(out.size() == 1);
    const Hypothesis g = fsd::testing::greedy_decode(space, frames(T), 0, T, 2);
    CHECK(out[0].tokens == g.tokens);
    CHECK(out[0].log_prob == doctest::Approx(g.log_prob).epsilon(1e-12));
  }
}

TEST_CASE("a wider beam recovers a sequence greedy decoding misses") {
  // blank / a / b over two frames, one label per frame.
  LookupSpace space(3, 2, 0);
  space.set(0, {}, {0.25, 0.40, 0.35});
  space.set(0, {1}, {0.9, 0.05, 0.05});
  space.set(0, {2}, {0.9, 0.05, 0.05});
  space.set(1, {}, {0.5, 0.25, 0.25});
  space.set(1, {1}, {0.6, 0.2, 0.2});
  space.set(1, {2}, {0.05, 0.05, 0.9});
  const auto greedy = beam_search_segment(frames(2), 0, initial_beam(space), 1, space, 1);
  CHECK(greedy[0].tokens == std::vector<int>{1});
  CHECK(greedy[0].log_prob == doctest::Approx(std::log(0.4 * 0.9 * 0.6)));

  const auto wide = beam_search_segment(frames(2), 0, initial_beam(space), 3, space, 1);
  CHECK(get_best_hypo(wide) == std::vector<int>{2, 2});
  CHECK(best_hypothesis(wide).log_prob == doctest::Approx(std::log(0.35 * 0.9 * 0.9)));

  const auto all = fsd::testing::exhaustive_scores(space, 2, 1);
  CHECK(all.at({2, 2}) == doctest::Approx(std::log(0.2835)));
  CHECK(all.at({1}) == doctest::Approx(std::log(0.2535)));
}

TEST_CASE("an unpruned beam finds the most probable sequence") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    LookupSpace space(3, 2, 1000 + seed);
    const std::size_t T = 1 + seed % 3;
    const auto scores = fsd::testing::exhaustive_scores(space, T, 2);
    REQUIRE(scores.size() <= 7);
    const auto expect = argmax(scores);
    const auto out = beam_search_segment(frames(T), 0, initial_beam(space), 18, space, 2);
    CHECK(out.size() == scores.size());
    CHECK(get_best_hypo(out) == expect.first);
    CHECK(best_hypothesis(out).log_prob == doctest::Approx(expect.second).epsilon(1e-10));
    for (const auto& h : out) CHECK(h.log_prob == doctest::Approx(scores.at(h.tokens)).epsilon(1e-10));
  }
}

TEST_CASE("pruned beams never beat the unpruned score") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    LookupSpace space(3, 2, 2000 + seed);
    const std::size_t T = 3;
    const double best = argmax(fsd::testing::exhaustive_scores(space, T, 2)).second;
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto out = beam_search_segment(frames(T), 0, initial_beam(space), n, space, 2);
      CHECK(out.size() <= n);
      CHECK(best_hypothesis(out).log_prob <= best + 1e-12);
    }
  }
}

TEST_CASE("searches chain across segments") {
  LookupSpace space(4, 4, 77);
  const Beam whole = beam_search_segment(frames(5), 0, initial_beam(space), 4, space, 2);
  Beam split = beam_search_segment(frames(2), 0, initial_beam(space), 4, space, 2);
  split = beam_search_segment(frames(3), 2, split, 4, space, 2);
  REQUIRE(whole.size() == split.size());
  for (std::size_t i = 0; i < whole.size(); ++i) {
    CHECK(whole[i].tokens == split[i].tokens);
    CHECK(whole[i].log_prob == split[i].log_prob);
    for (std::size_t k = 0; k < split[i].tokens.size(); ++k) {
      CHECK(whole[i].emit_times[k] == 5);
      CHECK((split[i].emit_times[k] == 2 || split[i].emit_times[k] == 5));
    }
  }
}

TEST_CASE("per-frame label budget forces blank") {
  LookupSpace space(2, 10, 0);
  for (std::size_t n = 0; n < 10; ++n) space.set(0, std::vector<int>(n, 1), {0.1, 0.9});
  const auto out = beam_search_segment(frames(1), 0, initial_beam(space), 1, space, 3);
  CHECK(out[0].tokens == std::vector<int>{1, 1, 1});
  CHECK(out[0].log_prob == doctest::Approx(3 * std::log(0.9) + std::log(0.1)));
}

TEST_CASE("best hypothesis and finalize") {
  Beam b{{{2, 3}, -2.0, nullptr, {}}, {{2}, -1.5, nullptr, {}}, {{3}, -1.5, nullptr, {}},
         {{2, 3, 4}, -3.3, nullptr, {}}};
  CHECK(get_best_hypo(b) == std::vector<int>{2});  // tie on score: fewer tokens, then lex
  CHECK(finalize(b).tokens == std::vector<int>{2, 3});  // -1.0 per token
  b.push_back({{}, -0.9, nullptr, {}});
  CHECK(finalize(b).tokens.empty());
  CHECK_THROWS_AS(get_best_hypo(Beam{}), ContractError);
  CHECK_THROWS_AS(finalize(Beam{}), ContractError);
  LookupSpace space(3, 2, 0);
  CHECK_THROWS_AS(beam_search_segment(frames(1), 0, initial_beam(space), 0, space), ConfigError);
  CHECK_THROWS_AS(beam_search_segment(frames(1), 0, Beam{}, 2, space), ContractError);
}

TEST_CASE("pruning every path is an error") {
  LookupSpace space(2, 5, 0);
  space.set(0, {}, {0.0, 1.0});
  space.set(0, {1}, {0.0, 1.0});
  CHECK_THROWS_AS(beam_search_segment(frames(1), 0, initial_beam(space), 2, space, 1), NumericError);
}

TEST_CASE("parallel search: schedule, trace and final selection") {
  auto cfg = small_config();
  cfg.deliberation = true;
  FastSlowTransducer m(cfg);
  perturb_merge(m, 4);
  sharpen(m, 6.0);
  std::mt19937_64 rng(6);
  const Tensor feats = Tensor::randn({15, 5}, rng, 1.0);  // 16 padded frames, 8 chunks
  const auto bc = BeamConfig::for_model(cfg, 4);
  const auto res = parallel_beam_search(feats, m, bc, true);

  CHECK(res.stats.fast_chunks == 8);
  CHECK(res.stats.fast_encoder_calls == 8);
  CHECK(res.stats.fast_search_calls == 8);
  CHECK(res.stats.slow_encoder_calls == 3);  // boundaries at 6, 12, 16
  CHECK(res.stats.slow_search_calls == 3);
  CHECK(res.stats.deliberation_calls == 3);
  REQUIRE(res.partials.size() == 3);
  REQUIRE(res.trace.size() == 11);

  std::vector<std::size_t> ends;
  const TraceRecord* last_fast = nullptr;
  std::size_t k = 0;
  for (const auto& r : res.trace) {
    if (r.branch == "fast") {
      last_fast = &r;
      CHECK(!r.y_p);
      continue;
    }
    ends.push_back(r.frame_end);
    REQUIRE(last_fast);
    REQUIRE(r.y_p);
    CHECK(last_fast->frame_end == r.frame_end);
    CHECK(*r.y_p == last_fast->beam.front().first);
    CHECK(*r.y_p == res.partials[k++]);
    CHECK(r.deliberation);
  }
  CHECK(ends == std::vector<std::size_t>{6, 12, 16});

  // Final choice maximizes length-normalized score from the final slow beam.
  const auto& final_slow = res.trace.back();
  CHECK(final_slow.branch == "slow");
  double best = -1e300;
  for (const auto& [toks, lp] : final_slow.beam)
    best = std::max(best, lp / std::max<std::size_t>(1, toks.size()));
  CHECK(res.log_prob / std::max<std::size_t>(1, res.tokens.size()) == best);
  for (const auto& h : res.final_beam) CHECK(h.log_prob <= 0.0);

  // Predictor states in the final beam replay the token history.
  for (const auto& h : res.final_beam) {
    const auto& st = static_cast<const TransducerSearchSpace::State&>(*h.state);
    const Tensor seq = m.predictor_sequence(h.tokens);
    const Tensor last = slice_rows(seq, seq.rows() - 1, seq.rows());
    for (std::size_t i = 0; i < last.numel(); ++i)
      CHECK(st.output.data()[i] == doctest::Approx(last.data()[i]).epsilon(1e-12));
  }

  // Deterministic.
  const auto again = parallel_beam_search(feats, m, bc, true);
  CHECK(again.tokens == res.tokens);
  CHECK(again.log_prob == res.log_prob);
  CHECK(again.emit_frames == res.emit_frames);
  for (std::size_t i = 0; i < res.trace.size(); ++i)
    CHECK(to_json_line(again.trace[i]) == to_json_line(res.trace[i]));

  auto wrong = bc;
  wrong.slow_segment = 8;
  CHECK_THROWS_AS(parallel_beam_search(feats, m, wrong), ConfigError);
}

TEST_CASE("a slow branch identical to the fast one reproduces the fast search") {
  auto cfg = small_config();
  cfg.slow_layers = 0;
  FastSlowTransducer m(cfg);
  sharpen(m, 6.0);
  std::mt19937_64 rng(7);
  const Tensor feats = Tensor::randn({13, 5}, rng, 1.0);
  const auto bc = BeamConfig::for_model(cfg, 3);
  const auto par = parallel_beam_search(feats, m, bc);
  const auto fast = fast_beam_search(feats, m, bc);
  CHECK(par.tokens == fast.tokens);
  CHECK(par.log_prob == fast.log_prob);
  if (par.tokens == par.partials.back()) CHECK(par.emit_frames == fast.emit_frames);
  CHECK(!fast.tokens.empty());
}

TEST_CASE("beam of one in the parallel search is two greedy chains") {
  auto cfg = small_config();
  cfg.deliberation = true;
  FastSlowTransducer m(cfg);
  perturb_merge(m, 9);
  sharpen(m, 6.0);
  std::mt19937_64 rng(8);
  const Tensor feats = Tensor::randn({14, 5}, rng, 1.0);
  const auto res = parallel_beam_search(feats, m, BeamConfig::for_model(cfg, 1));

  // Reference from the whole-utterance encoders.
  const TransducerSearchSpace space(m);
  const auto enc = m.encode(feats);
  const std::size_t S = cfg.slow_segment_frames(), C = cfg.fast_chunk;
  const std::size_t Tp = enc.e_fast.rows();
  Hypothesis slow;
  slow.state = space.initial_state();
  for (std::size_t s0 = 0; s0 < Tp; s0 += S) {
    const std::size_t s1 = std::min(Tp, s0 + S);
    Hypothesis fast = slow;
    for (std::size_t t0 = s0; t0 < s1; t0 += C)
      fast = fsd::testing::greedy_decode(space, slice_rows(enc.e_fast, t0, t0 + C), t0, C,
                                         4, fast);
    const Tensor e_comb = m.encode_deliberation(slice_rows(enc.e_slow, s0, s1), fast.tokens);
    slow = fsd::testing::greedy_decode(space, e_comb, s0, s1 - s0, 4, slow);
  }
  CHECK(res.tokens == slow.tokens);
  CHECK(res.log_prob == doctest::Approx(slow.log_prob).epsilon(1e-8));
}

TEST_CASE("one slow segment spanning the utterance is a two-pass decode") {
  auto cfg = small_config();
  cfg.deliberation = true;
  cfg.slow_chunks = 20;  // 40 frames per segment
  cfg.slow_left_cache = 40;
  FastSlowTransducer m(cfg);
  perturb_merge(m, 10);
  sharpen(m, 6.0);
  std::mt19937_64 rng(9);
  const Tensor feats = Tensor::randn({17, 5}, rng, 1.0);
  const auto bc = BeamConfig::for_model(cfg, 4);
  const auto res = parallel_beam_search(feats, m, bc, true);
  REQUIRE(res.partials.size() == 1);

  const TransducerSearchSpace space(m);
  const auto first = fast_beam_search(feats, m, bc);
  const std::vector<int> y_p = get_best_hypo(first.final_beam);
  const auto y_p_frames = best_hypothesis(first.final_beam).emit_times;
  CHECK(res.partials[0] == y_p);
  const auto enc = m.encode(feats);
  const Tensor e_comb = m.encode_deliberation(enc.e_slow, y_p);
  const Beam second = beam_search_segment(e_comb, 0, initial_beam(space), 4, space, 4);
  const Hypothesis& ref = finalize(second);
  CHECK(res.tokens == ref.tokens);
  CHECK(res.log_prob == doctest::Approx(ref.log_prob).epsilon(1e-8));
  for (std::size_t k = 0; k < ref.tokens.size(); ++k) {
    const bool in_prefix = k < y_p.size() &&
                           std::equal(ref.tokens.begin(), ref.tokens.begin() + k + 1, y_p.begin());
    CHECK(res.emit_frames[k] == (in_prefix ? y_p_frames[k] : 18));
  }
}

}  // TEST_SUITE
