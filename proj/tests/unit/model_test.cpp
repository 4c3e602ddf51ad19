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
#include <filesystem>
#include <random>

#include "doctest.h"
#include "fsdelib/errors.hpp"
#include "fsdelib/loss.hpp"
#include "fsdelib/model.hpp"
#include "support/gradcheck.hpp"

using namespace fsd;
using fsd::testing::grad_check;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 6;
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
  c.predictor_layers = 2;
  c.joiner_dim = 8;
  c.seed = 3;
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

void randomize(Linear& l, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.3);
  for (double& v : l.weight.mutable_data()) v = n(rng);
  if (l.bias.defined())
    for (double& v : l.bias.mutable_data()) v = n(rng);
}

void randomize_merge(FastSlowTransducer& m, std::mt19937_64& rng) {
  for (auto& b : m.merge_model()->blocks()) {
    randomize(b.attn.output_proj(), rng);
    randomize(b.ff.down, rng);
  }
}

// Streams the fast/slow encoders exactly as the decoder does.
std::pair<Tensor, Tensor> stream_encoders(const FastSlowTransducer& m, const Tensor& features) {
  const auto& c = m.config();
  const Tensor padded = m.pad_features(features);
  const std::size_t Tp = m.padded_frames(features.rows());
  const std::size_t S = c.slow_segment_frames();
  EncoderState hf = m.fast_encoder().initial_state(), hs = m.slow_encoder().initial_state();
  std::vector<Tensor> fast_out, slow_out, acc;
  for (std::size_t t0 = 0; t0 < Tp; t0 += c.fast_chunk) {
    const std::size_t t = t0 + c.fast_chunk;
    auto f = m.fast_encoder().forward_chunk(slice_rows(padded, t0, t + c.fast_lookahead), hf);
    hf = f.state;
    fast_out.push_back(f.output);
    acc.push_back(f.output);
    if (t % S == 0 || t == Tp) {
      acc.push_back(slice_rows(f.lookahead, 0, c.slow_lookahead));
      auto s = m.slow_encoder().forward_chunk(concat_rows(acc), hs);
      hs = s.state;
      slow_out.push_back(s.output);
      acc.clear();
    }
  }
  return {concat_rows(fast_out), concat_rows(slow_out)};
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("predictor prepends BOS and streams token by token") {
  FastSlowTransducer m(tiny_config());
  CHECK(m.predictor_sequence({}).shape() == Shape{1, 8});

  const std::vector<int> y{2, 4, 3, 5, 2};
  const Tensor batch = m.predictor_sequence(y);
  REQUIRE(batch.rows() == 6);
  LstmState st = m.predictor_initial_state();
  std::vector<int> seq{kBosId};
  seq.insert(seq.end(), y.begin(), y.end());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int tok[] = {seq[i]};
    auto [out, next] = m.predictor_forward(tok, st);
    st = next;
    CHECK(max_abs_diff(out, slice_rows(batch, i, i + 1)) < 1e-10);
  }
  const int bad[] = {6};
  CHECK_THROWS_AS(m.predictor_sequence(bad), DimensionError);
  const int blank[] = {0};
  CHECK_THROWS_AS(m.predictor_sequence(blank), ContractError);
}

TEST_CASE("zero joiner gives a uniform distribution") {
  FastSlowTransducer m(tiny_config());
  m.joiner().enc_proj.zero_();
  m.joiner().pred_proj.zero_();
  m.joiner().output.zero_();
  std::mt19937_64 rng(1);
  const Tensor lp = log_softmax(m.joiner().forward(Tensor::randn({1, 8}, rng, 1.0),
                                                   Tensor::randn({1, 8}, rng, 1.0)));
  for (double v : lp.data()) CHECK(v == doctest::Approx(-std::log(6.0)).epsilon(1e-14));
}

TEST_CASE("the joiner is shared by the fast and deliberation branches") {
  auto cfg = tiny_config();
  cfg.deliberation = true;
  FastSlowTransducer m(cfg);
  std::size_t joiner_params = 0;
  for (const auto& [name, t] : m.parameters())
    if (name.rfind("joiner.", 0) == 0) ++joiner_params;
  CHECK(joiner_params == 5);  // enc_proj w/b, pred_proj w, output w/b

  std::mt19937_64 rng(2);
  const Tensor feats = Tensor::randn({9, 5}, rng, 1.0);
  const auto enc = m.encode(feats);
  const Tensor pred = m.predictor_sequence(std::vector<int>{2, 3});
  const std::vector<int> y_p{2};
  const Tensor e_comb = m.encode_deliberation(enc.e_slow, y_p);
  const Tensor fast_before = m.lattice(enc.e_fast, pred);
  const Tensor delib_before = m.lattice(e_comb, pred);
  m.joiner().output.weight.mutable_data()[0] += 0.5;
  const Tensor fast_after = m.lattice(enc.e_fast, pred);
  const Tensor delib_after = m.lattice(e_comb, pred);
  CHECK(max_abs_diff(fast_before, fast_after) > 0.0);
  CHECK(max_abs_diff(delib_before, delib_after) > 0.0);
  // e_comb == e_slow at initialization, so the slow and deliberation lattices agree.
  CHECK(max_abs_diff(m.lattice(enc.e_slow, pred), delib_after) == 0.0);
}

TEST_CASE("identity slow encoder") {
  auto cfg = tiny_config();
  cfg.slow_layers = 0;
  FastSlowTransducer m(cfg);
  std::mt19937_64 rng(3);
  const auto enc = m.encode(Tensor::randn({11, 5}, rng, 1.0));
  CHECK(max_abs_diff(enc.e_fast, enc.e_slow) == 0.0);
}

TEST_CASE("streaming encoders equal the whole-utterance path") {
  std::mt19937_64 rng(4);
  for (std::size_t T : {1u, 5u, 6u, 13u, 18u, 25u}) {
    FastSlowTransducer m(tiny_config());
    const Tensor feats = Tensor::randn({T, 5}, rng, 1.0);
    const auto full = m.encode(feats);
    const auto [fast, slow] = stream_encoders(m, feats);
    CHECK(max_abs_diff(full.e_fast, fast) < 1e-8);
    CHECK(max_abs_diff(full.e_slow, slow) < 1e-8);
  }
}

TEST_CASE("slow segment output ignores input beyond its lookahead") {
  FastSlowTransducer m(tiny_config());
  std::mt19937_64 rng(5);
  const std::size_t S = 6, T = 24;
  const Tensor feats = Tensor::randn({T, 5}, rng, 1.0);
  const Tensor base = m.encode(feats).e_slow;
  for (std::size_t j = 0; j + 1 < T / S; ++j) {
    Tensor pert = feats.detach();
    // The fast lookahead of segment j's last chunk covers frame (j+1)*S.
    for (std::size_t t = (j + 1) * S + 1; t < T; ++t)
      for (std::size_t d = 0; d < 5; ++d) pert.mutable_data()[t * 5 + d] -= 2.0;
    const Tensor out = m.encode(pert).e_slow;
    CHECK(max_abs_diff(slice_rows(base, 0, (j + 1) * S), slice_rows(out, 0, (j + 1) * S)) == 0.0);
  }
}

TEST_CASE("deliberation text encoder") {
  for (auto kind : {TextEncoderKind::kLstm, TextEncoderKind::kConformer}) {
    auto cfg = tiny_config();
    cfg.deliberation = true;
    cfg.text_encoder = kind;
    FastSlowTransducer m(cfg);
    CHECK(m.encode_deliberation_text({}).shape() == Shape{1, 8});
    std::vector<int> long_hyp(25);
    for (std::size_t i = 0; i < 25; ++i) long_hyp[i] = 2 + static_cast<int>(i % 4);
    const Tensor e_text = m.encode_deliberation_text(long_hyp);
    CHECK(e_text.rows() == 20);
    const std::vector<int> suffix(long_hyp.begin() + 5, long_hyp.end());
    CHECK(max_abs_diff(e_text, m.encode_deliberation_text(suffix)) == 0.0);
  }
}

TEST_CASE("shared embedding collects gradient from the predictor and text encoder") {
  auto cfg = tiny_config();
  cfg.deliberation = true;
  FastSlowTransducer m(cfg);
  CHECK(m.text_encoder()->embedding().same_storage(m.token_embedding()));
  std::mt19937_64 rng(6);
  const std::vector<int> y{2, 3, 4}, y_p{5, 2};
  const Tensor w1 = Tensor::randn({4, 8}, rng, 1.0), w2 = Tensor::randn({2, 8}, rng, 1.0);
  auto predictor_part = [&] { return sum(mul(m.predictor_sequence(y), w1)); };
  auto text_part = [&] { return sum(mul(m.encode_deliberation_text(y_p), w2)); };
  Tensor emb = m.token_embedding();

  emb.zero_grad();
  backward(predictor_part());
  const std::vector<double> g1(emb.grad().begin(), emb.grad().end());
  emb.zero_grad();
  backward(text_part());
  const std::vector<double> g2(emb.grad().begin(), emb.grad().end());
  emb.zero_grad();
  backward(add(predictor_part(), text_part()));
  bool text_contributes = false;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK(emb.grad()[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
    text_contributes |= g2[i] != 0.0;
  }
  CHECK(text_contributes);
  auto r = grad_check([&] { return add(predictor_part(), text_part()); }, {emb});
  CHECK(r.max_rel_error < 1e-4);

  auto unshared = cfg;
  unshared.share_token_embeddings = false;
  FastSlowTransducer u(unshared);
  CHECK_FALSE(u.text_encoder()->embedding().same_storage(u.token_embedding()));
}

TEST_CASE("merge model") {
  auto cfg = tiny_config();
  cfg.deliberation = true;
  FastSlowTransducer m(cfg);
  std::mt19937_64 rng(7);
  const Tensor e_slow = Tensor::randn({6, 8}, rng, 1.0);

  SUBCASE("zeroed output paths make the merge an identity") {
    const Tensor e_comb = m.encode_deliberation(e_slow, std::vector<int>{2, 3, 4});
    CHECK(max_abs_diff(e_comb, e_slow) == 0.0);
  }
  SUBCASE("a single text row adds the same vector to every frame") {
    auto& b = m.merge_model()->blocks()[0];
    randomize(b.attn.output_proj(), rng);
    const Tensor e_text = Tensor::randn({1, 8}, rng, 1.0);
    const Tensor delta = sub(m.merge_forward(e_slow, e_text), e_slow);
    const Tensor expect = b.attn.output_proj().forward(b.attn.value_proj().forward(e_text));
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t d = 0; d < 8; ++d) CHECK(delta.at(t, d) == doctest::Approx(expect.at(0, d)).epsilon(1e-12));
  }
  SUBCASE("shape contract and gradient check") {
    randomize_merge(m, rng);
    for (std::size_t U = 1; U <= 20; ++U)
      CHECK(m.merge_forward(e_slow, Tensor::randn({U, 8}, rng, 1.0)).shape() == e_slow.shape());
    NamedParameters p;
    m.merge_model()->collect("merge", p);
    std::vector<Tensor> params;
    for (auto& [n, t] : p) params.push_back(t);
    Tensor q = Tensor::randn({6, 8}, rng, 1.0, true), txt = Tensor::randn({3, 8}, rng, 1.0, true);
    params.push_back(q);
    params.push_back(txt);
    const Tensor w = Tensor::randn({6, 8}, rng, 1.0);
    auto r = grad_check([&] { return sum(mul(m.merge_forward(q, txt), w)); }, params, 1e-5, 200, 3);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("full model loss gradient on sampled parameters") {
  auto cfg = tiny_config();
  cfg.deliberation = true;
  FastSlowTransducer m(cfg);
  std::mt19937_64 rng(8);
  randomize_merge(m, rng);
  const Tensor feats = Tensor::randn({10, 5}, rng, 1.0);
  const std::vector<int> y{2, 4, 3};
  const std::vector<std::vector<int>> partials{{2}, {2, 4}};
  auto loss = [&] {
    const auto enc = m.encode(feats);
    const Tensor pred = m.predictor_sequence(y);
    const Tensor l_fast = rnnt_loss(Lattice{m.lattice(enc.e_fast, pred)}, y);
    const Tensor e_comb = m.combine_segments(enc.e_slow, partials);
    const Tensor l_slow = rnnt_loss(Lattice{m.lattice(e_comb, pred)}, y);
    return joint_loss(l_slow, l_fast, 0.5);
  };
  auto r = grad_check(loss, m.parameter_tensors(), 1e-5, 200, 4);
  CHECK(r.checked == 200);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round trip preserves outputs and sharing") {
  auto cfg = tiny_config();
  cfg.deliberation = true;
  cfg.text_encoder = TextEncoderKind::kLstm;
  FastSlowTransducer m(cfg);
  std::mt19937_64 rng(9);
  randomize_merge(m, rng);
  const auto path = std::filesystem::temp_directory_path() / "fsdelib_model.fsdt";
  write_checkpoint(path, m.to_checkpoint());
  const auto back = FastSlowTransducer::from_checkpoint(read_checkpoint(path));
  CHECK(back.config().text_encoder == TextEncoderKind::kLstm);
  CHECK(back.text_encoder()->embedding().same_storage(back.token_embedding()));
  const Tensor feats = Tensor::randn({7, 5}, rng, 1.0);
  const auto a = m.encode(feats), b = back.encode(feats);
  CHECK(max_abs_diff(a.e_slow, b.e_slow) == 0.0);
  const std::vector<int> y_p{3, 2};
  CHECK(max_abs_diff(m.encode_deliberation(a.e_slow, y_p), back.encode_deliberation(b.e_slow, y_p)) == 0.0);

  Checkpoint ck = m.to_checkpoint();
  ck.tensors.pop_back();
  CHECK_THROWS_AS(m.load_parameters(ck), FormatError);
  ck = m.to_checkpoint();
  ck.tensors.emplace_back("extra", Tensor::zeros({1}));
  CHECK_THROWS_AS(m.load_parameters(ck), FormatError);
}

TEST_CASE("model config round trip and validation") {
  auto cfg = tiny_config();
  cfg.text_encoder = TextEncoderKind::kLstm;
  cfg.share_token_embeddings = false;
  KeyValueDocument doc;
  cfg.write(doc);
  const auto back = ModelConfig::read(doc);
  KeyValueDocument doc2;
  back.write(doc2);
  CHECK(doc.serialize() == doc2.serialize());

  auto bad = cfg;
  bad.slow_lookahead = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.num_heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}  // TEST_SUITE
