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
#include <random>

#include "doctest.h"
#include "fsdelib/errors.hpp"
#include "fsdelib/layers.hpp"
#include "support/gradcheck.hpp"

using namespace fsd;
using fsd::testing::grad_check;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

std::vector<Tensor> tensors_of(const NamedParameters& p) {
  std::vector<Tensor> out;
  for (const auto& [n, t] : p) out.push_back(t);
  return out;
}

void set_identity(Linear& l) {
  auto w = l.weight.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < l.in_dim(); ++i) w[i * l.out_dim() + i] = 1.0;
  if (l.bias.defined()) std::fill(l.bias.mutable_data().begin(), l.bias.mutable_data().end(), 0.0);
}

std::vector<double> normalized(const std::vector<double>& v) {
  double mean = 0.0, var = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  std::vector<double> out;
  for (double x : v) out.push_back((x - mean) / std::sqrt(var + 1e-5));
  return out;
}

ChunkedEncoderConfig small_encoder(std::size_t layers = 2) {
  ChunkedEncoderConfig c;
  c.input_dim = 5;
  c.num_layers = layers;
  c.model_dim = 8;
  c.num_heads = 2;
  c.ff_dim = 12;
  c.chunk_frames = 3;
  c.lookahead_frames = 1;
  c.left_cache_frames = 4;
  return c;
}

// Runs the encoder chunk by chunk over `x` ([n*C + L x F]).
std::pair<Tensor, Tensor> stream(const ChunkedEncoder& enc, const Tensor& x) {
  const auto& c = enc.config();
  const std::size_t n = (x.rows() - c.lookahead_frames) / c.chunk_frames;
  EncoderState st = enc.initial_state();
  std::vector<Tensor> outs, las;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i * c.chunk_frames;
    auto r = enc.forward_chunk(slice_rows(x, b, b + c.chunk_frames + c.lookahead_frames), st);
    st = r.state;
    for (const auto& t : r.state.cache) CHECK(t.rows() <= c.left_cache_frames);
    outs.push_back(r.output);
    las.push_back(r.lookahead);
  }
  return {concat_rows(outs), concat_rows(las)};
}

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("lstm with zero weights and state outputs zeros") {
  std::mt19937_64 rng(1);
  Lstm lstm(3, 4, 2, rng);
  lstm.zero_();
  auto [y, st] = lstm.forward(Tensor::randn({5, 3}, rng, 1.0), lstm.initial_state());
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("lstm streaming equals one call on the concatenation") {
  std::mt19937_64 rng(2);
  Lstm lstm(3, 4, 3, rng);
  const Tensor x = Tensor::randn({7, 3}, rng, 1.0);
  auto [full, s_full] = lstm.forward(x, lstm.initial_state());
  auto [a, s_a] = lstm.forward(slice_rows(x, 0, 3), lstm.initial_state());
  auto [b, s_b] = lstm.forward(slice_rows(x, 3, 7), s_a);
  const Tensor parts[] = {a, b};
  CHECK(max_abs_diff(full, concat_rows(parts)) < 1e-10);
  for (std::size_t l = 0; l < 3; ++l) CHECK(max_abs_diff(s_full.c[l], s_b.c[l]) < 1e-10);

  auto [empty, s_e] = lstm.forward(Tensor::zeros({0, 3}), s_b);
  CHECK(empty.rows() == 0);
  CHECK(max_abs_diff(s_e.h[2], s_b.h[2]) == 0.0);
  CHECK_THROWS_AS(lstm.forward(Tensor::zeros({2, 4}), lstm.initial_state()), DimensionError);
}

TEST_CASE("lstm gradient check") {
  std::mt19937_64 rng(3);
  Lstm lstm(3, 4, 2, rng);
  Tensor x = Tensor::randn({4, 3}, rng, 1.0, true);
  NamedParameters p;
  lstm.collect("lstm", p);
  auto params = tensors_of(p);
  params.push_back(x);
  const Tensor w = Tensor::randn({4, 4}, rng, 1.0);
  auto r = grad_check([&] { return sum(mul(lstm.forward(x, lstm.initial_state()).first, w)); },
                      params);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("attention with a single key returns its value") {
  std::mt19937_64 rng(4);
  const Tensor q = Tensor::randn({3, 4}, rng, 1.0);
  const Tensor k = Tensor::randn({1, 4}, rng, 1.0);
  const Tensor v = Tensor::randn({1, 4}, rng, 1.0);
  const Tensor out = multi_head_attention(q, k, v, 2);
  REQUIRE(out.shape() == Shape{3, 4});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(out.at(r, c) == doctest::Approx(v.at(0, c)).epsilon(1e-14));
}

TEST_CASE("attention over identical keys averages the values") {
  std::mt19937_64 rng(5);
  const Tensor q = Tensor::randn({2, 4}, rng, 1.0);
  const Tensor key_row = Tensor::randn({1, 4}, rng, 1.0);
  const Tensor keys[] = {key_row, key_row, key_row};
  const Tensor v = Tensor::randn({3, 4}, rng, 1.0);
  const Tensor out = multi_head_attention(q, concat_rows(keys), v, 1);
  for (std::size_t c = 0; c < 4; ++c) {
    const double mean = (v.at(0, c) + v.at(1, c) + v.at(2, c)) / 3.0;
    CHECK(out.at(0, c) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(out.at(1, c) == doctest::Approx(mean).epsilon(1e-12));
  }
  CHECK_THROWS_AS(multi_head_attention(q, Tensor::zeros({0, 4}), Tensor::zeros({0, 4}), 1),
                  ContractError);
  CHECK_THROWS(multi_head_attention(q, key_row, key_row, 3));
}

TEST_CASE("projected attention gradient check") {
  std::mt19937_64 rng(6);
  MultiHeadAttention mha(4, 2, rng);
  Tensor q = Tensor::randn({3, 4}, rng, 1.0, true);
  Tensor kv = Tensor::randn({5, 4}, rng, 1.0, true);
  NamedParameters p;
  mha.collect("mha", p);
  auto params = tensors_of(p);
  params.push_back(q);
  params.push_back(kv);
  const Tensor w = Tensor::randn({3, 4}, rng, 1.0);
  auto r = grad_check([&] { return sum(mul(mha.forward(q, kv), w)); }, params);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("chunked encoder with uniform attention computes windowed means") {
  ChunkedEncoderConfig c;
  c.input_dim = c.model_dim = 4;
  c.num_layers = 1;
  c.num_heads = 1;
  c.ff_dim = 6;
  c.chunk_frames = 2;
  c.lookahead_frames = 1;
  c.left_cache_frames = 2;
  c.input_projection = false;
  std::mt19937_64 rng(7);
  ChunkedEncoder enc(c, rng);
  auto& layer = enc.layers()[0];
  layer.attn.query_proj().zero_();
  layer.attn.key_proj().zero_();
  set_identity(layer.attn.value_proj());
  set_identity(layer.attn.output_proj());
  layer.ff.down.zero_();

  const std::size_t n_chunks = 4, T = n_chunks * 2 + 1;
  const Tensor x = Tensor::randn({T, 4}, rng, 1.0);
  std::vector<std::vector<double>> norm(T);
  for (std::size_t t = 0; t < T; ++t) norm[t] = normalized(x.row(t));

  const auto [out, la] = stream(enc, x);
  for (std::size_t i = 0; i < n_chunks; ++i) {
    const std::size_t b = 2 * i;
    const std::size_t lo = b >= 2 ? b - 2 : 0;  // left cache of two frames
    const std::size_t hi = b + 3;                // chunk plus one lookahead frame
    std::vector<double> mean(4, 0.0);
    for (std::size_t t = lo; t < hi; ++t)
      for (std::size_t d = 0; d < 4; ++d) mean[d] += norm[t][d] / static_cast<double>(hi - lo);
    for (std::size_t q = b; q < b + 2; ++q) {
      std::vector<double> v(4);
      for (std::size_t d = 0; d < 4; ++d) v[d] = x.at(q, d) + mean[d];
      const auto expect = normalized(v);
      for (std::size_t d = 0; d < 4; ++d) CHECK(out.at(q, d) == doctest::Approx(expect[d]).epsilon(1e-10));
    }
  }
}

TEST_CASE("chunked encoder streaming equals the full-sequence path") {
  std::mt19937_64 rng(8);
  for (std::size_t layers : {1u, 2u, 3u}) {
    ChunkedEncoder enc(small_encoder(layers), rng);
    const Tensor x = Tensor::randn({5 * 3 + 1, 5}, rng, 1.0);
    const auto [out, la] = stream(enc, x);
    const auto full = enc.forward_padded(x);
    CHECK(max_abs_diff(out, full.output) < 1e-8);
    CHECK(max_abs_diff(la, full.lookahead) < 1e-8);
  }
}

TEST_CASE("chunked encoder supports a short final block") {
  std::mt19937_64 rng(9);
  ChunkedEncoder enc(small_encoder(), rng);
  const Tensor frames = Tensor::randn({3 + 3 + 2, 5}, rng, 1.0);
  const Tensor la = Tensor::randn({3, 5}, rng, 1.0);
  const std::size_t sizes[] = {3, 3, 2};
  const auto full = enc.forward_full(frames, sizes, la);
  EncoderState st = enc.initial_state();
  std::size_t start = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    const Tensor parts[] = {slice_rows(frames, start, start + sizes[b]), slice_rows(la, b, b + 1)};
    auto r = enc.forward_chunk(concat_rows(parts), st);
    st = r.state;
    CHECK(max_abs_diff(r.output, slice_rows(full.output, start, start + sizes[b])) < 1e-8);
    start += sizes[b];
  }
  CHECK_THROWS_AS(enc.forward_chunk(Tensor::zeros({5, 5}), enc.initial_state()), DimensionError);
}

TEST_CASE("chunked encoder output ignores frames beyond the lookahead") {
  std::mt19937_64 rng(10);
  ChunkedEncoder enc(small_encoder(), rng);
  const std::size_t C = 3, L = 1, n = 5;
  const Tensor x = Tensor::randn({n * C + L, 5}, rng, 1.0);
  const auto base = stream(enc, x).first;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    Tensor y = x.detach();
    // First frame past chunk i's lookahead, and everything after it.
    for (std::size_t t = (i + 1) * C + L; t < y.rows(); ++t)
      for (std::size_t d = 0; d < 5; ++d) y.mutable_data()[t * 5 + d] += 3.0;
    const auto pert = stream(enc, y).first;
    CHECK(max_abs_diff(slice_rows(base, 0, (i + 1) * C), slice_rows(pert, 0, (i + 1) * C)) == 0.0);
    // The lookahead frame itself does matter.
    CHECK(max_abs_diff(slice_rows(base, (i + 1) * C, (i + 2) * C),
                       slice_rows(pert, (i + 1) * C, (i + 2) * C)) > 0.0);
  }
}

TEST_CASE("chunked encoder gradient check on the full path") {
  std::mt19937_64 rng(11);
  ChunkedEncoder enc(small_encoder(2), rng);
  Tensor x = Tensor::randn({2 * 3 + 1, 5}, rng, 1.0, true);
  NamedParameters p;
  enc.collect("enc", p);
  auto params = tensors_of(p);
  params.push_back(x);
  const Tensor w = Tensor::randn({6, 8}, rng, 1.0);
  auto r = grad_check([&] { return sum(mul(enc.forward_padded(x).output, w)); }, params, 1e-5, 150, 1);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("causal depthwise convolution") {
  const Tensor x = Tensor({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor w = Tensor({2, 2}, {10, 100, 1, -1});  // row k multiplies frame t-k
  const Tensor b = Tensor({2}, {0.5, 0.0});
  const Tensor y = causal_depthwise_conv(x, w, b);
  CHECK(y.at(0, 0) == 10.5);
  CHECK(y.at(0, 1) == 200.0);
  CHECK(y.at(1, 0) == 30 + 1 + 0.5);
  CHECK(y.at(1, 1) == 400 - 2);
  CHECK(y.at(2, 0) == 50 + 3 + 0.5);
  CHECK(y.at(2, 1) == 600 - 4);
}

TEST_CASE("conformer-lite block") {
  std::mt19937_64 rng(12);
  ConformerLiteConfig c;
  c.dim = 8;
  c.num_heads = 2;
  c.ff_dim = 12;
  ConformerLiteBlock block(c, rng);

  const Tensor zeros = block.forward(Tensor::zeros({4, 8}));
  for (double v : zeros.data()) CHECK(v == 0.0);

  for (std::size_t T : {1u, 7u, 20u}) CHECK(block.forward(Tensor::randn({T, 8}, rng, 1.0)).shape() == Shape{T, 8});
  CHECK_THROWS_AS(block.forward(Tensor::randn({21, 8}, rng, 1.0)), ContractError);

  Tensor x = Tensor::randn({5, 8}, rng, 1.0, true);
  NamedParameters p;
  block.collect("conf", p);
  auto params = tensors_of(p);
  params.push_back(x);
  const Tensor w = Tensor::randn({5, 8}, rng, 1.0);
  auto r = grad_check([&] { return sum(mul(block.forward(x), w)); }, params, 1e-5, 200, 2);
  CHECK(r.max_rel_error < 1e-4);
}

}  // TEST_SUITE
