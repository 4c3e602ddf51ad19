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

#include "fsdelib/layers.hpp"

#include <cmath>
#include <limits>

#include "fsdelib/errors.hpp"

namespace fsd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void add_param(NamedParameters& out, const std::string& name, const Tensor& t) {
  if (t.defined()) out.emplace_back(name, t);
}

void zero_tensor(Tensor& t) {
  if (!t.defined()) return;
  for (auto& v : t.mutable_data()) v = 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng,
               bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Tensor::uniform({in, out}, rng, bound, true);
  if (with_bias) bias = Tensor::zeros({out}, true);
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.cols() != in_dim()) {
    throw DimensionError("linear layer expects width " +
                         std::to_string(in_dim()) + ", got " +
                         shape_string(x.shape()));
  }
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

void Linear::zero_() {
  zero_tensor(weight);
  zero_tensor(bias);
}

void Linear::collect(const std::string& prefix, NamedParameters& out) const {
  add_param(out, prefix + ".weight", weight);
  add_param(out, prefix + ".bias", bias);
}

LayerNorm::LayerNorm(std::size_t dim)
    : gain(Tensor::full({dim}, 1.0, true)), bias(Tensor::zeros({dim}, true)) {}

Tensor LayerNorm::forward(const Tensor& x) const {
  return layer_norm(x, gain, bias);
}

void LayerNorm::collect(const std::string& prefix, NamedParameters& out) const {
  add_param(out, prefix + ".gain", gain);
  add_param(out, prefix + ".bias", bias);
}

FeedForward::FeedForward(std::size_t dim, std::size_t hidden,
                         std::mt19937_64& rng)
    : up(dim, hidden, rng), down(hidden, dim, rng) {}

Tensor FeedForward::forward(const Tensor& x) const {
  return down.forward(relu(up.forward(x)));
}

void FeedForward::collect(const std::string& prefix, NamedParameters& out) const {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
}

// ---------------------------------------------------------------------------
// LSTM

Lstm::Lstm(std::size_t input_dim, std::size_t hidden_dim,
           std::size_t num_layers, std::mt19937_64& rng)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < num_layers; ++l) {
    Layer layer;
    layer.w_ih = Tensor::uniform({in, 4 * hidden_dim}, rng, bound, true);
    layer.w_hh = Tensor::uniform({hidden_dim, 4 * hidden_dim}, rng, bound, true);
    layer.bias = Tensor::zeros({4 * hidden_dim}, true);
    // Forget gate bias starts at 1.
    auto b = layer.bias.mutable_data();
    for (std::size_t j = hidden_dim; j < 2 * hidden_dim; ++j) b[j] = 1.0;
    layers_.push_back(std::move(layer));
    in = hidden_dim;
  }
}

LstmState Lstm::initial_state() const {
  LstmState s;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    s.h.push_back(Tensor::zeros({1, hidden_dim_}));
    s.c.push_back(Tensor::zeros({1, hidden_dim_}));
  }
  return s;
}

std::pair<Tensor, LstmState> Lstm::forward(const Tensor& x,
                                           const LstmState& state) const {
  if (x.rank() != 2 || x.cols() != input_dim_) {
    throw DimensionError("lstm expects [T x " + std::to_string(input_dim_) +
                         "], got " + shape_string(x.shape()));
  }
  if (state.h.size() != layers_.size() || state.c.size() != layers_.size()) {
    throw DimensionError("lstm state has " + std::to_string(state.h.size()) +
                         " layers, expected " + std::to_string(layers_.size()));
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (state.h[l].numel() != hidden_dim_ || state.c[l].numel() != hidden_dim_) {
      throw DimensionError("lstm state width mismatch at layer " +
                           std::to_string(l));
    }
  }
  const std::size_t T = x.rows(), H = hidden_dim_;
  LstmState next = state;
  Tensor input = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (T == 0) break;
    const Tensor xw = add(matmul(input, layer.w_ih), layer.bias);
    Tensor h = next.h[l];
    Tensor c = next.c[l];
    std::vector<Tensor> outputs;
    outputs.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      const Tensor gates = add(slice_rows(xw, t, t + 1), matmul(h, layer.w_hh));
      const Tensor i = sigmoid(slice_cols(gates, 0, H));
      const Tensor f = sigmoid(slice_cols(gates, H, 2 * H));
      const Tensor g = tanh(slice_cols(gates, 2 * H, 3 * H));
      const Tensor o = sigmoid(slice_cols(gates, 3 * H, 4 * H));
      c = add(mul(f, c), mul(i, g));
      h = mul(o, tanh(c));
      outputs.push_back(h);
    }
    next.h[l] = h;
    next.c[l] = c;
    input = concat_rows(outputs);
  }
  if (T == 0) return {Tensor::zeros({0, H}), next};
  return {input, next};
}

void Lstm::zero_() {
  for (auto& l : layers_) {
    zero_tensor(l.w_ih);
    zero_tensor(l.w_hh);
    zero_tensor(l.bias);
  }
}

void Lstm::collect(const std::string& prefix, NamedParameters& out) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    add_param(out, p + ".w_ih", layers_[l].w_ih);
    add_param(out, p + ".w_hh", layers_[l].w_hh);
    add_param(out, p + ".bias", layers_[l].bias);
  }
}

// ---------------------------------------------------------------------------
// Attention

Tensor multi_head_attention(const Tensor& query, const Tensor& key,
                            const Tensor& value, std::size_t num_heads,
                            const Tensor* mask) {
  if (key.rows() == 0) {
    throw ContractError("attention over zero keys");
  }
  const std::size_t D = query.cols();
  if (num_heads == 0 || D % num_heads != 0) {
    throw DimensionError("model dim " + std::to_string(D) +
                         " not divisible by " + std::to_string(num_heads) +
                         " heads");
  }
  if (key.cols() != D || value.cols() != D || key.rows() != value.rows()) {
    throw DimensionError("attention key/value shape mismatch: " +
                         shape_string(key.shape()) + " / " +
                         shape_string(value.shape()));
  }
  if (mask && (mask->rows() != query.rows() || mask->cols() != key.rows())) {
    throw DimensionError("attention mask " + shape_string(mask->shape()) +
                         " does not match scores");
  }
  const std::size_t dh = D / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const Tensor q = num_heads == 1 ? query : slice_cols(query, h * dh, (h + 1) * dh);
    const Tensor k = num_heads == 1 ? key : slice_cols(key, h * dh, (h + 1) * dh);
    const Tensor v = num_heads == 1 ? value : slice_cols(value, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt);
    if (mask) scores = add(scores, *mask);
    heads.push_back(matmul(softmax(scores), v));
  }
  return num_heads == 1 ? heads[0] : concat_cols(heads);
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t num_heads,
                                       std::mt19937_64& rng)
    : num_heads_(num_heads),
      query_(dim, dim, rng),
      key_(dim, dim, rng),
      value_(dim, dim, rng),
      output_(dim, dim, rng) {
  if (num_heads == 0 || dim % num_heads != 0) {
    throw DimensionError("model dim " + std::to_string(dim) +
                         " not divisible by " + std::to_string(num_heads) +
                         " heads");
  }
}

Tensor MultiHeadAttention::forward(const Tensor& query, const Tensor& key_value,
                                   const Tensor* mask) const {
  if (key_value.rows() == 0) throw ContractError("attention over zero keys");
  const Tensor q = query_.forward(query);
  const Tensor k = key_.forward(key_value);
  const Tensor v = value_.forward(key_value);
  return output_.forward(multi_head_attention(q, k, v, num_heads_, mask));
}

void MultiHeadAttention::collect(const std::string& prefix,
                                 NamedParameters& out) const {
  query_.collect(prefix + ".q", out);
  key_.collect(prefix + ".k", out);
  value_.collect(prefix + ".v", out);
  output_.collect(prefix + ".o", out);
}

// ---------------------------------------------------------------------------
// Chunked encoder

void ChunkedEncoderConfig::validate() const {
  if (chunk_frames < 1) throw ConfigError("chunk_frames must be >= 1");
  if (input_dim == 0 || model_dim == 0) throw ConfigError("zero encoder width");
  if (!input_projection && input_dim != model_dim) {
    throw ConfigError("encoder without input projection needs input_dim == model_dim");
  }
  if (num_layers > 0 && (num_heads == 0 || model_dim % num_heads != 0)) {
    throw ConfigError("encoder model_dim not divisible by num_heads");
  }
}

ChunkedEncoder::ChunkedEncoder(ChunkedEncoderConfig cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.input_projection) {
    input_proj_.emplace(cfg_.input_dim, cfg_.model_dim, rng);
  }
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    layers_.push_back(Layer{LayerNorm(cfg_.model_dim),
                            MultiHeadAttention(cfg_.model_dim, cfg_.num_heads, rng),
                            LayerNorm(cfg_.model_dim),
                            FeedForward(cfg_.model_dim, cfg_.ff_dim, rng)});
  }
  if (cfg_.num_layers > 0) final_norm_.emplace(cfg_.model_dim);
}

std::size_t ChunkedEncoder::output_dim() const {
  return cfg_.input_projection || cfg_.num_layers > 0 ? cfg_.model_dim
                                                      : cfg_.input_dim;
}

EncoderState ChunkedEncoder::initial_state() const {
  EncoderState s;
  for (std::size_t l = 0; l < layers_.size(); ++l)
    s.cache.push_back(Tensor::zeros({0, cfg_.model_dim}));
  return s;
}

Tensor ChunkedEncoder::project(const Tensor& x) const {
  if (x.cols() != cfg_.input_dim) {
    throw DimensionError("encoder expects width " + std::to_string(cfg_.input_dim) +
                         ", got " + shape_string(x.shape()));
  }
  return input_proj_ ? input_proj_->forward(x) : x;
}

Tensor ChunkedEncoder::finish(const Tensor& x) const {
  return final_norm_ ? final_norm_->forward(x) : x;
}

ChunkResult ChunkedEncoder::forward_chunk(const Tensor& chunk,
                                          const EncoderState& state) const {
  const std::size_t L = cfg_.lookahead_frames;
  if (chunk.rank() != 2 || chunk.rows() < L + 1) {
    throw DimensionError("chunk " + shape_string(chunk.shape()) +
                         " must carry at least one frame plus " +
                         std::to_string(L) + " lookahead frames");
  }
  const std::size_t C = chunk.rows() - L;
  if (C > cfg_.chunk_frames) {
    throw DimensionError("chunk of " + std::to_string(C) +
                         " frames exceeds configured chunk_frames " +
                         std::to_string(cfg_.chunk_frames));
  }
  if (state.cache.size() != layers_.size()) {
    throw DimensionError("encoder state has " + std::to_string(state.cache.size()) +
                         " layer caches, expected " + std::to_string(layers_.size()));
  }
  ChunkResult result;
  result.state.cache.resize(layers_.size());
  Tensor x = project(chunk);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const Tensor h = layer.attn_norm.forward(x);
    const Tensor parts[] = {state.cache[l], h};
    const Tensor kv = concat_rows(parts);
    x = add(x, layer.attn.forward(h, kv));
    x = add(x, layer.ff.forward(layer.ff_norm.forward(x)));

    const std::size_t M = cfg_.left_cache_frames;
    const std::size_t cached = state.cache[l].rows();
    const std::size_t total = cached + C;  // chunk rows of kv end at `total`
    const std::size_t keep = std::min(M, total);
    result.state.cache[l] = slice_rows(kv, total - keep, total).detach();
  }
  x = finish(x);
  result.output = slice_rows(x, 0, C);
  result.lookahead = slice_rows(x, C, C + L);
  return result;
}

FullResult ChunkedEncoder::forward_full(const Tensor& frames,
                                        std::span<const std::size_t> block_sizes,
                                        const Tensor& lookahead) const {
  const std::size_t L = cfg_.lookahead_frames;
  const std::size_t nblocks = block_sizes.size();
  std::size_t N = 0;
  for (auto b : block_sizes) {
    if (b == 0 || b > cfg_.chunk_frames) {
      throw DimensionError("block of " + std::to_string(b) +
                           " frames outside [1, chunk_frames]");
    }
    N += b;
  }
  if (frames.rows() != N) {
    throw DimensionError("frames have " + std::to_string(frames.rows()) +
                         " rows, blocks sum to " + std::to_string(N));
  }
  if (lookahead.rows() != nblocks * L) {
    throw DimensionError("lookahead needs " + std::to_string(nblocks * L) +
                         " rows, got " + std::to_string(lookahead.rows()));
  }

  // Augmented sequence: block b's chunk frames followed by its lookahead rows.
  std::vector<std::size_t> gather_idx;
  std::vector<std::size_t> block_of, frame_of;  // frame_of = SIZE_MAX for lookahead
  std::vector<std::size_t> chunk_pos, la_pos;
  constexpr std::size_t kLookahead = static_cast<std::size_t>(-1);
  std::size_t start = 0;
  for (std::size_t b = 0; b < nblocks; ++b) {
    for (std::size_t i = 0; i < block_sizes[b]; ++i) {
      chunk_pos.push_back(gather_idx.size());
      gather_idx.push_back(start + i);
      block_of.push_back(b);
      frame_of.push_back(start + i);
    }
    for (std::size_t i = 0; i < L; ++i) {
      la_pos.push_back(gather_idx.size());
      gather_idx.push_back(N + b * L + i);
      block_of.push_back(b);
      frame_of.push_back(kLookahead);
    }
    start += block_sizes[b];
  }
  const std::size_t A = gather_idx.size();
  std::vector<std::size_t> block_start(nblocks);
  start = 0;
  for (std::size_t b = 0; b < nblocks; ++b) {
    block_start[b] = start;
    start += block_sizes[b];
  }
  std::vector<double> mask_data(A * A, kNegInf);
  const std::size_t M = cfg_.left_cache_frames;
  for (std::size_t q = 0; q < A; ++q) {
    const std::size_t bq = block_of[q];
    const std::size_t lo = block_start[bq] >= M ? block_start[bq] - M : 0;
    for (std::size_t k = 0; k < A; ++k) {
      const std::size_t bk = block_of[k];
      const bool same = bk == bq;
      const bool left = bk < bq && frame_of[k] != kLookahead && frame_of[k] >= lo;
      if (same || left) mask_data[q * A + k] = 0.0;
    }
  }
  const Tensor mask({A, A}, std::move(mask_data));

  const Tensor table_parts[] = {frames, lookahead};
  Tensor x = project(gather_rows(concat_rows(table_parts), gather_idx));
  for (const Layer& layer : layers_) {
    const Tensor h = layer.attn_norm.forward(x);
    x = add(x, layer.attn.forward(h, h, &mask));
    x = add(x, layer.ff.forward(layer.ff_norm.forward(x)));
  }
  x = finish(x);
  FullResult result;
  result.output = gather_rows(x, chunk_pos);
  result.lookahead = L > 0 ? gather_rows(x, la_pos) : Tensor::zeros({0, x.cols()});
  return result;
}

FullResult ChunkedEncoder::forward_padded(const Tensor& padded) const {
  const std::size_t C = cfg_.chunk_frames, L = cfg_.lookahead_frames;
  if (padded.rows() < L || (padded.rows() - L) % C != 0 || padded.rows() == L) {
    throw DimensionError("padded input of " + std::to_string(padded.rows()) +
                         " rows is not a whole number of chunks plus lookahead");
  }
  const std::size_t N = padded.rows() - L;
  const std::size_t nblocks = N / C;
  std::vector<std::size_t> sizes(nblocks, C);
  std::vector<std::size_t> la_idx;
  for (std::size_t b = 0; b < nblocks; ++b)
    for (std::size_t i = 0; i < L; ++i) la_idx.push_back((b + 1) * C + i);
  const Tensor frames = slice_rows(padded, 0, N);
  const Tensor la = L > 0 ? gather_rows(padded, la_idx)
                          : Tensor::zeros({0, padded.cols()});
  return forward_full(frames, sizes, la);
}

void ChunkedEncoder::collect(const std::string& prefix, NamedParameters& out) const {
  if (input_proj_) input_proj_->collect(prefix + ".input", out);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    layers_[l].attn_norm.collect(p + ".attn_norm", out);
    layers_[l].attn.collect(p + ".attn", out);
    layers_[l].ff_norm.collect(p + ".ff_norm", out);
    layers_[l].ff.collect(p + ".ff", out);
  }
  if (final_norm_) final_norm_->collect(prefix + ".final_norm", out);
}

// ---------------------------------------------------------------------------
// Conformer-lite

Tensor causal_depthwise_conv(const Tensor& x, const Tensor& weight,
                             const Tensor& bias) {
  const std::size_t T = x.rows(), D = x.cols(), K = weight.rows();
  if (weight.cols() != D || bias.numel() != D) {
    throw DimensionError("depthwise conv weight/bias width mismatch");
  }
  Tensor y;
  for (std::size_t k = 0; k < K && k < T; ++k) {
    Tensor shifted = x;
    if (k > 0) {
      const Tensor parts[] = {Tensor::zeros({k, D}), slice_rows(x, 0, T - k)};
      shifted = concat_rows(parts);
    }
    const Tensor term = mul(shifted, slice_rows(weight, k, k + 1));
    y = y.defined() ? add(y, term) : term;
  }
  return add(y, bias);
}

ConformerLiteBlock::ConformerLiteBlock(ConformerLiteConfig cfg,
                                       std::mt19937_64& rng)
    : cfg_(cfg),
      ff1_norm_(cfg.dim),
      attn_norm_(cfg.dim),
      conv_norm_(cfg.dim),
      ff2_norm_(cfg.dim),
      out_norm_(cfg.dim),
      ff1_(cfg.dim, cfg.ff_dim, rng),
      ff2_(cfg.dim, cfg.ff_dim, rng),
      attn_(cfg.dim, cfg.num_heads, rng) {
  if (cfg.kernel_size == 0) throw ConfigError("conformer kernel_size must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.kernel_size));
  conv_weight_ = Tensor::uniform({cfg.kernel_size, cfg.dim}, rng, bound, true);
  conv_bias_ = Tensor::zeros({cfg.dim}, true);
}

Tensor ConformerLiteBlock::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != cfg_.dim) {
    throw DimensionError("conformer block expects [T x " + std::to_string(cfg_.dim) +
                         "], got " + shape_string(x.shape()));
  }
  if (x.rows() > cfg_.max_len) {
    throw ContractError("conformer block input of " + std::to_string(x.rows()) +
                        " tokens exceeds max_len " + std::to_string(cfg_.max_len));
  }
  if (x.rows() == 0) throw ContractError("conformer block on empty input");
  Tensor h = add(x, scale(ff1_.forward(ff1_norm_.forward(x)), 0.5));
  const Tensor a = attn_norm_.forward(h);
  h = add(h, attn_.forward(a, a));
  h = add(h, causal_depthwise_conv(conv_norm_.forward(h), conv_weight_, conv_bias_));
  h = add(h, scale(ff2_.forward(ff2_norm_.forward(h)), 0.5));
  return out_norm_.forward(h);
}

void ConformerLiteBlock::collect(const std::string& prefix,
                                 NamedParameters& out) const {
  ff1_norm_.collect(prefix + ".ff1_norm", out);
  ff1_.collect(prefix + ".ff1", out);
  attn_norm_.collect(prefix + ".attn_norm", out);
  attn_.collect(prefix + ".attn", out);
  conv_norm_.collect(prefix + ".conv_norm", out);
  add_param(out, prefix + ".conv.weight", conv_weight_);
  add_param(out, prefix + ".conv.bias", conv_bias_);
  ff2_norm_.collect(prefix + ".ff2_norm", out);
  ff2_.collect(prefix + ".ff2", out);
  out_norm_.collect(prefix + ".out_norm", out);
}

}  // namespace fsd
