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

// Network building blocks. Every layer is a plain value holding parameter
// tensors; copying a layer shares its parameters.

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fsdelib/tensor.hpp"

namespace fsd {

using NamedParameters = std::vector<std::pair<std::string, Tensor>>;

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], undefined when the layer has no bias

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng,
         bool with_bias = true);

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
  Tensor forward(const Tensor& x) const;
  void zero_();
  void collect(const std::string& prefix, NamedParameters& out) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParameters& out) const;
};

// relu(x W1 + b1) W2 + b2
struct FeedForward {
  Linear up;
  Linear down;

  FeedForward() = default;
  FeedForward(std::size_t dim, std::size_t hidden, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParameters& out) const;
};

struct LstmState {
  std::vector<Tensor> h;  // per layer [1 x H]
  std::vector<Tensor> c;
};

// Stacked unidirectional LSTM, gate order (input, forget, cell, output).
class Lstm {
 public:
  Lstm() = default;
  Lstm(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_layers,
       std::mt19937_64& rng);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t num_layers() const { return layers_.size(); }

  LstmState initial_state() const;
  // x: [T x input_dim] -> [T x hidden_dim]. T may be zero.
  std::pair<Tensor, LstmState> forward(const Tensor& x,
                                       const LstmState& state) const;

  void zero_();
  void collect(const std::string& prefix, NamedParameters& out) const;

 private:
  struct Layer {
    Tensor w_ih;  // [in x 4H]
    Tensor w_hh;  // [H x 4H]
    Tensor bias;  // [4H]
  };
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::vector<Layer> layers_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t num_heads,
                     std::mt19937_64& rng);

  std::size_t dim() const { return query_.in_dim(); }
  std::size_t num_heads() const { return num_heads_; }

  // query [Tq x D], key/value source [Tk x D]; `mask` is an additive
  // [Tq x Tk] constant (0 or -inf).
  Tensor forward(const Tensor& query, const Tensor& key_value,
                 const Tensor* mask = nullptr) const;

  Linear& query_proj() { return query_; }
  Linear& key_proj() { return key_; }
  Linear& value_proj() { return value_; }
  Linear& output_proj() { return output_; }
  const Linear& output_proj() const { return output_; }

  void collect(const std::string& prefix, NamedParameters& out) const;

 private:
  std::size_t num_heads_ = 1;
  Linear query_, key_, value_, output_;
};

// Free-standing scaled dot-product attention over pre-projected heads.
Tensor multi_head_attention(const Tensor& query, const Tensor& key,
                            const Tensor& value, std::size_t num_heads,
                            const Tensor* mask = nullptr);

struct ChunkedEncoderConfig {
  std::size_t input_dim = 0;
  std::size_t num_layers = 1;
  std::size_t model_dim = 32;
  std::size_t num_heads = 2;
  std::size_t ff_dim = 64;
  std::size_t chunk_frames = 4;
  std::size_t lookahead_frames = 1;
  std::size_t left_cache_frames = 8;
  // Project input_dim -> model_dim before the first layer. Without it
  // input_dim must equal model_dim.
  bool input_projection = true;

  void validate() const;
};

// Per-layer left context: the normalized layer inputs of the most recent
// chunk frames, at most left_cache_frames rows each.
struct EncoderState {
  std::vector<Tensor> cache;
};

struct ChunkResult {
  Tensor output;     // [C x D]
  Tensor lookahead;  // [L x D], outputs at the lookahead positions
  EncoderState state;
};

struct FullResult {
  Tensor output;     // [N x D] for all chunk frames
  Tensor lookahead;  // [blocks * L x D]
};

// Streaming transformer encoder (pre-norm layers). Each chunk attends to the
// cached left context, itself, and L lookahead frames; only chunk frames enter
// the cache, so outputs never depend on input beyond the current lookahead.
class ChunkedEncoder {
 public:
  ChunkedEncoder() = default;
  ChunkedEncoder(ChunkedEncoderConfig cfg, std::mt19937_64& rng);

  const ChunkedEncoderConfig& config() const { return cfg_; }
  std::size_t output_dim() const;

  EncoderState initial_state() const;

  // chunk: [C' + L x input_dim] with 1 <= C' <= chunk_frames, the final L rows
  // being lookahead.
  ChunkResult forward_chunk(const Tensor& chunk, const EncoderState& state) const;

  // Whole-sequence path with a block attention mask. `frames` holds the chunk
  // frames of consecutive blocks; `lookahead` holds L rows per block.
  FullResult forward_full(const Tensor& frames,
                          std::span<const std::size_t> block_sizes,
                          const Tensor& lookahead) const;

  // Convenience for a padded utterance [N + L x input_dim] with N a multiple
  // of chunk_frames: lookahead rows come from the following frames.
  FullResult forward_padded(const Tensor& padded) const;

  struct Layer {
    LayerNorm attn_norm;
    MultiHeadAttention attn;
    LayerNorm ff_norm;
    FeedForward ff;
  };
  std::vector<Layer>& layers() { return layers_; }
  std::optional<Linear>& input_proj() { return input_proj_; }

  void collect(const std::string& prefix, NamedParameters& out) const;

 private:
  Tensor project(const Tensor& x) const;
  Tensor finish(const Tensor& x) const;

  ChunkedEncoderConfig cfg_;
  std::optional<Linear> input_proj_;
  std::vector<Layer> layers_;
  std::optional<LayerNorm> final_norm_;
};

struct ConformerLiteConfig {
  std::size_t dim = 32;
  std::size_t num_heads = 1;
  std::size_t ff_dim = 64;
  std::size_t kernel_size = 3;
  std::size_t max_len = 20;
};

// Half-step FF, full self-attention, causal depthwise convolution, half-step
// FF, each pre-normed with a residual; final layer norm.
class ConformerLiteBlock {
 public:
  ConformerLiteBlock() = default;
  ConformerLiteBlock(ConformerLiteConfig cfg, std::mt19937_64& rng);

  const ConformerLiteConfig& config() const { return cfg_; }
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParameters& out) const;

  Tensor& conv_weight() { return conv_weight_; }

 private:
  ConformerLiteConfig cfg_;
  LayerNorm ff1_norm_, attn_norm_, conv_norm_, ff2_norm_, out_norm_;
  FeedForward ff1_, ff2_;
  MultiHeadAttention attn_;
  Tensor conv_weight_;  // [kernel x D], row k multiplies the frame k steps back
  Tensor conv_bias_;    // [D]
};

// y[t] = sum_k w[k] * x[t-k] + b, zero for t-k < 0.
Tensor causal_depthwise_conv(const Tensor& x, const Tensor& weight,
                             const Tensor& bias);

}  // namespace fsd
