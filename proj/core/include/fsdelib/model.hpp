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

// Fast-slow encoder transducer with a streaming deliberation branch.
//
//   features -> fast encoder -> e_fast --------------------------+
//                    |                                            |
//                    +-> slow encoder (K fast chunks) -> e_slow    |
//                                                      |          |
//   y_p -> shared embedding -> text encoder -> e_text -> merge -> e_comb
//                                                                 |
//   tokens -> shared embedding -> predictor ----------------> joiner (shared)
//
// Token ids: 0 is blank (also the augmentation mask), 1 is the BOS sentinel.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsdelib/checkpoint.hpp"
#include "fsdelib/keyvalue.hpp"
#include "fsdelib/layers.hpp"
#include "fsdelib/tensor.hpp"

namespace fsd {

inline constexpr int kBlankId = 0;
inline constexpr int kBosId = 1;

enum class TextEncoderKind { kLstm, kConformer };

std::string to_string(TextEncoderKind kind);
TextEncoderKind parse_text_encoder_kind(const std::string& s);

struct ModelConfig {
  std::size_t vocab_size = 12;
  std::size_t feature_dim = 16;
  std::size_t model_dim = 32;
  std::size_t num_heads = 2;
  std::size_t ff_dim = 64;

  std::size_t fast_layers = 2;
  std::size_t fast_chunk = 4;
  std::size_t fast_lookahead = 1;
  std::size_t fast_left_cache = 8;

  std::size_t slow_layers = 1;
  std::size_t slow_chunks = 5;  // K: fast chunks per slow segment
  std::size_t slow_lookahead = 1;
  std::size_t slow_left_cache = 20;

  std::size_t predictor_layers = 3;
  std::size_t joiner_dim = 32;

  bool deliberation = false;
  TextEncoderKind text_encoder = TextEncoderKind::kConformer;
  std::size_t text_layers = 1;
  std::size_t text_heads = 1;
  std::size_t merge_blocks = 1;
  std::size_t merge_heads = 1;
  std::size_t max_hypo_len = 20;
  bool share_token_embeddings = true;

  std::uint64_t seed = 1;

  std::size_t slow_segment_frames() const { return fast_chunk * slow_chunks; }
  void validate() const;

  void write(KeyValueDocument& doc, const std::string& prefix = "model.") const;
  static ModelConfig read(const KeyValueDocument& doc,
                          const std::string& prefix,
                          const ModelConfig& defaults);
  static ModelConfig read(const KeyValueDocument& doc,
                          const std::string& prefix = "model.");
};

// Deliberation text encoder over the partial hypothesis.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const ModelConfig& cfg, Tensor embedding, std::mt19937_64& rng);

  // Keeps the most recent max_len tokens; an empty hypothesis becomes the BOS
  // sentinel.
  Tensor forward(std::span<const int> tokens) const;
  const Tensor& embedding() const { return embedding_; }
  void collect(const std::string& prefix, NamedParameters& out,
               bool include_embedding) const;

 private:
  TextEncoderKind kind_ = TextEncoderKind::kConformer;
  std::size_t max_len_ = 20;
  Tensor embedding_;
  Lstm lstm_;
  std::vector<ConformerLiteBlock> blocks_;
};

// Blocks of [acoustic-query attention over text, feed-forward], pre-norm
// residual: e <- e + Attn(LN(e), e_text); e <- e + FF(LN(e)).
class MergeModel {
 public:
  MergeModel() = default;
  MergeModel(const ModelConfig& cfg, std::mt19937_64& rng);

  Tensor forward(const Tensor& e_slow, const Tensor& e_text) const;
  // Zeroes attention output projections and FF output layers, making the
  // block an exact identity on e_slow.
  void zero_output_paths();
  void collect(const std::string& prefix, NamedParameters& out) const;

  struct Block {
    LayerNorm query_norm;
    MultiHeadAttention attn;
    LayerNorm ff_norm;
    FeedForward ff;
  };
  std::vector<Block>& blocks() { return blocks_; }

 private:
  std::vector<Block> blocks_;
};

struct Joiner {
  Linear enc_proj;   // D -> J
  Linear pred_proj;  // D -> J, no bias
  Linear output;     // J -> V

  // Rows of `enc` combined with rows of `pred`: [1 x D] each, or matching
  // counts. Returns logits.
  Tensor forward(const Tensor& enc, const Tensor& pred) const;
  // Every (enc row t, pred row u) pair, row-major in t: [T*U x V] logits.
  Tensor grid(const Tensor& enc, const Tensor& pred) const;
  void collect(const std::string& prefix, NamedParameters& out) const;
};

struct EncoderOutputs {
  Tensor e_fast;           // [T' x D]
  Tensor fast_lookahead;   // [chunks * L_f x D]
  Tensor e_slow;           // [T' x D]
};

class FastSlowTransducer {
 public:
  explicit FastSlowTransducer(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  bool has_deliberation() const { return cfg_.deliberation; }

  // Adds a freshly initialized text encoder and merge model whose output
  // paths are zero, so the model initially behaves like the base model.
  void enable_deliberation(std::uint64_t seed);

  // Frames after padding to a whole number of fast chunks.
  std::size_t padded_frames(std::size_t frames) const;
  // [padded_frames + L_f x F]: zero rows fill the final chunk and lookahead.
  Tensor pad_features(const Tensor& features) const;
  // Slow segment sizes covering `padded` frames.
  std::vector<std::size_t> slow_block_sizes(std::size_t padded) const;

  // Whole-utterance fast/slow encoders equivalent to chunk-by-chunk streaming.
  EncoderOutputs encode(const Tensor& features) const;

  // Predictor over [BOS, tokens...]: [U+1 x D].
  Tensor predictor_sequence(std::span<const int> tokens) const;
  // Incremental predictor step(s) for decoding.
  std::pair<Tensor, LstmState> predictor_forward(std::span<const int> tokens,
                                                 const LstmState& state) const;
  LstmState predictor_initial_state() const { return predictor_.initial_state(); }

  // [T x (U+1) x V] log-probabilities.
  Tensor lattice(const Tensor& enc, const Tensor& pred) const;

  Tensor encode_deliberation_text(std::span<const int> y_p) const;
  Tensor merge_forward(const Tensor& e_slow, const Tensor& e_text) const;
  // e_comb for one slow segment; identity without deliberation.
  Tensor encode_deliberation(const Tensor& e_slow, std::span<const int> y_p) const;
  // e_comb over a whole utterance given one partial hypothesis per segment.
  Tensor combine_segments(const Tensor& e_slow,
                          const std::vector<std::vector<int>>& partials) const;

  const ChunkedEncoder& fast_encoder() const { return fast_; }
  const ChunkedEncoder& slow_encoder() const { return slow_; }
  const Joiner& joiner() const { return joiner_; }
  Joiner& joiner() { return joiner_; }
  const Tensor& token_embedding() const { return embedding_; }
  const TextEncoder* text_encoder() const { return text_ ? &*text_ : nullptr; }
  MergeModel* merge_model() { return merge_ ? &*merge_ : nullptr; }
  ChunkedEncoder& mutable_slow_encoder() { return slow_; }
  ChunkedEncoder& mutable_fast_encoder() { return fast_; }

  // Unique parameters; the shared embedding appears once.
  NamedParameters parameters() const;
  std::vector<Tensor> parameter_tensors() const;

  Checkpoint to_checkpoint() const;
  static FastSlowTransducer from_checkpoint(const Checkpoint& ckpt);
  void load_parameters(const Checkpoint& ckpt);

 private:
  void check_tokens(std::span<const int> tokens) const;

  ModelConfig cfg_;
  Tensor embedding_;  // [V x D]
  ChunkedEncoder fast_;
  ChunkedEncoder slow_;
  Lstm predictor_;
  Joiner joiner_;
  std::optional<TextEncoder> text_;
  std::optional<MergeModel> merge_;
};

}  // namespace fsd
