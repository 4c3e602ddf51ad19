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

#include "fsdelib/model.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "fsdelib/errors.hpp"
#include "fsdelib/text.hpp"

namespace fsd {

std::string to_string(TextEncoderKind kind) {
  return kind == TextEncoderKind::kLstm ? "lstm" : "conformer";
}

TextEncoderKind parse_text_encoder_kind(const std::string& s) {
  if (s == "lstm") return TextEncoderKind::kLstm;
  if (s == "conformer") return TextEncoderKind::kConformer;
  throw ConfigError("text encoder must be 'lstm' or 'conformer', got '" + s + "'");
}

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (vocab_size < 3) throw ConfigError("vocab_size must include blank, BOS and a token");
  if (model_dim == 0 || feature_dim == 0 || joiner_dim == 0) {
    throw ConfigError("model widths must be positive");
  }
  if (fast_chunk < 1 || slow_chunks < 1) throw ConfigError("segment sizes must be >= 1");
  if (slow_lookahead > fast_lookahead) {
    throw ConfigError("slow_lookahead cannot exceed fast_lookahead: the slow "
                      "lookahead rows come from the fast encoder's lookahead");
  }
  if (num_heads == 0 || model_dim % num_heads != 0) {
    throw ConfigError("model_dim must be divisible by num_heads");
  }
  if (merge_heads == 0 || model_dim % merge_heads != 0 || text_heads == 0 ||
      model_dim % text_heads != 0) {
    throw ConfigError("model_dim must be divisible by merge_heads and text_heads");
  }
  if (max_hypo_len < 1) throw ConfigError("max_hypo_len must be >= 1");
  if (predictor_layers < 1) throw ConfigError("predictor needs at least one layer");
}

void ModelConfig::write(KeyValueDocument& doc, const std::string& p) const {
  auto put = [&](const char* k, std::size_t v) { doc.set(p + k, std::to_string(v)); };
  put("vocab_size", vocab_size);
  put("feature_dim", feature_dim);
  put("model_dim", model_dim);
  put("num_heads", num_heads);
  put("ff_dim", ff_dim);
  put("fast_layers", fast_layers);
  put("fast_chunk", fast_chunk);
  put("fast_lookahead", fast_lookahead);
  put("fast_left_cache", fast_left_cache);
  put("slow_layers", slow_layers);
  put("slow_chunks", slow_chunks);
  put("slow_lookahead", slow_lookahead);
  put("slow_left_cache", slow_left_cache);
  put("predictor_layers", predictor_layers);
  put("joiner_dim", joiner_dim);
  doc.set(p + "deliberation", deliberation ? "true" : "false");
  doc.set(p + "text_encoder", to_string(text_encoder));
  put("text_layers", text_layers);
  put("text_heads", text_heads);
  put("merge_blocks", merge_blocks);
  put("merge_heads", merge_heads);
  put("max_hypo_len", max_hypo_len);
  doc.set(p + "share_token_embeddings", share_token_embeddings ? "true" : "false");
  doc.set(p + "seed", std::to_string(seed));
}

ModelConfig ModelConfig::read(const KeyValueDocument& doc, const std::string& p,
                              const ModelConfig& d) {
  ModelConfig c = d;
  auto get = [&](const char* k, std::size_t v) { return doc.get_size(p + k, v); };
  c.vocab_size = get("vocab_size", d.vocab_size);
  c.feature_dim = get("feature_dim", d.feature_dim);
  c.model_dim = get("model_dim", d.model_dim);
  c.num_heads = get("num_heads", d.num_heads);
  c.ff_dim = get("ff_dim", d.ff_dim);
  c.fast_layers = get("fast_layers", d.fast_layers);
  c.fast_chunk = get("fast_chunk", d.fast_chunk);
  c.fast_lookahead = get("fast_lookahead", d.fast_lookahead);
  c.fast_left_cache = get("fast_left_cache", d.fast_left_cache);
  c.slow_layers = get("slow_layers", d.slow_layers);
  c.slow_chunks = get("slow_chunks", d.slow_chunks);
  c.slow_lookahead = get("slow_lookahead", d.slow_lookahead);
  c.slow_left_cache = get("slow_left_cache", d.slow_left_cache);
  c.predictor_layers = get("predictor_layers", d.predictor_layers);
  c.joiner_dim = get("joiner_dim", d.joiner_dim);
  c.deliberation = doc.get_bool(p + "deliberation", d.deliberation);
  c.text_encoder =
      parse_text_encoder_kind(doc.get_string(p + "text_encoder", to_string(d.text_encoder)));
  c.text_layers = get("text_layers", d.text_layers);
  c.text_heads = get("text_heads", d.text_heads);
  c.merge_blocks = get("merge_blocks", d.merge_blocks);
  c.merge_heads = get("merge_heads", d.merge_heads);
  c.max_hypo_len = get("max_hypo_len", d.max_hypo_len);
  c.share_token_embeddings =
      doc.get_bool(p + "share_token_embeddings", d.share_token_embeddings);
  c.seed = static_cast<std::uint64_t>(doc.get_int(p + "seed", static_cast<std::int64_t>(d.seed)));
  return c;
}

ModelConfig ModelConfig::read(const KeyValueDocument& doc, const std::string& p) {
  return read(doc, p, ModelConfig{});
}

// ---------------------------------------------------------------------------
// TextEncoder / MergeModel / Joiner

TextEncoder::TextEncoder(const ModelConfig& cfg, Tensor embedding,
                         std::mt19937_64& rng)
    : kind_(cfg.text_encoder), max_len_(cfg.max_hypo_len), embedding_(std::move(embedding)) {
  if (kind_ == TextEncoderKind::kLstm) {
    lstm_ = Lstm(cfg.model_dim, cfg.model_dim, std::max<std::size_t>(cfg.text_layers, 1), rng);
  } else {
    ConformerLiteConfig cc;
    cc.dim = cfg.model_dim;
    cc.num_heads = cfg.text_heads;
    cc.ff_dim = cfg.ff_dim;
    cc.max_len = cfg.max_hypo_len;
    for (std::size_t i = 0; i < std::max<std::size_t>(cfg.text_layers, 1); ++i)
      blocks_.emplace_back(cc, rng);
  }
}

Tensor TextEncoder::forward(std::span<const int> tokens) const {
  std::vector<int> kept = truncate_hypothesis(tokens, max_len_);
  if (kept.empty()) kept.push_back(kBosId);
  std::vector<std::size_t> idx(kept.begin(), kept.end());
  for (auto i : idx) {
    if (i >= embedding_.rows()) {
      throw DimensionError("token id " + std::to_string(i) + " outside vocabulary");
    }
  }
  Tensor x = gather_rows(embedding_, idx);
  if (kind_ == TextEncoderKind::kLstm) return lstm_.forward(x, lstm_.initial_state()).first;
  for (const auto& b : blocks_) x = b.forward(x);
  return x;
}

void TextEncoder::collect(const std::string& prefix, NamedParameters& out,
                          bool include_embedding) const {
  if (include_embedding) out.emplace_back(prefix + ".embedding", embedding_);
  if (kind_ == TextEncoderKind::kLstm) {
    lstm_.collect(prefix + ".lstm", out);
  } else {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect(prefix + ".conformer" + std::to_string(i), out);
  }
}

MergeModel::MergeModel(const ModelConfig& cfg, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < cfg.merge_blocks; ++i) {
    blocks_.push_back(Block{LayerNorm(cfg.model_dim),
                            MultiHeadAttention(cfg.model_dim, cfg.merge_heads, rng),
                            LayerNorm(cfg.model_dim),
                            FeedForward(cfg.model_dim, cfg.ff_dim, rng)});
  }
}

Tensor MergeModel::forward(const Tensor& e_slow, const Tensor& e_text) const {
  if (e_text.rows() == 0) throw ContractError("merge needs at least one text row");
  Tensor e = e_slow;
  for (const auto& b : blocks_) {
    e = add(e, b.attn.forward(b.query_norm.forward(e), e_text));
    e = add(e, b.ff.forward(b.ff_norm.forward(e)));
  }
  return e;
}

void MergeModel::zero_output_paths() {
  for (auto& b : blocks_) {
    b.attn.output_proj().zero_();
    b.ff.down.zero_();
  }
}

void MergeModel::collect(const std::string& prefix, NamedParameters& out) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = prefix + ".b" + std::to_string(i);
    blocks_[i].query_norm.collect(p + ".query_norm", out);
    blocks_[i].attn.collect(p + ".attn", out);
    blocks_[i].ff_norm.collect(p + ".ff_norm", out);
    blocks_[i].ff.collect(p + ".ff", out);
  }
}

Tensor Joiner::forward(const Tensor& enc, const Tensor& pred) const {
  const Tensor e = enc.rank() == 2 ? enc : reshape(enc, {1, enc.numel()});
  const Tensor p = pred.rank() == 2 ? pred : reshape(pred, {1, pred.numel()});
  if (e.rows() != p.rows()) {
    throw DimensionError("joiner rows disagree: " + shape_string(e.shape()) +
                         " vs " + shape_string(p.shape()));
  }
  return output.forward(tanh(add(enc_proj.forward(e), pred_proj.forward(p))));
}

Tensor Joiner::grid(const Tensor& enc, const Tensor& pred) const {
  const std::size_t T = enc.rows(), U = pred.rows();
  const Tensor ep = enc_proj.forward(enc);
  const Tensor pp = pred_proj.forward(pred);
  std::vector<std::size_t> ti(T * U), ui(T * U);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = 0; u < U; ++u) {
      ti[t * U + u] = t;
      ui[t * U + u] = u;
    }
  return output.forward(tanh(add(gather_rows(ep, ti), gather_rows(pp, ui))));
}

void Joiner::collect(const std::string& prefix, NamedParameters& out) const {
  enc_proj.collect(prefix + ".enc_proj", out);
  pred_proj.collect(prefix + ".pred_proj", out);
  output.collect(prefix + ".output", out);
}

// ---------------------------------------------------------------------------
// FastSlowTransducer

FastSlowTransducer::FastSlowTransducer(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const std::size_t D = cfg_.model_dim;
  embedding_ = Tensor::randn({cfg_.vocab_size, D}, rng, 0.3, true);

  ChunkedEncoderConfig fast;
  fast.input_dim = cfg_.feature_dim;
  fast.num_layers = cfg_.fast_layers;
  fast.model_dim = D;
  fast.num_heads = cfg_.num_heads;
  fast.ff_dim = cfg_.ff_dim;
  fast.chunk_frames = cfg_.fast_chunk;
  fast.lookahead_frames = cfg_.fast_lookahead;
  fast.left_cache_frames = cfg_.fast_left_cache;
  fast.input_projection = true;
  fast_ = ChunkedEncoder(fast, rng);

  ChunkedEncoderConfig slow = fast;
  slow.input_dim = D;
  slow.num_layers = cfg_.slow_layers;
  slow.chunk_frames = cfg_.slow_segment_frames();
  slow.lookahead_frames = cfg_.slow_lookahead;
  slow.left_cache_frames = cfg_.slow_left_cache;
  slow.input_projection = false;
  slow_ = ChunkedEncoder(slow, rng);

  predictor_ = Lstm(D, D, cfg_.predictor_layers, rng);
  joiner_.enc_proj = Linear(D, cfg_.joiner_dim, rng);
  joiner_.pred_proj = Linear(D, cfg_.joiner_dim, rng, false);
  joiner_.output = Linear(cfg_.joiner_dim, cfg_.vocab_size, rng);

  if (cfg_.deliberation) {
    cfg_.deliberation = false;
    enable_deliberation(cfg_.seed + 1);
  }
}

void FastSlowTransducer::enable_deliberation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  cfg_.deliberation = true;
  Tensor emb = embedding_;
  if (!cfg_.share_token_embeddings) emb = Tensor::randn({cfg_.vocab_size, cfg_.model_dim}, rng, 0.3, true);
  text_.emplace(cfg_, emb, rng);
  merge_.emplace(cfg_, rng);
  merge_->zero_output_paths();
}

std::size_t FastSlowTransducer::padded_frames(std::size_t frames) const {
  const std::size_t C = cfg_.fast_chunk;
  return (frames + C - 1) / C * C;
}

Tensor FastSlowTransducer::pad_features(const Tensor& features) const {
  if (features.rank() != 2 || features.cols() != cfg_.feature_dim) {
    throw DimensionError("features must be [T x " + std::to_string(cfg_.feature_dim) +
                         "], got " + shape_string(features.shape()));
  }
  if (features.rows() == 0) throw ContractError("empty utterance");
  const std::size_t T = features.rows();
  const std::size_t total = padded_frames(T) + cfg_.fast_lookahead;
  if (total == T) return features;
  const Tensor parts[] = {features, Tensor::zeros({total - T, cfg_.feature_dim})};
  return concat_rows(parts);
}

std::vector<std::size_t> FastSlowTransducer::slow_block_sizes(std::size_t padded) const {
  const std::size_t S = cfg_.slow_segment_frames();
  std::vector<std::size_t> sizes;
  for (std::size_t start = 0; start < padded; start += S)
    sizes.push_back(std::min(S, padded - start));
  return sizes;
}

EncoderOutputs FastSlowTransducer::encode(const Tensor& features) const {
  const Tensor padded = pad_features(features);
  auto fast = fast_.forward_padded(padded);
  const std::size_t Tp = fast.output.rows();
  const auto sizes = slow_block_sizes(Tp);
  const std::size_t Lf = cfg_.fast_lookahead, Ls = cfg_.slow_lookahead;
  std::vector<std::size_t> la_idx;
  std::size_t end = 0;
  for (auto s : sizes) {
    end += s;
    const std::size_t last_chunk = end / cfg_.fast_chunk - 1;
    for (std::size_t i = 0; i < Ls; ++i) la_idx.push_back(last_chunk * Lf + i);
  }
  const Tensor slow_la = Ls > 0 ? gather_rows(fast.lookahead, la_idx)
                                : Tensor::zeros({0, cfg_.model_dim});
  auto slow = slow_.forward_full(fast.output, sizes, slow_la);
  return {fast.output, fast.lookahead, slow.output};
}

void FastSlowTransducer::check_tokens(std::span<const int> tokens) const {
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size) {
      throw DimensionError("token id " + std::to_string(t) + " outside vocabulary of " +
                           std::to_string(cfg_.vocab_size));
    }
  }
}

std::pair<Tensor, LstmState> FastSlowTransducer::predictor_forward(
    std::span<const int> tokens, const LstmState& state) const {
  check_tokens(tokens);
  std::vector<std::size_t> idx(tokens.begin(), tokens.end());
  const Tensor x = idx.empty() ? Tensor::zeros({0, cfg_.model_dim})
                               : gather_rows(embedding_, idx);
  return predictor_.forward(x, state);
}

Tensor FastSlowTransducer::predictor_sequence(std::span<const int> tokens) const {
  std::vector<int> seq{kBosId};
  for (int t : tokens) {
    if (t == kBlankId) throw ContractError("predictor input contains blank");
    seq.push_back(t);
  }
  return predictor_forward(seq, predictor_.initial_state()).first;
}

Tensor FastSlowTransducer::lattice(const Tensor& enc, const Tensor& pred) const {
  const Tensor lp = log_softmax(joiner_.grid(enc, pred));
  return reshape(lp, {enc.rows(), pred.rows(), cfg_.vocab_size});
}

Tensor FastSlowTransducer::encode_deliberation_text(std::span<const int> y_p) const {
  if (!text_) throw ContractError("model has no deliberation branch");
  check_tokens(y_p);
  return text_->forward(y_p);
}

Tensor FastSlowTransducer::merge_forward(const Tensor& e_slow, const Tensor& e_text) const {
  if (!merge_) throw ContractError("model has no deliberation branch");
  return merge_->forward(e_slow, e_text);
}

Tensor FastSlowTransducer::encode_deliberation(const Tensor& e_slow,
                                               std::span<const int> y_p) const {
  if (!cfg_.deliberation) return e_slow;
  return merge_forward(e_slow, encode_deliberation_text(y_p));
}

Tensor FastSlowTransducer::combine_segments(
    const Tensor& e_slow, const std::vector<std::vector<int>>& partials) const {
  if (!cfg_.deliberation) return e_slow;
  const auto sizes = slow_block_sizes(e_slow.rows());
  if (partials.size() != sizes.size()) {
    throw DimensionError("need one partial hypothesis per slow segment: " +
                         std::to_string(sizes.size()) + " segments, got " +
                         std::to_string(partials.size()));
  }
  std::vector<Tensor> parts;
  std::size_t start = 0;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    parts.push_back(encode_deliberation(slice_rows(e_slow, start, start + sizes[j]),
                                        partials[j]));
    start += sizes[j];
  }
  return concat_rows(parts);
}

NamedParameters FastSlowTransducer::parameters() const {
  NamedParameters out;
  out.emplace_back("embedding", embedding_);
  fast_.collect("fast", out);
  slow_.collect("slow", out);
  predictor_.collect("predictor", out);
  joiner_.collect("joiner", out);
  if (text_) text_->collect("text", out, !cfg_.share_token_embeddings);
  if (merge_) merge_->collect("merge", out);
  return out;
}

std::vector<Tensor> FastSlowTransducer::parameter_tensors() const {
  std::vector<Tensor> out;
  for (auto& [n, t] : parameters()) out.push_back(t);
  return out;
}

Checkpoint FastSlowTransducer::to_checkpoint() const {
  Checkpoint ckpt;
  KeyValueDocument doc;
  cfg_.write(doc, "");
  ckpt.metadata = doc.serialize();
  for (auto& [n, t] : parameters()) ckpt.tensors.emplace_back(n, t.detach());
  return ckpt;
}

FastSlowTransducer FastSlowTransducer::from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig cfg = ModelConfig::read(KeyValueDocument::parse(ckpt.metadata), "");
  FastSlowTransducer model(cfg);
  model.load_parameters(ckpt);
  return model;
}

void FastSlowTransducer::load_parameters(const Checkpoint& ckpt) {
  std::set<std::string> used;
  for (auto& [name, param] : parameters()) {
    const Tensor* src = ckpt.find(name);
    if (!src) throw FormatError("checkpoint lacks parameter '" + name + "'");
    if (src->shape() != param.shape()) {
      throw FormatError("parameter '" + name + "' has shape " +
                        shape_string(src->shape()) + " in checkpoint, model expects " +
                        shape_string(param.shape()));
    }
    Tensor dst = param;
    std::copy(src->data().begin(), src->data().end(), dst.mutable_data().begin());
    used.insert(name);
  }
  for (const auto& [name, t] : ckpt.tensors) {
    if (!used.count(name)) throw FormatError("checkpoint has unknown parameter '" + name + "'");
  }
}

}  // namespace fsd
