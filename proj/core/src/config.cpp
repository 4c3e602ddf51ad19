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

#include "fsdelib/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fsdelib/errors.hpp"

namespace fsd {

namespace {

const char* const kModelKeys[] = {
    "vocab_size", "feature_dim", "model_dim", "num_heads", "ff_dim",
    "fast_layers", "fast_chunk", "fast_lookahead", "fast_left_cache",
    "slow_layers", "slow_chunks", "slow_lookahead", "slow_left_cache",
    "predictor_layers", "joiner_dim", "deliberation", "text_encoder",
    "text_layers", "text_heads", "merge_blocks", "merge_heads", "max_hypo_len",
    "share_token_embeddings", "seed"};

const char* const kOtherKeys[] = {
    "beam.fast_segment", "beam.slow_segment", "beam.fast_beam", "beam.slow_beam",
    "beam.max_symbols_per_frame",
    "train.lr", "train.epochs", "train.batch_size", "train.lambda", "train.mask_p",
    "train.seed", "train.alignment_restriction", "train.ar_left", "train.ar_right",
    "train.delib_lr", "train.delib_epochs", "train.freeze", "train.grad_clip",
    "paths.manifest", "paths.checkpoint_in", "paths.checkpoint_out", "paths.report_out",
    "paths.hyps_out", "paths.trace_out", "paths.output_dir",
    "data.n_utts", "data.alphabet", "data.min_tokens", "data.max_tokens",
    "data.frames_per_token", "data.feature_dim", "data.noise_std", "data.seed",
    "data.template_seed", "data.id_prefix", "data.topic_markers", "data.confusable_pair",
    "metrics.frame_ms", "metrics.slice_threshold_s"};

FreezeMode parse_freeze(const std::string& s) {
  if (s == "none") return FreezeMode::kNone;
  if (s == "base") return FreezeMode::kBase;
  throw ConfigError("train.freeze must be none or base, got '" + s + "'");
}

}  // namespace

std::string to_string(FreezeMode m) { return m == FreezeMode::kBase ? "base" : "none"; }

RunConfig RunConfig::from_document(const KeyValueDocument& doc) {
  std::set<std::string> known;
  for (const char* k : kModelKeys) known.insert(std::string("model.") + k);
  for (const char* k : kOtherKeys) known.insert(k);
  for (const auto& [k, v] : doc.values()) {
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }

  RunConfig c;
  c.model = ModelConfig::read(doc, "model.");
  c.beam = BeamConfig::for_model(c.model);
  c.beam.fast_segment = doc.get_size("beam.fast_segment", c.beam.fast_segment);
  c.beam.slow_segment = doc.get_size("beam.slow_segment", c.beam.slow_segment);
  c.beam.fast_beam = doc.get_size("beam.fast_beam", c.beam.fast_beam);
  c.beam.slow_beam = doc.get_size("beam.slow_beam", c.beam.slow_beam);
  c.beam.max_symbols_per_frame =
      doc.get_size("beam.max_symbols_per_frame", c.beam.max_symbols_per_frame);

  auto& t = c.train;
  t.lr = doc.get_double("train.lr", t.lr);
  t.epochs = doc.get_size("train.epochs", t.epochs);
  t.batch_size = doc.get_size("train.batch_size", t.batch_size);
  t.lambda = doc.get_double("train.lambda", t.lambda);
  t.mask_p = doc.get_double("train.mask_p", t.mask_p);
  t.seed = static_cast<std::uint64_t>(doc.get_int("train.seed", static_cast<std::int64_t>(t.seed)));
  t.alignment_restriction = doc.get_bool("train.alignment_restriction", t.alignment_restriction);
  t.ar_left = doc.get_size("train.ar_left", t.ar_left);
  t.ar_right = doc.get_size("train.ar_right", t.ar_right);
  if (doc.contains("train.delib_lr")) t.delib_lr = doc.get_double("train.delib_lr", 0.0);
  if (doc.contains("train.delib_epochs")) t.delib_epochs = doc.get_size("train.delib_epochs", 0);
  t.freeze = parse_freeze(doc.get_string("train.freeze", to_string(t.freeze)));
  t.grad_clip = doc.get_double("train.grad_clip", t.grad_clip);

  auto& p = c.paths;
  p.manifest = doc.get_string("paths.manifest", p.manifest);
  p.checkpoint_in = doc.get_string("paths.checkpoint_in", p.checkpoint_in);
  p.checkpoint_out = doc.get_string("paths.checkpoint_out", p.checkpoint_out);
  p.report_out = doc.get_string("paths.report_out", p.report_out);
  p.hyps_out = doc.get_string("paths.hyps_out", p.hyps_out);
  p.trace_out = doc.get_string("paths.trace_out", p.trace_out);
  p.output_dir = doc.get_string("paths.output_dir", p.output_dir);

  auto& d = c.data;
  d.n_utts = doc.get_size("data.n_utts", d.n_utts);
  d.alphabet = doc.get_string("data.alphabet", d.alphabet);
  d.min_tokens = doc.get_size("data.min_tokens", d.min_tokens);
  d.max_tokens = doc.get_size("data.max_tokens", d.max_tokens);
  d.frames_per_token = doc.get_size("data.frames_per_token", d.frames_per_token);
  d.feature_dim = doc.get_size("data.feature_dim", d.feature_dim);
  d.noise_std = doc.get_double("data.noise_std", d.noise_std);
  d.seed = static_cast<std::uint64_t>(doc.get_int("data.seed", static_cast<std::int64_t>(d.seed)));
  d.template_seed = static_cast<std::uint64_t>(
      doc.get_int("data.template_seed", static_cast<std::int64_t>(d.template_seed)));
  d.id_prefix = doc.get_string("data.id_prefix", d.id_prefix);
  d.topic_markers = doc.get_string("data.topic_markers", d.topic_markers);
  d.confusable_pair = doc.get_string("data.confusable_pair", d.confusable_pair);

  c.metrics.frame_ms = doc.get_double("metrics.frame_ms", c.metrics.frame_ms);
  c.metrics.slice_threshold_s =
      doc.get_double("metrics.slice_threshold_s", c.metrics.slice_threshold_s);
  return c;
}

KeyValueDocument RunConfig::to_document() const {
  KeyValueDocument doc;
  model.write(doc, "model.");
  auto sz = [](std::size_t v) { return std::to_string(v); };
  doc.set("beam.fast_segment", sz(beam.fast_segment));
  doc.set("beam.slow_segment", sz(beam.slow_segment));
  doc.set("beam.fast_beam", sz(beam.fast_beam));
  doc.set("beam.slow_beam", sz(beam.slow_beam));
  doc.set("beam.max_symbols_per_frame", sz(beam.max_symbols_per_frame));
  doc.set("train.lr", format_double(train.lr));
  doc.set("train.epochs", sz(train.epochs));
  doc.set("train.batch_size", sz(train.batch_size));
  doc.set("train.lambda", format_double(train.lambda));
  doc.set("train.mask_p", format_double(train.mask_p));
  doc.set("train.seed", std::to_string(train.seed));
  doc.set("train.alignment_restriction", train.alignment_restriction ? "true" : "false");
  doc.set("train.ar_left", sz(train.ar_left));
  doc.set("train.ar_right", sz(train.ar_right));
  doc.set("train.delib_lr", format_double(train.stage2_lr()));
  doc.set("train.delib_epochs", sz(train.stage2_epochs()));
  doc.set("train.freeze", to_string(train.freeze));
  doc.set("train.grad_clip", format_double(train.grad_clip));
  doc.set("paths.manifest", paths.manifest);
  doc.set("paths.checkpoint_in", paths.checkpoint_in);
  doc.set("paths.checkpoint_out", paths.checkpoint_out);
  doc.set("paths.report_out", paths.report_out);
  doc.set("paths.hyps_out", paths.hyps_out);
  doc.set("paths.trace_out", paths.trace_out);
  doc.set("paths.output_dir", paths.output_dir);
  doc.set("data.n_utts", sz(data.n_utts));
  doc.set("data.alphabet", data.alphabet);
  doc.set("data.min_tokens", sz(data.min_tokens));
  doc.set("data.max_tokens", sz(data.max_tokens));
  doc.set("data.frames_per_token", sz(data.frames_per_token));
  doc.set("data.feature_dim", sz(data.feature_dim));
  doc.set("data.noise_std", format_double(data.noise_std));
  doc.set("data.seed", std::to_string(data.seed));
  doc.set("data.template_seed", std::to_string(data.template_seed));
  doc.set("data.id_prefix", data.id_prefix);
  doc.set("data.topic_markers", data.topic_markers);
  doc.set("data.confusable_pair", data.confusable_pair);
  doc.set("metrics.frame_ms", format_double(metrics.frame_ms));
  doc.set("metrics.slice_threshold_s", format_double(metrics.slice_threshold_s));
  return doc;
}

void RunConfig::validate() const {
  model.validate();
  beam.validate();
  if (beam.fast_segment != model.fast_chunk || beam.slow_segment != model.slow_segment_frames()) {
    throw ConfigError("beam.fast_segment/slow_segment must match model.fast_chunk and "
                      "model.fast_chunk * model.slow_chunks");
  }
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (train.mask_p < 0.0 || train.mask_p > 1.0) throw ConfigError("train.mask_p must lie in [0, 1]");
  if (metrics.frame_ms <= 0.0) throw ConfigError("metrics.frame_ms must be positive");
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValueDocument doc;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    doc = KeyValueDocument::parse(ss.str());
  }
  for (const auto& o : overrides) doc.set_assignment(o);
  auto cfg = RunConfig::from_document(doc);
  cfg.validate();
  return cfg;
}

}  // namespace fsd
