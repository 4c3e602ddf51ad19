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

// fsdelib command line: gen-data, train-base, train-delib, decode, evaluate.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or format
// error, 3 numeric failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fsdelib/checkpoint.hpp"
#include "fsdelib/config.hpp"
#include "fsdelib/corpus.hpp"
#include "fsdelib/errors.hpp"
#include "fsdelib/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

// Flags that are shorthands for config keys.
struct Shorthand {
  std::string key;
  std::string value;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "key = value config file");
  cmd->add_option("--set", c.overrides, "override a config key (key=value), repeatable");
}

void add_shorthand(CLI::App* cmd, std::vector<Shorthand>& out, const std::string& flag,
                   const std::string& key, const std::string& help) {
  out.push_back({key, {}});
  cmd->add_option(flag, out.back().value, help + " (" + key + ")");
}

fsd::RunConfig build_config(const Common& c, const std::vector<Shorthand>& shorthands) {
  std::vector<std::string> overrides;
  for (const auto& s : shorthands)
    if (!s.value.empty()) overrides.push_back(s.key + "=" + s.value);
  overrides.insert(overrides.end(), c.overrides.begin(), c.overrides.end());
  auto cfg = fsd::load_run_config(c.config_path, overrides);
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw fsd::DataError("cannot write " + path);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

void require(const std::string& value, const char* key) {
  if (value.empty()) throw fsd::ConfigError(std::string("missing required setting ") + key);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fsd::EpochCallback epoch_logger(std::chrono::steady_clock::time_point t0) {
  return [t0](const fsd::EpochRecord& r) {
    std::fprintf(stderr, "epoch %zu  loss %.6f  (%.1fs)\n", r.epoch, r.mean_loss,
                 seconds_since(t0));
  };
}

int cmd_gen_data(const fsd::RunConfig& cfg) {
  require(cfg.paths.output_dir, "paths.output_dir");
  const auto corpus = fsd::generate_synthetic_corpus(cfg.data);
  fsd::write_corpus(cfg.paths.output_dir, corpus);
  std::printf("wrote %zu utterances to %s\n", corpus.records.size(), cfg.paths.output_dir.c_str());
  return kExitOk;
}

int cmd_train_base(fsd::RunConfig cfg) {
  require(cfg.paths.manifest, "paths.manifest");
  require(cfg.paths.checkpoint_out, "paths.checkpoint_out");
  const auto data = fsd::load_dataset(cfg.paths.manifest);
  cfg.model.vocab_size = data.vocab.size();
  const auto t0 = std::chrono::steady_clock::now();
  auto result = fsd::train_base(cfg, data, epoch_logger(t0));
  fsd::write_checkpoint(cfg.paths.checkpoint_out, result.model.to_checkpoint());
  const auto hyps = fsd::decode_dataset(result.model, data, cfg.beam);
  const auto eval = fsd::evaluate(data, hyps, cfg.metrics);
  std::fprintf(stderr, "training finished in %.1fs\n", seconds_since(t0));
  std::cout << "training set:\n" << fsd::format_eval_text(eval);
  if (!cfg.paths.report_out.empty())
    write_text(cfg.paths.report_out, fsd::train_report_json("train-base", result, cfg, eval));
  return kExitOk;
}

int cmd_train_delib(fsd::RunConfig cfg) {
  require(cfg.paths.manifest, "paths.manifest");
  require(cfg.paths.checkpoint_in, "paths.checkpoint_in");
  require(cfg.paths.checkpoint_out, "paths.checkpoint_out");
  const auto data = fsd::load_dataset(cfg.paths.manifest);
  auto base = fsd::FastSlowTransducer::from_checkpoint(fsd::read_checkpoint(cfg.paths.checkpoint_in));
  // The architecture comes from the checkpoint; deliberation settings from
  // the run config.
  fsd::ModelConfig mc = base.config();
  mc.deliberation = false;
  mc.text_encoder = cfg.model.text_encoder;
  mc.text_layers = cfg.model.text_layers;
  mc.text_heads = cfg.model.text_heads;
  mc.merge_blocks = cfg.model.merge_blocks;
  mc.merge_heads = cfg.model.merge_heads;
  mc.max_hypo_len = cfg.model.max_hypo_len;
  mc.share_token_embeddings = cfg.model.share_token_embeddings;
  fsd::FastSlowTransducer reconfigured(mc);
  reconfigured.load_parameters(base.to_checkpoint());
  cfg.model = mc;
  cfg.beam.fast_segment = mc.fast_chunk;
  cfg.beam.slow_segment = mc.slow_segment_frames();
  auto model = fsd::deliberation_from_base(reconfigured, mc.seed + 1);
  cfg.model.deliberation = true;

  if (!data.utterances.empty()) {
    std::vector<std::size_t> batch;
    for (std::size_t i = 0; i < std::min(cfg.train.batch_size, data.utterances.size()); ++i)
      batch.push_back(i);
    std::mt19937_64 r1(cfg.train.seed), r2(cfg.train.seed);
    const double l_base = fsd::batch_loss(reconfigured, data, batch, cfg.train, r1);
    const double l_delib = fsd::batch_loss(model, data, batch, cfg.train, r2);
    std::fprintf(stderr, "continuity: base %.12f  deliberation %.12f  |diff| %.3e\n", l_base,
                 l_delib, std::abs(l_base - l_delib));
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto result = fsd::train_delib(cfg, std::move(model), data, epoch_logger(t0));
  fsd::write_checkpoint(cfg.paths.checkpoint_out, result.model.to_checkpoint());
  const auto hyps = fsd::decode_dataset(result.model, data, cfg.beam);
  const auto eval = fsd::evaluate(data, hyps, cfg.metrics);
  std::fprintf(stderr, "training finished in %.1fs\n", seconds_since(t0));
  std::cout << "training set:\n" << fsd::format_eval_text(eval);
  if (!cfg.paths.report_out.empty())
    write_text(cfg.paths.report_out, fsd::train_report_json("train-delib", result, cfg, eval));
  return kExitOk;
}

int cmd_decode(fsd::RunConfig cfg) {
  require(cfg.paths.manifest, "paths.manifest");
  require(cfg.paths.checkpoint_in, "paths.checkpoint_in");
  const auto model =
      fsd::FastSlowTransducer::from_checkpoint(fsd::read_checkpoint(cfg.paths.checkpoint_in));
  cfg.beam.fast_segment = model.config().fast_chunk;
  cfg.beam.slow_segment = model.config().slow_segment_frames();
  const auto data = fsd::load_dataset(cfg.paths.manifest);
  std::vector<std::string> trace;
  const auto hyps =
      fsd::decode_dataset(model, data, cfg.beam, cfg.paths.trace_out.empty() ? nullptr : &trace);
  std::size_t failed = 0;
  for (const auto& h : hyps) {
    if (h.error) {
      ++failed;
      std::fprintf(stderr, "%s: %s\n", h.id.c_str(), h.error->c_str());
    }
  }
  if (cfg.paths.hyps_out.empty()) {
    for (const auto& h : hyps)
      if (!h.error) std::cout << h.id << '\t' << h.text << '\n';
  } else {
    fsd::save_hypotheses(cfg.paths.hyps_out, hyps);
  }
  if (!cfg.paths.trace_out.empty()) {
    std::string all;
    for (const auto& l : trace) all += l + '\n';
    std::ofstream out(cfg.paths.trace_out, std::ios::trunc);
    if (!out) throw fsd::DataError("cannot write " + cfg.paths.trace_out);
    out << all;
  }
  std::fprintf(stderr, "decoded %zu utterances, %zu failed\n", hyps.size(), failed);
  return kExitOk;
}

int cmd_evaluate(const fsd::RunConfig& cfg, const std::string& hyps_path) {
  require(cfg.paths.manifest, "paths.manifest");
  require(hyps_path, "--hyps");
  const auto data = fsd::load_dataset(cfg.paths.manifest);
  const auto hyps = fsd::load_hypotheses(hyps_path);
  const auto report = fsd::evaluate(data, hyps, cfg.metrics);
  std::cout << fsd::format_eval_text(report);
  if (!cfg.paths.report_out.empty())
    write_text(cfg.paths.report_out, fsd::eval_report_json(report, cfg));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fast-slow transducer with streaming deliberation"};
  app.require_subcommand(1);

  Common gen_c, base_c, delib_c, dec_c, eval_c;
  std::vector<Shorthand> gen_s, base_s, delib_s, dec_s, eval_s;
  gen_s.reserve(16), base_s.reserve(16), delib_s.reserve(16), dec_s.reserve(16), eval_s.reserve(16);

  auto* gen = app.add_subcommand("gen-data", "write a synthetic corpus");
  add_common(gen, gen_c);
  add_shorthand(gen, gen_s, "-o,--out", "paths.output_dir", "output directory");
  add_shorthand(gen, gen_s, "--n-utts", "data.n_utts", "number of utterances");
  add_shorthand(gen, gen_s, "--alphabet", "data.alphabet", "symbols");
  add_shorthand(gen, gen_s, "--frames-per-token", "data.frames_per_token", "frames per symbol");
  add_shorthand(gen, gen_s, "--noise-std", "data.noise_std", "feature noise");
  add_shorthand(gen, gen_s, "--seed", "data.seed", "sequence and noise seed");
  add_shorthand(gen, gen_s, "--template-seed", "data.template_seed", "acoustic template seed");
  add_shorthand(gen, gen_s, "--topic-markers", "data.topic_markers", "confusion variant markers");
  add_shorthand(gen, gen_s, "--confusable-pair", "data.confusable_pair", "confusion variant pair");

  auto* base = app.add_subcommand("train-base", "stage 1: train the fast-slow model");
  add_common(base, base_c);
  add_shorthand(base, base_s, "-m,--manifest", "paths.manifest", "training manifest");
  add_shorthand(base, base_s, "-o,--out", "paths.checkpoint_out", "checkpoint to write");
  add_shorthand(base, base_s, "-r,--report", "paths.report_out", "JSON report");
  add_shorthand(base, base_s, "--epochs", "train.epochs", "epochs");

  auto* delib = app.add_subcommand("train-delib", "stage 2: add deliberation and train jointly");
  add_common(delib, delib_c);
  add_shorthand(delib, delib_s, "-m,--manifest", "paths.manifest", "training manifest");
  add_shorthand(delib, delib_s, "-i,--in", "paths.checkpoint_in", "stage-1 checkpoint");
  add_shorthand(delib, delib_s, "-o,--out", "paths.checkpoint_out", "checkpoint to write");
  add_shorthand(delib, delib_s, "-r,--report", "paths.report_out", "JSON report");
  add_shorthand(delib, delib_s, "--freeze", "train.freeze", "none or base");

  auto* dec = app.add_subcommand("decode", "parallel beam search over a manifest");
  add_common(dec, dec_c);
  add_shorthand(dec, dec_s, "-m,--manifest", "paths.manifest", "manifest to decode");
  add_shorthand(dec, dec_s, "-i,--in", "paths.checkpoint_in", "checkpoint");
  add_shorthand(dec, dec_s, "-o,--out", "paths.hyps_out", "hypotheses JSONL");
  add_shorthand(dec, dec_s, "--trace", "paths.trace_out", "beam-search trace JSONL");
  add_shorthand(dec, dec_s, "--beam", "beam.fast_beam", "fast beam size");
  add_shorthand(dec, dec_s, "--slow-beam", "beam.slow_beam", "slow beam size");

  std::string hyps_path;
  auto* ev = app.add_subcommand("evaluate", "WER and emission delay of decoded hypotheses");
  add_common(ev, eval_c);
  add_shorthand(ev, eval_s, "-m,--manifest", "paths.manifest", "reference manifest");
  add_shorthand(ev, eval_s, "-r,--report", "paths.report_out", "JSON report");
  ev->add_option("--hyps", hyps_path, "hypotheses JSONL from decode")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(build_config(gen_c, gen_s));
    if (base->parsed()) return cmd_train_base(build_config(base_c, base_s));
    if (delib->parsed()) return cmd_train_delib(build_config(delib_c, delib_s));
    if (dec->parsed()) return cmd_decode(build_config(dec_c, dec_s));
    if (ev->parsed()) return cmd_evaluate(build_config(eval_c, eval_s), hyps_path);
  } catch (const fsd::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const fsd::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const fsd::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const fsd::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
