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
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fsdelib/checkpoint.hpp"
#include "fsdelib/errors.hpp"
#include "fsdelib/harness.hpp"
#include "support/oracles.hpp"

using namespace fsd;
namespace fs = std::filesystem;

namespace {

RunConfig small_run() {
  RunConfig c;
  c.model.model_dim = 16;
  c.model.ff_dim = 32;
  c.model.fast_layers = 1;
  c.model.fast_chunk = 4;
  c.model.fast_left_cache = 8;
  c.model.slow_chunks = 2;
  c.model.slow_left_cache = 8;
  c.model.predictor_layers = 1;
  c.model.joiner_dim = 16;
  c.beam = BeamConfig::for_model(c.model, 3);
  c.train.epochs = 3;
  c.train.batch_size = 4;
  c.data.n_utts = 12;
  c.data.min_tokens = 3;
  c.data.max_tokens = 6;
  return c;
}

Dataset small_data(const RunConfig& c) { return dataset_from_corpus(generate_synthetic_corpus(c.data)); }

bool same_parameters(const FastSlowTransducer& a, const FastSlowTransducer& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i].first != pb[i].first || !testing::same_values(pa[i].second.data(), pb[i].second.data())) return false;
  return true;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fsdelib_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

#ifdef FSDELIB_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(FSDELIB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}
#endif

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("run config round trip and validation") {
  RunConfig c = small_run();
  c.train.delib_lr = 1e-4;
  c.train.freeze = FreezeMode::kBase;
  c.model.text_encoder = TextEncoderKind::kLstm;
  c.data.topic_markers = "hi";
  c.paths.manifest = "some dir/manifest.jsonl";
  const auto doc = c.to_document();
  const auto back = RunConfig::from_document(KeyValueDocument::parse(doc.serialize()));
  CHECK(back.to_document().serialize() == doc.serialize());
  CHECK(back.train.delib_lr == 1e-4);
  CHECK(back.paths.manifest == "some dir/manifest.jsonl");

  auto bad = doc;
  bad.set("train.learning_rate", "0.1");
  CHECK_THROWS_AS(RunConfig::from_document(bad), ConfigError);
  CHECK_THROWS_AS(load_run_config("", {"model.model_dim=abc"}), ConfigError);
  CHECK_THROWS_AS(load_run_config("", {"train.mask_p=2"}), ConfigError);
  const auto o = load_run_config("", {"model.slow_chunks=3", "model.fast_chunk=2"});
  CHECK(o.beam.slow_segment == 6);
  CHECK(o.beam.fast_segment == 2);
}

TEST_CASE("training lowers the loss and is deterministic") {
  const RunConfig c = small_run();
  const Dataset data = small_data(c);
  std::vector<double> seen;
  const auto a = train_base(c, data, [&](const EpochRecord& e) { seen.push_back(e.mean_loss); });
  REQUIRE(a.epochs.size() == 3);
  CHECK(seen.size() == 3);
  CHECK(a.epochs.back().mean_loss < a.epochs.front().mean_loss);
  const auto b = train_base(c, data);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.epochs[i].mean_loss == b.epochs[i].mean_loss);
  CHECK(same_parameters(a.model, b.model));
  CHECK_THROWS_AS(train_delib(c, a.model, data), ContractError);
}

TEST_CASE("deliberation starts where the base model left off") {
  RunConfig c = small_run();
  const Dataset data = small_data(c);
  const auto base = train_base(c, data).model;
  const auto delib = deliberation_from_base(base, 11);
  std::vector<std::size_t> batch{0, 1, 2, 3};
  std::mt19937_64 r1(5), r2(5);
  const double lb = batch_loss(base, data, batch, c.train, r1);
  const double ld = batch_loss(delib, data, batch, c.train, r2);
  CHECK(std::abs(lb - ld) < 1e-10);
  const auto hb = decode_dataset(base, data, c.beam);
  const auto hd = decode_dataset(delib, data, c.beam);
  for (std::size_t i = 0; i < hb.size(); ++i) {
    CHECK(hb[i].tokens == hd[i].tokens);
    CHECK(hb[i].emit_frames == hd[i].emit_frames);
  }

  // Freezing the base leaves every non-deliberation parameter untouched.
  c.model.deliberation = true;
  c.train.freeze = FreezeMode::kBase;
  c.train.delib_epochs = 1;
  c.train.delib_lr = 1e-2;
  const auto frozen = train_delib(c, clone_model(delib), data).model;
  std::size_t changed = 0;
  const auto before = delib.parameters(), after = frozen.parameters();
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& name = before[i].first;
    const bool trainable = name.rfind("text.", 0) == 0 || name.rfind("merge.", 0) == 0;
    if (!testing::same_values(before[i].second.data(), after[i].second.data())) {
      ++changed;
      CHECK_MESSAGE(trainable, name);
    }
  }
  CHECK(changed > 0);
}

TEST_CASE("decode, save, load and evaluate") {
  const RunConfig c = small_run();
  const Dataset data = small_data(c);
  const auto model = train_base(c, data).model;
  std::vector<std::string> trace;
  const auto hyps = decode_dataset(model, data, c.beam, &trace);
  REQUIRE(hyps.size() == data.utterances.size());
  CHECK(!trace.empty());
  CHECK(trace.front().find("\"id\"") != std::string::npos);

  const fs::path dir = scratch("decode");
  save_hypotheses((dir / "h.jsonl").string(), hyps);
  const auto back = load_hypotheses((dir / "h.jsonl").string());
  REQUIRE(back.size() == hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    CHECK(back[i].id == hyps[i].id);
    CHECK(back[i].tokens == hyps[i].tokens);
    CHECK(back[i].emit_frames == hyps[i].emit_frames);
    CHECK(back[i].text == hyps[i].text);
  }

  const auto rep = evaluate(data, hyps, c.metrics);
  CHECK(rep.utterances == data.utterances.size());
  CHECK(rep.failed == 0);
  std::size_t words = 0;
  for (const auto& u : data.utterances) words += split_words(u.record.text).size();
  CHECK(rep.counts.reference_words == words);
  CHECK(rep.sliced.short_count + rep.sliced.long_count == data.utterances.size());
  CHECK(format_eval_text(rep).find("WER") != std::string::npos);

  auto missing = hyps;
  missing.pop_back();
  CHECK_THROWS_AS(evaluate(data, missing, c.metrics), DataError);
  auto unknown = hyps;
  unknown[0].id = "nobody";
  CHECK_THROWS_AS(evaluate(data, unknown, c.metrics), DataError);
  fs::remove_all(dir);
}

#ifdef FSDELIB_CLI_PATH
TEST_CASE("command line tool") {
  const fs::path dir = scratch("cli");
  const std::string d = dir.string();
  const std::string model =
      " --set model.model_dim=16 --set model.ff_dim=32 --set model.fast_layers=1"
      " --set model.predictor_layers=1 --set model.joiner_dim=16";
  CHECK(run_cli("gen-data -o " + d + "/corpus --n-utts 8 --set data.max_tokens=6") == 0);
  CHECK(fs::exists(dir / "corpus" / "manifest.jsonl"));
  CHECK(run_cli("train-base -m " + d + "/corpus/manifest.jsonl -o " + d + "/base.ckpt --epochs 1 -r " +
                d + "/base.json" + model) == 0);
  CHECK(fs::exists(dir / "base.ckpt"));
  CHECK(slurp(dir / "base.json").find("\"epochs\"") != std::string::npos);
  CHECK(run_cli("train-delib -m " + d + "/corpus/manifest.jsonl -i " + d + "/base.ckpt -o " + d +
                "/delib.ckpt --set train.delib_epochs=1") == 0);
  CHECK(run_cli("decode -m " + d + "/corpus/manifest.jsonl -i " + d + "/delib.ckpt -o " + d +
                "/hyps.jsonl --trace " + d + "/trace.jsonl") == 0);
  CHECK(!slurp(dir / "trace.jsonl").empty());
  CHECK(run_cli("evaluate -m " + d + "/corpus/manifest.jsonl --hyps " + d + "/hyps.jsonl -r " + d +
                "/eval.json") == 0);
  CHECK(slurp(dir / "eval.json").find("wer") != std::string::npos);

  // Empty manifest decodes to nothing.
  fs::create_directories(dir / "empty");
  std::ofstream(dir / "empty" / "manifest.jsonl").close();
  CHECK(run_cli("decode -m " + d + "/empty/manifest.jsonl -i " + d + "/base.ckpt -o " + d +
                "/none.jsonl") == 0);
  CHECK(slurp(dir / "none.jsonl").empty());

  CHECK(run_cli("") == 1);
  CHECK(run_cli("decode --bogus") == 1);
  CHECK(run_cli("train-base -m x --set train.no_such_key=1") == 1);
  CHECK(run_cli("train-base -m " + d + "/missing.jsonl -o " + d + "/x.ckpt") == 2);
  CHECK(run_cli("decode -m " + d + "/corpus/manifest.jsonl -i " + d + "/corpus/vocab.json") == 2);
  fs::remove_all(dir);
}
#endif

}  // TEST_SUITE
