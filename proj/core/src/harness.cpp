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

#include "fsdelib/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "fsdelib/errors.hpp"
#include "fsdelib/loss.hpp"
#include "fsdelib/optim.hpp"
#include "json.hpp"

namespace fsd {

using nlohmann::json;

Dataset load_dataset(const std::string& manifest_path) {
  const Manifest m = load_manifest(manifest_path);
  Dataset d;
  const auto vocab_path = m.base_dir / "vocab.json";
  if (!m.records.empty() || std::filesystem::exists(vocab_path)) d.vocab = load_vocabulary(vocab_path);
  for (const auto& r : m.records) d.utterances.push_back({r, m.load_features(r)});
  return d;
}

Dataset dataset_from_corpus(const SyntheticCorpus& corpus) {
  Dataset d;
  d.vocab = corpus.vocab;
  for (std::size_t i = 0; i < corpus.records.size(); ++i)
    d.utterances.push_back({corpus.records[i], corpus.features[i]});
  return d;
}

LossTerms utterance_loss(const FastSlowTransducer& model, const Utterance& utt,
                         const TrainConfig& cfg,
                         const std::vector<std::vector<int>>* partials) {
  const auto enc = model.encode(utt.features);
  const auto& target = utt.record.transcript;
  const Tensor pred = model.predictor_sequence(target);
  Tensor e_comb = enc.e_slow;
  if (model.has_deliberation()) {
    if (!partials) throw ContractError("deliberation loss needs partial hypotheses");
    e_comb = model.combine_segments(enc.e_slow, *partials);
  }
  auto branch_loss = [&](const Tensor& e) {
    const Lattice lat{model.lattice(e, pred)};
    if (cfg.alignment_restriction && utt.record.alignment) {
      const AlignmentRestriction ar{*utt.record.alignment, cfg.ar_left, cfg.ar_right};
      return ar_rnnt_loss(lat, target, ar);
    }
    return rnnt_loss(lat, target);
  };
  LossTerms out;
  out.fast = branch_loss(enc.e_fast);
  out.slow = branch_loss(e_comb);
  out.total = joint_loss(out.slow, out.fast, cfg.lambda);
  return out;
}

std::vector<std::vector<int>> training_partials(const FastSlowTransducer& model,
                                                const Tensor& features, double mask_p,
                                                std::mt19937_64& rng) {
  auto res = parallel_beam_search(features, model, BeamConfig::for_model(model.config(), 1));
  for (auto& p : res.partials) p = mask_tokens(p, mask_p, rng);
  return res.partials;
}

double batch_loss(const FastSlowTransducer& model, const Dataset& data,
                  const std::vector<std::size_t>& batch, const TrainConfig& cfg,
                  std::mt19937_64& rng) {
  NoGradGuard no_grad;
  double sum = 0.0;
  for (auto i : batch) {
    const auto& u = data.utterances.at(i);
    std::vector<std::vector<int>> partials;
    if (model.has_deliberation()) partials = training_partials(model, u.features, cfg.mask_p, rng);
    sum += utterance_loss(model, u, cfg, &partials).total.item();
  }
  return sum / static_cast<double>(batch.size());
}

FastSlowTransducer clone_model(const FastSlowTransducer& model) {
  return FastSlowTransducer::from_checkpoint(model.to_checkpoint());
}

FastSlowTransducer deliberation_from_base(const FastSlowTransducer& base, std::uint64_t seed) {
  if (base.has_deliberation()) throw ContractError("model already has a deliberation branch");
  FastSlowTransducer m = clone_model(base);
  m.enable_deliberation(seed);
  return m;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Tensor> trainable(const FastSlowTransducer& model, FreezeMode freeze) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : model.parameters()) {
    const bool delib = name.rfind("text.", 0) == 0 || name.rfind("merge.", 0) == 0;
    if (freeze == FreezeMode::kBase && !delib) continue;
    out.push_back(t);
  }
  return out;
}

void clip_gradients(std::vector<Tensor>& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (auto& p : params)
    for (double& g : p.impl()->grad) g *= s;
}

TrainResult run_training(FastSlowTransducer model, const Dataset& data, const TrainConfig& cfg,
                         double lr, std::size_t epochs, const EpochCallback& on_epoch) {
  if (data.utterances.empty()) throw DataError("training manifest is empty");
  std::mt19937_64 rng(cfg.seed);
  auto params = trainable(model, cfg.freeze);
  auto all = model.parameter_tensors();
  OptimizerState opt;
  std::vector<std::size_t> order(data.utterances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result{std::move(model), {}};
  const auto& m = result.model;

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(e - b);
      for (std::size_t k = b; k < e; ++k) {
        const auto& u = data.utterances[order[k]];
        std::vector<std::vector<int>> partials;
        if (m.has_deliberation()) partials = training_partials(m, u.features, cfg.mask_p, rng);
        const auto loss = utterance_loss(m, u, cfg, &partials);
        const double v = loss.total.item();
        if (!std::isfinite(v)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " on " +
                             u.record.id);
        }
        epoch_sum += v;
        backward(scale(loss.total, inv));
      }
      for (auto& p : params) p.ensure_grad();
      clip_gradients(params, cfg.grad_clip);
      adam_step(params, opt, lr);
      zero_grads(all);
    }
    EpochRecord rec{epoch, epoch_sum / static_cast<double>(order.size())};
    result.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace

TrainResult train_base(const RunConfig& cfg, const Dataset& data, const EpochCallback& on_epoch) {
  cfg.validate();
  ModelConfig mc = cfg.model;
  mc.deliberation = false;
  mc.vocab_size = data.vocab.size();
  TrainConfig tc = cfg.train;
  tc.freeze = FreezeMode::kNone;
  return run_training(FastSlowTransducer(mc), data, tc, tc.lr, tc.epochs, on_epoch);
}

TrainResult train_delib(const RunConfig& cfg, FastSlowTransducer model, const Dataset& data,
                        const EpochCallback& on_epoch) {
  if (!model.has_deliberation()) throw ContractError("train_delib needs a deliberation model");
  return run_training(std::move(model), data, cfg.train, cfg.train.stage2_lr(),
                      cfg.train.stage2_epochs(), on_epoch);
}

TrainResult continue_base(const RunConfig& cfg, FastSlowTransducer model, const Dataset& data,
                          const EpochCallback& on_epoch) {
  if (model.has_deliberation()) throw ContractError("continue_base expects a base model");
  TrainConfig tc = cfg.train;
  tc.freeze = FreezeMode::kNone;
  return run_training(std::move(model), data, tc, tc.stage2_lr(), tc.stage2_epochs(), on_epoch);
}

// ---------------------------------------------------------------------------

std::vector<HypothesisRecord> decode_dataset(const FastSlowTransducer& model, const Dataset& data,
                                             const BeamConfig& beam,
                                             std::vector<std::string>* trace_lines) {
  std::vector<HypothesisRecord> out;
  for (const auto& u : data.utterances) {
    HypothesisRecord h;
    h.id = u.record.id;
    try {
      auto res = parallel_beam_search(u.features, model, beam, trace_lines != nullptr);
      h.tokens = res.tokens;
      h.text = data.vocab.detokenize(res.tokens);
      h.emit_frames = res.emit_frames;
      h.log_prob = res.log_prob;
      if (trace_lines) {
        for (const auto& r : res.trace) {
          auto j = json::parse(to_json_line(r));
          j["id"] = h.id;
          trace_lines->push_back(j.dump());
        }
      }
    } catch (const std::exception& e) {
      h.error = e.what();
    }
    out.push_back(std::move(h));
  }
  return out;
}

void save_hypotheses(const std::string& path, const std::vector<HypothesisRecord>& hyps) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& h : hyps) {
    json j;
    j["id"] = h.id;
    if (h.error) {
      j["error"] = *h.error;
    } else {
      j["text"] = h.text;
      j["tokens"] = h.tokens;
      j["emit_frames"] = h.emit_frames;
      j["log_prob"] = h.log_prob;
    }
    out << j.dump() << '\n';
  }
}

std::vector<HypothesisRecord> load_hypotheses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open hypotheses " + path);
  std::vector<HypothesisRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      HypothesisRecord h;
      h.id = j.at("id").get<std::string>();
      if (j.contains("error")) {
        h.error = j["error"].get<std::string>();
      } else {
        h.text = j.at("text").get<std::string>();
        h.tokens = j.at("tokens").get<std::vector<int>>();
        h.emit_frames = j.at("emit_frames").get<std::vector<std::size_t>>();
        h.log_prob = j.value("log_prob", 0.0);
      }
      out.push_back(std::move(h));
    } catch (const json::exception& e) {
      throw DataError(path + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

EvalReport evaluate(const Dataset& refs, const std::vector<HypothesisRecord>& hyps,
                    const MetricsConfig& metrics) {
  std::map<std::string, const HypothesisRecord*> by_id;
  for (const auto& h : hyps) by_id[h.id] = &h;
  std::set<std::string> ref_ids;
  std::vector<std::string> missing, extra;
  for (const auto& u : refs.utterances) {
    ref_ids.insert(u.record.id);
    if (!by_id.count(u.record.id)) missing.push_back(u.record.id);
  }
  for (const auto& [id, h] : by_id)
    if (!ref_ids.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "utterance ids differ between references and hypotheses;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (const auto& id : ids) msg += " " + id;
    };
    list("missing hypotheses", missing);
    list("unknown ids", extra);
    throw DataError(msg);
  }

  EvalReport r;
  std::vector<double> delays;
  std::vector<UtteranceResult> results;
  for (const auto& u : refs.utterances) {
    const auto& h = *by_id.at(u.record.id);
    ++r.utterances;
    if (h.error) ++r.failed;
    const std::string hyp_text = h.error ? std::string{} : h.text;
    r.counts += count_errors(split_words(u.record.text), split_words(hyp_text));
    if (!h.error && u.record.alignment) {
      auto d = token_delays(u.record.transcript, *u.record.alignment, h.tokens, h.emit_frames,
                            metrics.frame_ms);
      delays.insert(delays.end(), d.begin(), d.end());
    }
    results.push_back({u.record.id, u.record.text, hyp_text,
                       static_cast<double>(u.features.rows()) * metrics.frame_ms / 1000.0});
  }
  if (r.counts.reference_words == 0) throw DataError("empty reference corpus");
  r.delays = DelayReport::from_delays(std::move(delays));
  r.sliced = sliced_report(results, metrics.slice_threshold_s);
  return r;
}

namespace {

json counts_json(const ErrorCounts& c) {
  json j;
  j["substitutions"] = c.substitutions;
  j["insertions"] = c.insertions;
  j["deletions"] = c.deletions;
  j["reference_words"] = c.reference_words;
  j["wer"] = c.reference_words ? json(c.wer()) : json(nullptr);
  return j;
}

json eval_json(const EvalReport& r) {
  json j;
  j["utterances"] = r.utterances;
  j["failed"] = r.failed;
  j["wer"] = counts_json(r.counts);
  json d;
  d["tokens"] = r.delays.delays_ms.size();
  d["empty"] = r.delays.empty();
  d["avg_ms"] = r.delays.avg;
  d["p95_ms"] = r.delays.p95;
  d["p99_ms"] = r.delays.p99;
  d["note"] = "delays measured against synthetic reference alignments";
  j["emission_delay"] = d;
  json s;
  s["threshold_s"] = r.sliced.threshold_s;
  s["short"] = counts_json(r.sliced.short_errors);
  s["short"]["utterances"] = r.sliced.short_count;
  s["long"] = counts_json(r.sliced.long_errors);
  s["long"]["utterances"] = r.sliced.long_count;
  j["sliced"] = s;
  return j;
}

}  // namespace

std::string format_eval_text(const EvalReport& r) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "utterances %zu (failed %zu)\n", r.utterances, r.failed);
  os << buf;
  std::snprintf(buf, sizeof buf, "WER %.4f  (S=%zu I=%zu D=%zu N=%zu)\n", r.counts.wer(),
                r.counts.substitutions, r.counts.insertions, r.counts.deletions,
                r.counts.reference_words);
  os << buf;
  if (r.delays.empty()) {
    os << "emission delay: no matched tokens\n";
  } else {
    std::snprintf(buf, sizeof buf, "emission delay ms: avg %.1f  P95 %.1f  P99 %.1f  (%zu tokens)\n",
                  r.delays.avg, r.delays.p95, r.delays.p99, r.delays.delays_ms.size());
    os << buf;
  }
  auto slice = [&](const char* name, std::size_t n, const ErrorCounts& c) {
    if (c.reference_words == 0) {
      std::snprintf(buf, sizeof buf, "%s: n=%zu\n", name, n);
    } else {
      std::snprintf(buf, sizeof buf, "%s: n=%zu WER %.4f\n", name, n, c.wer());
    }
    os << buf;
  };
  std::snprintf(buf, sizeof buf, "%.1fs", r.sliced.threshold_s);
  const std::string threshold = buf;
  slice(("shorter than " + threshold).c_str(), r.sliced.short_count, r.sliced.short_errors);
  slice(("at least " + threshold).c_str(), r.sliced.long_count, r.sliced.long_errors);
  return os.str();
}

std::string eval_report_json(const EvalReport& r, const RunConfig& cfg) {
  json j = eval_json(r);
  j["command"] = "evaluate";
  j["config"] = cfg.to_document().serialize();
  return j.dump(2);
}

std::string train_report_json(const std::string& command, const TrainResult& r,
                              const RunConfig& cfg, const std::optional<EvalReport>& eval) {
  json j;
  j["command"] = command;
  j["config"] = cfg.to_document().serialize();
  auto& e = j["epochs"] = json::array();
  for (const auto& rec : r.epochs) e.push_back({{"epoch", rec.epoch}, {"mean_loss", rec.mean_loss}});
  j["final_loss"] = r.epochs.empty() ? json(nullptr) : json(r.epochs.back().mean_loss);
  if (eval) j["train_eval"] = eval_json(*eval);
  return j.dump(2);
}

}  // namespace fsd
