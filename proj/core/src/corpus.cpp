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

#include "fsdelib/corpus.hpp"

#include <fstream>
#include <sstream>

#include "fsdelib/errors.hpp"
#include "fsdelib/features.hpp"
#include "json.hpp"

namespace fsd {

using nlohmann::json;

void UtteranceRecord::validate(std::optional<std::size_t> frames) const {
  if (id.empty()) throw DataError("utterance record without id");
  if (!alignment) return;
  const auto& a = *alignment;
  if (a.size() != transcript.size()) {
    throw DataError(id + ": alignment has " + std::to_string(a.size()) +
                    " entries for " + std::to_string(transcript.size()) + " tokens");
  }
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (a[i] < a[i - 1]) throw DataError(id + ": alignment decreases at token " + std::to_string(i));
  }
  const auto T = frames ? frames : num_frames;
  if (T && !a.empty() && a.back() >= *T) {
    throw DataError(id + ": alignment frame " + std::to_string(a.back()) +
                    " beyond " + std::to_string(*T) + " frames");
  }
}

std::filesystem::path Manifest::feature_path(const UtteranceRecord& r) const {
  const std::filesystem::path p(r.features);
  return p.is_absolute() ? p : base_dir / p;
}

Tensor Manifest::load_features(const UtteranceRecord& r) const {
  Tensor f = read_feature_file(feature_path(r));
  r.validate(f.rows());
  return f;
}

namespace {

UtteranceRecord record_from_json(const json& j, std::size_t line) {
  auto where = [&] { return "manifest line " + std::to_string(line); };
  if (!j.is_object()) throw DataError(where() + ": expected an object");
  UtteranceRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.features = j.at("features").get<std::string>();
    r.text = j.value("text", std::string{});
    r.transcript = j.at("transcript").get<std::vector<int>>();
    if (j.contains("alignment") && !j["alignment"].is_null())
      r.alignment = j["alignment"].get<std::vector<std::size_t>>();
    if (j.contains("num_frames") && !j["num_frames"].is_null())
      r.num_frames = j["num_frames"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(where() + ": " + e.what());
  }
  for (int t : r.transcript) {
    if (t <= 1) throw DataError(where() + ": transcript contains reserved id " + std::to_string(t));
  }
  r.validate();
  return r;
}

json record_to_json(const UtteranceRecord& r) {
  json j;
  j["id"] = r.id;
  j["features"] = r.features;
  j["text"] = r.text;
  j["transcript"] = r.transcript;
  if (r.alignment) j["alignment"] = *r.alignment;
  if (r.num_frames) j["num_frames"] = *r.num_frames;
  return j;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("manifest line " + std::to_string(n) + ": " + e.what());
    }
    m.records.push_back(record_from_json(j, n));
  }
  return m;
}

void save_manifest(const std::filesystem::path& path,
                   const std::vector<UtteranceRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << json{{"alphabet", vocab.alphabet()}}.dump() << '\n';
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  try {
    const json j = json::parse(in);
    return Vocabulary(j.at("alphabet").get<std::string>());
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg) {
  if (cfg.min_tokens < 1 || cfg.max_tokens < cfg.min_tokens) {
    throw ConfigError("synthetic corpus needs 1 <= min_tokens <= max_tokens");
  }
  if (cfg.frames_per_token < 1) throw ConfigError("frames_per_token must be >= 1");
  SyntheticCorpus corpus;
  corpus.vocab = Vocabulary(cfg.alphabet);
  const auto& alpha = cfg.alphabet;
  const std::size_t F = cfg.feature_dim;

  std::mt19937_64 template_rng(cfg.template_seed);
  corpus.templates = Tensor::randn({alpha.size(), F}, template_rng, 1.0);
  const bool confusion = cfg.confusion_enabled();
  if (confusion) {
    const std::size_t keep = alpha.find(cfg.confusable_pair[0]);
    const std::size_t twin = alpha.find(cfg.confusable_pair[1]);
    if (keep == std::string::npos || twin == std::string::npos ||
        alpha.find(cfg.topic_markers[0]) == std::string::npos ||
        alpha.find(cfg.topic_markers[1]) == std::string::npos) {
      throw ConfigError("confusion symbols must belong to the alphabet");
    }
    auto tpl = corpus.templates.mutable_data();
    for (std::size_t f = 0; f < F; ++f) tpl[twin * F + f] = tpl[keep * F + f];
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  std::uniform_int_distribution<std::size_t> length(cfg.min_tokens, cfg.max_tokens);

  for (std::size_t n = 0; n < cfg.n_utts; ++n) {
    std::string letters;
    std::string pool;
    std::size_t topic = 0;
    if (confusion) {
      topic = std::uniform_int_distribution<std::size_t>(0, 1)(rng);
      for (char c : alpha) {
        if (c == ' ' || c == cfg.topic_markers[0] || c == cfg.topic_markers[1]) continue;
        if (c == cfg.confusable_pair[1 - topic]) continue;
        pool.push_back(c);
      }
    } else {
      for (char c : alpha)
        if (c != ' ') pool.push_back(c);
    }
    const bool has_space = alpha.find(' ') != std::string::npos;
    const std::size_t U = length(rng);
    std::string text;
    if (confusion) {
      text.push_back(cfg.topic_markers[topic]);
      if (has_space) text.push_back(' ');
    }
    while (text.size() < U + (confusion ? (has_space ? 2 : 1) : 0)) {
      const char prev = text.empty() ? '\0' : text.back();
      const std::size_t remaining = U + (confusion ? (has_space ? 2 : 1) : 0) - text.size();
      // A space needs a letter after it, so never on the last position.
      const bool may_space = has_space && prev != ' ' && prev != '\0' && remaining > 1 &&
                             text.size() > (confusion ? 2u : 0u);
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - (may_space ? 0 : 1));
      const std::size_t k = pick(rng);
      const char c = k == pool.size() ? ' ' : pool[k];
      if (c == prev) continue;
      text.push_back(c);
    }

    UtteranceRecord r;
    char name[32];
    std::snprintf(name, sizeof name, "%s%05zu", cfg.id_prefix.c_str(), n);
    r.id = name;
    r.features = "feats/" + r.id + ".fsft";
    r.text = text;
    r.transcript = corpus.vocab.tokenize(text);
    const std::size_t T = r.transcript.size() * cfg.frames_per_token;
    std::vector<double> data(T * F);
    std::vector<std::size_t> align;
    for (std::size_t u = 0; u < r.transcript.size(); ++u) {
      align.push_back(u * cfg.frames_per_token);
      const std::size_t sym = static_cast<std::size_t>(r.transcript[u] - 2);
      for (std::size_t k = 0; k < cfg.frames_per_token; ++k) {
        const std::size_t t = u * cfg.frames_per_token + k;
        for (std::size_t f = 0; f < F; ++f) {
          double v = corpus.templates.data()[sym * F + f];
          if (cfg.noise_std > 0.0) v += noise(rng);
          data[t * F + f] = v;
        }
      }
    }
    r.alignment = std::move(align);
    r.num_frames = T;
    corpus.records.push_back(std::move(r));
    corpus.features.emplace_back(Shape{T, F}, std::move(data));
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  std::filesystem::create_directories(dir / "feats");
  for (std::size_t i = 0; i < corpus.records.size(); ++i)
    write_feature_file(dir / corpus.records[i].features, corpus.features[i]);
  save_manifest(dir / "manifest.jsonl", corpus.records);
  save_vocabulary(dir / "vocab.json", corpus.vocab);
}

}  // namespace fsd
