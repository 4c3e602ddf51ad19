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

#include "fsdelib/text.hpp"

#include <cstdio>

#include "fsdelib/errors.hpp"
#include "fsdelib/model.hpp"

namespace fsd {

namespace {

std::string printable(char c) {
  if (c == ' ') return "' ' (space)";
  if (static_cast<unsigned char>(c) < 0x20 || static_cast<unsigned char>(c) >= 0x7f) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%02x", static_cast<unsigned char>(c));
    return buf;
  }
  return std::string("'") + c + "'";
}

}  // namespace

Vocabulary::Vocabulary(std::string_view alphabet) : symbols_(alphabet) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<int>(i) + 2).second) {
      throw ConfigError("duplicate character " + printable(symbols_[i]) + " in alphabet");
    }
  }
}

int Vocabulary::id(char c) const {
  const auto it = index_.find(c);
  if (it == index_.end()) throw DataError("character " + printable(c) + " not in vocabulary");
  return it->second;
}

char Vocabulary::symbol(int id) const {
  if (id < 2 || static_cast<std::size_t>(id) >= size()) {
    throw DataError("token id " + std::to_string(id) + " has no surface symbol");
  }
  return symbols_[static_cast<std::size_t>(id) - 2];
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  std::string unknown;
  for (char c : text) {
    const auto it = index_.find(c);
    if (it == index_.end()) {
      if (unknown.find(c) == std::string::npos) unknown.push_back(c);
      continue;
    }
    ids.push_back(it->second);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown characters:";
    for (char c : unknown) msg += " " + printable(c);
    throw DataError(msg);
  }
  return ids;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(symbol(id));
  return out;
}

std::vector<int> mask_tokens(std::span<const int> tokens, double p,
                             std::mt19937_64& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("mask probability must lie in [0, 1]");
  std::vector<int> out(tokens.begin(), tokens.end());
  if (p == 0.0) return out;
  std::bernoulli_distribution coin(p);
  for (auto& t : out)
    if (coin(rng)) t = kBlankId;
  return out;
}

std::vector<int> truncate_hypothesis(std::span<const int> tokens, std::size_t max_len) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (tokens.size() <= max_len) return {tokens.begin(), tokens.end()};
  return {tokens.end() - static_cast<std::ptrdiff_t>(max_len), tokens.end()};
}

}  // namespace fsd
