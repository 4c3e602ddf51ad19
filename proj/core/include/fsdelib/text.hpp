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

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fsd {

// Character-level vocabulary. Id 0 is blank (also the mask token), id 1 the
// BOS sentinel; ids from 2 map to single characters.
class Vocabulary {
 public:
  Vocabulary() = default;
  // Builds from an alphabet; characters must be distinct.
  explicit Vocabulary(std::string_view alphabet);

  std::size_t size() const { return symbols_.size() + 2; }
  const std::string& alphabet() const { return symbols_; }
  int id(char c) const;
  char symbol(int id) const;
  bool contains(char c) const { return index_.count(c) > 0; }

  std::vector<int> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const int> ids) const;

 private:
  std::string symbols_;
  std::unordered_map<char, int> index_;
};

// Replaces each position by blank independently with probability p.
std::vector<int> mask_tokens(std::span<const int> tokens, double p,
                             std::mt19937_64& rng);

// Keeps the last max_len tokens.
std::vector<int> truncate_hypothesis(std::span<const int> tokens, std::size_t max_len);

}  // namespace fsd
