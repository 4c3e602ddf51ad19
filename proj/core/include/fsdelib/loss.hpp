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

// Transducer losses over a [T x (U+1) x V] log-probability lattice. Blank is
// id 0. Losses are single fused tape nodes: the forward pass runs the alpha
// recursion, the backward pass uses alpha and beta occupancies.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "fsdelib/tensor.hpp"

namespace fsd {

struct Lattice {
  Tensor log_probs;  // [T x (U+1) x V]

  std::size_t frames() const { return log_probs.dim(0); }
  std::size_t labels() const { return log_probs.dim(1) - 1; }
  std::size_t vocab() const { return log_probs.dim(2); }
  // Throws NumericError when some [t, u, :] slice is not a log distribution.
  void check_normalized(double tol = 1e-6) const;
};

inline constexpr std::size_t kUnboundedBuffer = std::numeric_limits<std::size_t>::max();

// Token u may only be emitted at frames t in
// [token_frames[u] - left_buffer, token_frames[u] + right_buffer].
struct AlignmentRestriction {
  std::vector<std::size_t> token_frames;
  std::size_t left_buffer = 1;
  std::size_t right_buffer = 4;

  bool allows(std::size_t u, std::size_t t) const;
  void validate(std::size_t T, std::size_t U) const;
};

// -log P(target | lattice).
Tensor rnnt_loss(const Lattice& lattice, std::span<const int> target);
Tensor ar_rnnt_loss(const Lattice& lattice, std::span<const int> target,
                    const AlignmentRestriction& restriction);

// l_slow + lambda * l_fast. Warns once on stderr for lambda outside (0, 1).
Tensor joint_loss(const Tensor& l_slow, const Tensor& l_fast, double lambda);

}  // namespace fsd
