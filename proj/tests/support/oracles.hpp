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

// Independent reference implementations used by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "fsdelib/tensor.hpp"

namespace fsd::testing {

inline bool same_values(std::span<const double> a, std::span<const double> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

// Random [T x (U+1) x V] lattice of normalized log-probabilities.
inline Tensor random_lattice(std::size_t T, std::size_t U, std::size_t V, std::mt19937_64& rng,
                             bool requires_grad = false, double spread = 1.5) {
  std::normal_distribution<double> n(0.0, spread);
  std::vector<double> d(T * (U + 1) * V);
  for (std::size_t r = 0; r < T * (U + 1); ++r) {
    double mx = -1e300;
    for (std::size_t k = 0; k < V; ++k) mx = std::max(mx, d[r * V + k] = n(rng));
    double s = 0.0;
    for (std::size_t k = 0; k < V; ++k) s += std::exp(d[r * V + k] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t k = 0; k < V; ++k) d[r * V + k] -= lse;
  }
  return Tensor({T, U + 1, V}, std::move(d), requires_grad);
}

inline std::vector<int> random_target(std::size_t U, std::size_t V, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> tok(1, static_cast<int>(V) - 1);
  std::vector<int> y(U);
  for (auto& v : y) v = tok(rng);
  return y;
}

// -log of the summed probability of every monotone alignment path, walked
// one transition at a time. `allowed(u, t)` gates emitting token u at frame t.
inline double enumerate_paths_loss(const Tensor& lattice, const std::vector<int>& y,
                                   const std::function<bool(std::size_t, std::size_t)>& allowed =
                                       {}) {
  const std::size_t T = lattice.dim(0), U = lattice.dim(1) - 1, V = lattice.dim(2);
  const auto lp = lattice.data();
  auto p = [&](std::size_t t, std::size_t u, std::size_t k) {
    return static_cast<long double>(std::exp(lp[(t * (U + 1) + u) * V + k]));
  };
  std::function<long double(std::size_t, std::size_t)> walk = [&](std::size_t t,
                                                                   std::size_t u) -> long double {
    long double total = 0.0L;
    if (u < U && (!allowed || allowed(u, t)))
      total += p(t, u, static_cast<std::size_t>(y[u])) * walk(t, u + 1);
    if (t + 1 < T) total += p(t, u, 0) * walk(t + 1, u);
    if (t + 1 == T && u == U) total += p(t, u, 0);
    return total;
  };
  const long double prob = walk(0, 0);
  if (prob == 0.0L) return std::numeric_limits<double>::infinity();
  return static_cast<double>(-std::log(prob));
}

}  // namespace fsd::testing
