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

#include "fsdelib/loss.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <string>

#include "fsdelib/errors.hpp"

namespace fsd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_target(const Lattice& lat, std::span<const int> target) {
  const auto& lp = lat.log_probs;
  if (!lp.defined() || lp.rank() != 3) {
    throw DimensionError("transducer loss expects a [T x (U+1) x V] lattice");
  }
  if (lat.frames() == 0) throw DimensionError("transducer loss on a lattice with T = 0");
  if (lat.labels() != target.size()) {
    throw DimensionError("lattice has U = " + std::to_string(lat.labels()) +
                         " but target has " + std::to_string(target.size()) + " tokens");
  }
  for (int y : target) {
    if (y <= 0 || static_cast<std::size_t>(y) >= lat.vocab()) {
      throw DimensionError("target token " + std::to_string(y) + " outside (0, " +
                           std::to_string(lat.vocab()) + ")");
    }
  }
}

const AlignmentRestriction& unrestricted() {
  static const AlignmentRestriction r{{}, kUnboundedBuffer, kUnboundedBuffer};
  return r;
}

Tensor transducer_loss(const Lattice& lat, std::span<const int> target,
                       const AlignmentRestriction& restriction, bool restricted) {
  check_target(lat, target);
  const std::size_t T = lat.frames(), U = lat.labels(), V = lat.vocab();
  if (restricted) restriction.validate(T, U);
  const auto lp = lat.log_probs.data();
  auto at = [&](std::size_t t, std::size_t u, std::size_t k) {
    return lp[(t * (U + 1) + u) * V + k];
  };
  // Shared by both variants; the unrestricted loss allows every emission.
  auto allowed = [&](std::size_t u, std::size_t t) {
    return !restricted || restriction.allows(u, t);
  };
  auto emit = [&](std::size_t t, std::size_t u) {
    return allowed(u, t) ? at(t, u, static_cast<std::size_t>(target[u])) : kNegInf;
  };

  const std::size_t W = U + 1;
  std::vector<double> alpha(T * W, kNegInf);
  alpha[0] = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) a = alpha[(t - 1) * W + u] + at(t - 1, u, 0);
      if (u > 0) a = log_add(a, alpha[t * W + u - 1] + emit(t, u - 1));
      alpha[t * W + u] = a;
    }
  }
  const double log_p = alpha[(T - 1) * W + U] + at(T - 1, U, 0);
  if (!std::isfinite(log_p)) {
    std::string why = "target unreachable in the lattice (log P = " + std::to_string(log_p) + ")";
    if (restricted) {
      why += "; alignment restriction left=" + std::to_string(restriction.left_buffer) +
             " right=" + std::to_string(restriction.right_buffer) + " over T=" +
             std::to_string(T) + ", U=" + std::to_string(U);
    }
    throw NumericError(why);
  }

  auto backward = [alpha = std::move(alpha), T, U, V, W, log_p,
                   tgt = std::vector<int>(target.begin(), target.end()),
                   restriction = restricted ? restriction : unrestricted(),
                   restricted](detail::TensorImpl& o) {
    auto& x = *o.node->inputs[0];
    x.ensure_grad();
    const auto& lp = x.data;
    auto idx = [&](std::size_t t, std::size_t u, std::size_t k) {
      return (t * (U + 1) + u) * V + k;
    };
    auto allowed = [&](std::size_t u, std::size_t t) {
      return !restricted || restriction.allows(u, t);
    };
    std::vector<double> beta(T * W, kNegInf);
    beta[(T - 1) * W + U] = lp[idx(T - 1, U, 0)];
    for (std::size_t t = T; t-- > 0;) {
      for (std::size_t u = U + 1; u-- > 0;) {
        if (t == T - 1 && u == U) continue;
        double b = kNegInf;
        if (t + 1 < T) b = beta[(t + 1) * W + u] + lp[idx(t, u, 0)];
        if (u < U && allowed(u, t)) {
          b = log_add(b, beta[t * W + u + 1] + lp[idx(t, u, static_cast<std::size_t>(tgt[u]))]);
        }
        beta[t * W + u] = b;
      }
    }
    const double g = o.grad[0];
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t u = 0; u <= U; ++u) {
        const double a = alpha[t * W + u];
        if (a == kNegInf) continue;
        const std::size_t bi = idx(t, u, 0);
        const double next_blank = t + 1 < T ? beta[(t + 1) * W + u] : (u == U ? 0.0 : kNegInf);
        if (next_blank != kNegInf) x.grad[bi] -= g * std::exp(a + lp[bi] + next_blank - log_p);
        if (u < U && allowed(u, t)) {
          const std::size_t ti = idx(t, u, static_cast<std::size_t>(tgt[u]));
          const double nb = beta[t * W + u + 1];
          if (nb != kNegInf) x.grad[ti] -= g * std::exp(a + lp[ti] + nb - log_p);
        }
      }
    }
  };
  return make_op_result({}, {-log_p}, {lat.log_probs}, std::move(backward));
}

}  // namespace

void Lattice::check_normalized(double tol) const {
  const std::size_t rows = log_probs.rows(), V = log_probs.cols();
  const auto d = log_probs.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < V; ++k) s += std::exp(d[r * V + k]);
    if (std::abs(s - 1.0) > tol) {
      throw NumericError("lattice slice " + std::to_string(r) + " sums to " + std::to_string(s));
    }
  }
}

bool AlignmentRestriction::allows(std::size_t u, std::size_t t) const {
  const std::size_t a = token_frames[u];
  const bool left_ok = t >= a || a - t <= left_buffer;
  const bool right_ok = t <= a || t - a <= right_buffer;
  return left_ok && right_ok;
}

void AlignmentRestriction::validate(std::size_t T, std::size_t U) const {
  if (token_frames.size() != U) {
    throw DataError("alignment restriction has " + std::to_string(token_frames.size()) +
                    " frames for " + std::to_string(U) + " tokens");
  }
  for (std::size_t u = 0; u < U; ++u) {
    if (token_frames[u] >= T) {
      throw DataError("alignment frame " + std::to_string(token_frames[u]) + " of token " +
                      std::to_string(u) + " outside T = " + std::to_string(T));
    }
    if (u > 0 && token_frames[u] < token_frames[u - 1]) {
      throw DataError("alignment decreases at token " + std::to_string(u));
    }
  }
}

Tensor rnnt_loss(const Lattice& lattice, std::span<const int> target) {
  return transducer_loss(lattice, target, unrestricted(), false);
}

Tensor ar_rnnt_loss(const Lattice& lattice, std::span<const int> target,
                    const AlignmentRestriction& restriction) {
  return transducer_loss(lattice, target, restriction, true);
}

Tensor joint_loss(const Tensor& l_slow, const Tensor& l_fast, double lambda) {
  static std::atomic<bool> warned{false};
  if (!(lambda > 0.0 && lambda < 1.0) && !warned.exchange(true)) {
    std::cerr << "warning: joint loss weight lambda = " << lambda << " outside (0, 1)\n";
  }
  return add(l_slow, scale(l_fast, lambda));
}

}  // namespace fsd
