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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "fsdelib/decoder.hpp"
#include "fsdelib/loss.hpp"
#include "fsdelib/model.hpp"

namespace {

fsd::Tensor random_log_probs(std::size_t T, std::size_t U, std::size_t V, std::mt19937_64& rng) {
  return fsd::log_softmax(fsd::Tensor::randn({T, U + 1, V}, rng, 1.0));
}

void BM_RnntLoss(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  const std::size_t U = T / 3, V = 12;
  std::mt19937_64 rng(1);
  const fsd::Tensor lat = random_log_probs(T, U, V, rng);
  std::vector<int> y(U);
  for (std::size_t u = 0; u < U; ++u) y[u] = 2 + static_cast<int>(u % 10);
  fsd::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(fsd::rnnt_loss(fsd::Lattice{lat}, y).item());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(T * (U + 1)));
}
BENCHMARK(BM_RnntLoss)->Arg(30)->Arg(60)->Arg(120);

void BM_RnntLossBackward(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  const std::size_t U = T / 3, V = 12;
  std::mt19937_64 rng(2);
  std::vector<int> y(U);
  for (std::size_t u = 0; u < U; ++u) y[u] = 2 + static_cast<int>(u % 10);
  for (auto _ : state) {
    fsd::Tensor lat = fsd::Tensor::randn({T, U + 1, V}, rng, 1.0, true);
    const auto loss = fsd::rnnt_loss(fsd::Lattice{fsd::log_softmax(lat)}, y);
    fsd::backward(loss);
    benchmark::DoNotOptimize(lat.grad().data());
  }
}
BENCHMARK(BM_RnntLossBackward)->Arg(30)->Arg(60);

void BM_ParallelBeamSearch(benchmark::State& state) {
  fsd::ModelConfig mc;
  mc.deliberation = true;
  const fsd::FastSlowTransducer model(mc);
  const auto beam = fsd::BeamConfig::for_model(mc, static_cast<std::size_t>(state.range(0)));
  std::mt19937_64 rng(3);
  const fsd::Tensor feats = fsd::Tensor::randn({60, mc.feature_dim}, rng, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(fsd::parallel_beam_search(feats, model, beam).log_prob);
}
BENCHMARK(BM_ParallelBeamSearch)->Arg(1)->Arg(4)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_FastBeamSearch(benchmark::State& state) {
  fsd::ModelConfig mc;
  const fsd::FastSlowTransducer model(mc);
  const auto beam = fsd::BeamConfig::for_model(mc, static_cast<std::size_t>(state.range(0)));
  std::mt19937_64 rng(4);
  const fsd::Tensor feats = fsd::Tensor::randn({60, mc.feature_dim}, rng, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(fsd::fast_beam_search(feats, model, beam).log_prob);
}
BENCHMARK(BM_FastBeamSearch)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
