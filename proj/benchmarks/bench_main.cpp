/* Copyright 2026 The sincser Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "sincser/ded.hpp"
#include "sincser/dsp.hpp"
#include "sincser/layers.hpp"
#include "sincser/models.hpp"

namespace {

using namespace sincser;

Tensor random_batch(std::size_t batch, std::size_t time, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.1);
  Tensor x({batch, time});
  for (double& v : x.span()) v = n(rng);
  return x;
}

layers::SincBank mel_bank(std::size_t filters, std::size_t length) {
  return layers::SincBank::with_hamming(
      dsp::mel_spaced_init(static_cast<int>(filters), 16000.0, length));
}

void BM_SincKernelBank(benchmark::State& state) {
  const auto bank = mel_bank(static_cast<std::size_t>(state.range(0)), 251);
  for (auto _ : state) benchmark::DoNotOptimize(layers::materialize(bank));
}
BENCHMARK(BM_SincKernelBank)->Arg(16)->Arg(80);

void BM_Conv1dForward(benchmark::State& state) {
  const auto bank = layers::materialize(mel_bank(16, 251));
  const Tensor x = random_batch(static_cast<std::size_t>(state.range(0)), 4000, 1);
  for (auto _ : state) benchmark::DoNotOptimize(layers::conv1d(x, bank, 16));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv1dForward)->Arg(1)->Arg(32);

void BM_SincConvForward(benchmark::State& state) {
  const auto bank = mel_bank(16, 251);
  const Tensor x = random_batch(static_cast<std::size_t>(state.range(0)), 4000, 2);
  for (auto _ : state) benchmark::DoNotOptimize(layers::sinc_conv(x, bank, 16));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SincConvForward)->Arg(1)->Arg(32);

void BM_TrainStep(benchmark::State& state) {
  models::ModelConfig c;
  c.acoustic_variant = static_cast<models::AcousticVariant>(state.range(0));
  models::Model model = models::build_model(c);
  models::Batch batch;
  batch.chunks = random_batch(32, c.chunk_samples, 3);
  for (int i = 0; i < 32; ++i) batch.labels.push_back(i % 4);
  for (auto _ : state) {
    model.parameters().zero_grad();
    benchmark::DoNotOptimize(model.accumulate_gradients(batch));
  }
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(models::AcousticVariant::kCnn))
    ->Arg(static_cast<int>(models::AcousticVariant::kSincLstm))
    ->Unit(benchmark::kMillisecond);

ded::DialogPosteriors random_dialog(std::size_t steps) {
  std::mt19937_64 rng(4);
  std::gamma_distribution<double> g(0.7, 1.0);
  ded::DialogPosteriors dp;
  for (std::size_t t = 0; t < steps; ++t) {
    models::Posterior p;
    double sum = 0.0;
    for (auto& v : p.probs) sum += (v = g(rng) + 1e-12);
    for (auto& v : p.probs) v /= sum;
    dp.rows.push_back(p);
  }
  return dp;
}

void BM_DecodeBeam(benchmark::State& state) {
  const auto dp = random_dialog(static_cast<std::size_t>(state.range(0)));
  ded::DedConfig cfg;
  cfg.beam_width = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(ded::decode(dp, cfg));
}
BENCHMARK(BM_DecodeBeam)->Args({16, 16})->Args({64, 16})->Args({16, 256});

void BM_DecodeBruteForce(benchmark::State& state) {
  const auto dp = random_dialog(8);
  for (auto _ : state) benchmark::DoNotOptimize(ded::brute_force_decode(dp, {}));
}
BENCHMARK(BM_DecodeBruteForce)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
