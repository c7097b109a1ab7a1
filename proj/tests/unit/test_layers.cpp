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

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "sincser/dsp.hpp"
#include "sincser/layers.hpp"
#include "support/gradchecks.hpp"
#include "support/oracles.hpp"

using sincser::Tensor;
namespace ly = sincser::layers;
namespace dsp = sincser::dsp;
namespace st = sincser::testing;

namespace {

ly::ConvKernelBank bank_of(std::size_t filters, std::size_t length,
                           std::vector<double> w) {
  return {Tensor({filters, length}, std::move(w)), true};
}

}  // namespace

TEST_CASE("conv1d hand examples") {
  const Tensor x({1, 3}, {1, 2, 3});
  const Tensor y = ly::conv1d(x, bank_of(1, 1, {1}), 1);
  CHECK(y.shape() == sincser::Shape{1, 1, 3});
  CHECK(y.values() == std::vector<double>{1, 2, 3});

  const Tensor x4({1, 4}, {1, 2, 3, 4});
  CHECK(ly::conv1d(x4, bank_of(1, 2, {1, 1}), 1).values() == std::vector<double>{3, 5, 7});

  // True convolution flips the kernel: h = [1, 0] picks the later sample.
  CHECK(ly::conv1d(x4, bank_of(1, 2, {1, 0}), 1).values() == std::vector<double>{2, 3, 4});
  CHECK(ly::conv1d(x4, bank_of(1, 2, {1, 1}), 2).values() == std::vector<double>{3, 7});

  const Tensor zeros({2, 50});
  std::mt19937_64 rng(1);
  const auto y0 = ly::conv1d(zeros, {st::random_tensor({3, 7}, rng), true}, 2);
  for (double v : y0.values()) CHECK(v == 0.0);
}

TEST_CASE("conv1d geometry errors") {
  CHECK(ly::conv_output_frames(10, 3, 1) == 8);
  CHECK(ly::conv_output_frames(10, 3, 4) == 2);
  const Tensor x({1, 3}, {1, 2, 3});
  CHECK_THROWS(ly::conv1d(x, bank_of(1, 4, {1, 1, 1, 1}), 1));
  CHECK_THROWS(ly::conv1d(x, bank_of(1, 1, {1}), 0));
}

TEST_CASE("conv1d input gradient is a correlation with the kernels") {
  std::mt19937_64 rng(9);
  const Tensor x = st::random_tensor({1, 30}, rng);
  const ly::ConvKernelBank bank{st::random_tensor({2, 5}, rng), true};
  const Tensor up = st::random_tensor({1, 2, 26}, rng);
  const auto g = ly::conv1d_backward(x, bank, 1, up);
  // dL/dx[m] = sum_f sum_j up[f, j] * h_f[j + L - 1 - m]
  for (std::size_t m = 0; m < 30; ++m) {
    double ref = 0.0;
    for (std::size_t f = 0; f < 2; ++f) {
      for (std::size_t j = 0; j < 26; ++j) {
        const long k = static_cast<long>(j) + 4 - static_cast<long>(m);
        if (k >= 0 && k < 5) ref += up.at(0, f, j) * bank.weights.at(f, static_cast<std::size_t>(k));
      }
    }
    CHECK(g.input[m] == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("sinc_conv equals conv1d over materialized kernels") {
  std::mt19937_64 rng(2);
  const auto bank = ly::SincBank::with_hamming(dsp::mel_spaced_init(6, 16000.0, 101));
  const Tensor x = st::random_tensor({3, 400}, rng);
  const auto a = ly::sinc_conv(x, bank, 4);
  const auto b = ly::conv1d(x, ly::materialize(bank), 4);
  CHECK(a == b);
  CHECK_FALSE(ly::materialize(bank).learnable);
}

TEST_CASE("sinc_conv separates a tone by band") {
  std::vector<double> tone(4000);
  for (std::size_t n = 0; n < tone.size(); ++n) {
    tone[n] = std::sin(2.0 * dsp::kPi * 2000.0 * static_cast<double>(n) / 16000.0);
  }
  const Tensor x({1, tone.size()}, tone);
  // Band 1-3 kHz and band 4-6 kHz.
  std::vector<dsp::SincFilterParams> filters = {{970.0, 1950.0, 16000.0, 251},
                                                {3970.0, 1950.0, 16000.0, 251}};
  const auto bank = ly::SincBank::with_hamming(filters);
  const auto y = ly::sinc_conv(x, bank, 1);
  const std::size_t frames = y.dim(2);
  const double in_band = st::rms(std::span<const double>(y.data(), frames));
  const double off_band = st::rms(std::span<const double>(y.data() + frames, frames));
  CHECK(in_band >= 10.0 * off_band);
}

TEST_CASE("sinc layer parameter count") {
  const auto bank = ly::SincBank::with_hamming(dsp::mel_spaced_init(80, 16000.0, 251));
  CHECK(bank.learnable_parameter_count() == 160);
  const ly::ConvKernelBank conv{Tensor({80, 251}), true};
  CHECK(conv.learnable_parameter_count() == 20080);
}

TEST_CASE("sinc_conv_backward with zero upstream is zero") {
  std::mt19937_64 rng(4);
  const auto bank = ly::SincBank::with_hamming(dsp::mel_spaced_init(4, 16000.0, 51));
  const Tensor x = st::random_tensor({2, 200}, rng);
  const Tensor up({2, 4, ly::conv_output_frames(200, 51, 2)});
  const auto g = ly::sinc_conv_backward(x, bank, 2, up);
  for (double v : g.theta1) CHECK(v == 0.0);
  for (double v : g.theta2) CHECK(v == 0.0);
  for (double v : g.input.values()) CHECK(v == 0.0);
}

TEST_CASE("sinc_conv_backward input gradient matches the conv oracle") {
  std::mt19937_64 rng(8);
  const auto bank = ly::SincBank::with_hamming(dsp::mel_spaced_init(3, 16000.0, 31));
  const Tensor x = st::random_tensor({2, 120}, rng);
  const Tensor up = st::random_tensor({2, 3, ly::conv_output_frames(120, 31, 3)}, rng);
  const auto a = ly::sinc_conv_backward(x, bank, 3, up);
  const auto b = ly::conv1d_backward(x, ly::materialize(bank), 3, up);
  CHECK(st::relative_error(a.input.span(), b.input.span()) < 1e-14);
  CHECK(st::relative_error(a.kernels.span(), b.weights.span()) < 1e-14);
}

TEST_CASE("finite-difference gradient checks over 20 seeds") {
  for (int seed = 0; seed < st::kGradSeeds; ++seed) {
    CAPTURE(seed);
    CHECK(st::conv1d_grad_error(seed) < st::kFdTolerance);
    CHECK(st::sinc_conv_grad_error(seed) < st::kFdTolerance);
    CHECK(st::batch_norm_grad_error(seed, ly::Mode::kTrain) < st::kFdTolerance);
    CHECK(st::batch_norm_grad_error(seed, ly::Mode::kEval) < st::kFdTolerance);
    CHECK(st::lstm_grad_error(seed) < st::kFdTolerance);
    CHECK(st::attention_grad_error(seed) < st::kFdTolerance);
    CHECK(st::dense_grad_error(seed) < st::kFdTolerance);
    CHECK(st::cross_entropy_grad_error(seed) < st::kFdTolerance);
  }
}

TEST_CASE("batch_norm train statistics and running update") {
  std::mt19937_64 rng(6);
  const Tensor x = st::random_tensor({8, 3, 10}, rng, 3.0);
  std::vector<double> gamma(3, 1.0), beta(3, 0.0);
  ly::RunningStats stats(3);
  const Tensor y = ly::batch_norm(x, gamma, beta, stats, ly::Mode::kTrain);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0, xmean = 0.0, xsq = 0.0;
    for (std::size_t b = 0; b < 8; ++b) {
      for (std::size_t t = 0; t < 10; ++t) {
        mean += y.at(b, c, t);
        sq += y.at(b, c, t) * y.at(b, c, t);
        xmean += x.at(b, c, t);
      }
    }
    mean /= 80;
    xmean /= 80;
    for (std::size_t b = 0; b < 8; ++b) {
      for (std::size_t t = 0; t < 10; ++t) xsq += (x.at(b, c, t) - xmean) * (x.at(b, c, t) - xmean);
    }
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(sq / 80 - mean * mean - 1.0) < 1e-4);
    CHECK(stats.mean[c] == doctest::Approx(0.1 * xmean).epsilon(1e-12));
    CHECK(stats.var[c] == doctest::Approx(0.9 + 0.1 * xsq / 80).epsilon(1e-12));
  }
}

TEST_CASE("batch_norm constant column maps to beta; small batch rejected") {
  Tensor x({4, 2}, {1, 5, 1, 6, 1, 7, 1, 8});
  std::vector<double> gamma = {2.0, 1.0}, beta = {0.25, 0.0};
  ly::RunningStats stats(2);
  const Tensor y = ly::batch_norm(x, gamma, beta, stats, ly::Mode::kTrain);
  for (std::size_t b = 0; b < 4; ++b) CHECK(y.at(b, 0) == doctest::Approx(0.25));
  const Tensor one({1, 2}, {1, 2});
  CHECK_THROWS(ly::batch_norm(one, gamma, beta, stats, ly::Mode::kTrain));
  CHECK_NOTHROW(ly::batch_norm(one, gamma, beta, stats, ly::Mode::kEval));
}

TEST_CASE("leaky relu and max pool") {
  const Tensor x = Tensor::vector({-2.0, 0.5, -0.1, 3.0});
  CHECK(ly::leaky_relu(x).values() == std::vector<double>{-0.2, 0.5, -0.1 * 0.1, 3.0});
  const Tensor g = ly::leaky_relu_backward(x, Tensor::vector({1, 1, 1, 1}));
  CHECK(g.values() == std::vector<double>{0.1, 1, 0.1, 1});

  const Tensor m({1, 9}, {1, 5, 2, 0, -1, -3, 7, 7, 9});
  const auto pooled = ly::max_pool_last(m, 4);
  CHECK(pooled.output.values() == std::vector<double>{5, 7});
  const Tensor back = ly::max_pool_last_backward(m.shape(), pooled, Tensor({1, 2}, {1.5, 2.5}));
  CHECK(back.values() == std::vector<double>{0, 1.5, 0, 0, 0, 0, 2.5, 0, 0});
  CHECK(ly::sigmoid(0.0) == 0.5);
}

TEST_CASE("softmax cross entropy edge cases") {
  const auto uniform = ly::softmax_cross_entropy(Tensor::vector({0, 0, 0, 0}), 2);
  CHECK(uniform.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  const auto peaked = ly::softmax_cross_entropy(Tensor::vector({0, 1e6, 0, 0}), 1);
  CHECK(std::isfinite(peaked.loss));
  CHECK(peaked.loss < 1e-12);
  std::mt19937_64 rng(3);
  const auto ce = ly::softmax_cross_entropy(st::random_tensor({4}, rng), 0);
  CHECK(std::abs(std::accumulate(ce.grad.values().begin(), ce.grad.values().end(), 0.0)) < 1e-9);
  CHECK_THROWS_AS(ly::softmax_cross_entropy(Tensor::vector({0, 0, 0, 0}), 4), std::out_of_range);
  CHECK_THROWS_AS(ly::softmax_cross_entropy(Tensor::vector({0, 0, 0, 0}), -1), std::out_of_range);
}

TEST_CASE("lstm fixed point and memory carry") {
  const std::size_t in = 2, hid = 3;
  ly::LstmParams zero{Tensor({4 * hid, in + hid}), Tensor({4 * hid})};
  const auto s = ly::lstm_step(std::vector<double>{0.4, -1.0}, ly::LstmState::zeros(hid), zero);
  for (double v : s.h) CHECK(v == 0.0);
  for (double v : s.c) CHECK(v == 0.0);

  ly::LstmParams carry{Tensor({4 * hid, in + hid}), Tensor({4 * hid})};
  for (std::size_t j = 0; j < hid; ++j) {
    carry.bias[j] = -1e3;       // input gate -> 0
    carry.bias[hid + j] = 1e3;  // forget gate -> 1
  }
  ly::LstmState st0{{0.1, 0.2, 0.3}, {0.5, -0.7, 1.5}};
  const auto s1 = ly::lstm_step(std::vector<double>{0.3, 0.9}, st0, carry);
  CHECK(s1.c == st0.c);
}

TEST_CASE("self attention invariants") {
  std::mt19937_64 rng(12);
  const ly::AttentionParams p{st::random_tensor({3, 4}, rng), st::random_tensor({3, 4}, rng)};
  const Tensor single = st::random_tensor({1, 4}, rng);
  CHECK(ly::self_attention(single, p).values() == single.values());
  for (int i = 0; i < 20; ++i) {
    const Tensor h = st::random_tensor({6, 4}, rng);
    ly::AttentionCache cache;
    ly::self_attention(h, p, &cache);
    const double total = std::accumulate(cache.weights.begin(), cache.weights.end(), 0.0);
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  CHECK_THROWS(ly::self_attention(Tensor({0, 4}), p));
}

TEST_CASE("embedding lookup and gradient accumulation") {
  Tensor table({5, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const std::vector<int> tokens = {3, 1, 3};
  const Tensor e = ly::embedding_lookup(table, tokens);
  CHECK(e.values() == std::vector<double>{6, 7, 2, 3, 6, 7});
  Tensor grad({5, 2});
  ly::embedding_accumulate_grad(tokens, Tensor({3, 2}, {1, 1, 2, 2, 3, 3}), grad);
  CHECK(grad.values() == std::vector<double>{0, 0, 2, 2, 0, 0, 4, 4, 0, 0});
  CHECK_THROWS_AS(ly::embedding_lookup(table, std::vector<int>{5}), std::out_of_range);
}
