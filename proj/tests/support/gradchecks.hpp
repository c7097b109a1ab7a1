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

#ifndef SINCSER_TESTS_SUPPORT_GRADCHECKS_HPP_
#define SINCSER_TESTS_SUPPORT_GRADCHECKS_HPP_

// Finite-difference checks for every layer backward. Each check builds a
// random problem from `seed`, contracts the layer output with a fixed random
// tensor to get a scalar loss, and returns the worst relative error over the
// layer's inputs and parameters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sincser/dsp.hpp"
#include "sincser/layers.hpp"
#include "support/oracles.hpp"

namespace sincser::testing {

namespace ly = sincser::layers;

inline double conv1d_grad_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(1, 3);
  const std::size_t batch = pick(rng), filters = pick(rng) + 1, length = 2 * pick(rng) + 3,
                    stride = pick(rng), time = 40 + pick(rng);
  Tensor x = random_tensor({batch, time}, rng);
  ly::ConvKernelBank bank{random_tensor({filters, length}, rng), true};
  const std::size_t frames = ly::conv_output_frames(time, length, stride);
  Tensor probe = random_tensor({batch, filters, frames}, rng);
  auto loss = [&] { return dot(ly::conv1d(x, bank, stride).span(), probe.span()); };
  const auto g = ly::conv1d_backward(x, bank, stride, probe, true);
  const auto fd_w = central_difference(bank.weights, loss);
  const auto fd_x = central_difference(x, loss);
  return std::max(relative_error(g.weights.span(), fd_w),
                  relative_error(g.input.span(), fd_x));
}

// Gradients with respect to the raw cutoff parameters and the input.
inline double sinc_conv_grad_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> f_lo(100.0, 3000.0), width(200.0, 3000.0);
  std::bernoulli_distribution sign(0.5);
  const std::size_t filters = 4, length = 51, stride = 3, batch = 2, time = 160;
  std::vector<dsp::SincFilterParams> params;
  for (std::size_t f = 0; f < filters; ++f) {
    const double t1 = f_lo(rng), t2 = width(rng);
    params.push_back({sign(rng) ? t1 : -t1, sign(rng) ? t2 : -t2, 16000.0, length});
  }
  ly::SincBank bank = ly::SincBank::with_hamming(params);
  Tensor x = random_tensor({batch, time}, rng);
  const std::size_t frames = ly::conv_output_frames(time, length, stride);
  Tensor probe = random_tensor({batch, filters, frames}, rng);
  auto loss = [&] { return dot(ly::sinc_conv(x, bank, stride).span(), probe.span()); };
  const auto g = ly::sinc_conv_backward(x, bank, stride, probe, true);

  std::vector<double> theta(2 * filters), analytic(2 * filters);
  for (std::size_t f = 0; f < filters; ++f) {
    theta[2 * f] = bank.filters[f].theta1;
    theta[2 * f + 1] = bank.filters[f].theta2;
    analytic[2 * f] = g.theta1[f];
    analytic[2 * f + 1] = g.theta2[f];
  }
  auto theta_loss = [&] {
    for (std::size_t f = 0; f < filters; ++f) {
      bank.filters[f].theta1 = theta[2 * f];
      bank.filters[f].theta2 = theta[2 * f + 1];
    }
    return loss();
  };
  const auto fd_theta = central_difference(theta, theta_loss);
  theta_loss();
  const auto fd_x = central_difference(x, loss);
  return std::max(relative_error(analytic, fd_theta),
                  relative_error(g.input.span(), fd_x));
}

inline double batch_norm_grad_error(std::uint64_t seed, ly::Mode mode) {
  std::mt19937_64 rng(seed);
  const std::size_t batch = 4, channels = 3, time = 5;
  Tensor x = random_tensor({batch, channels, time}, rng);
  std::vector<double> gamma(channels), beta(channels);
  fill_normal(gamma, rng);
  fill_normal(beta, rng);
  ly::RunningStats stats(channels);
  fill_normal(stats.mean, rng);
  for (double& v : stats.var) v = 0.5 + std::abs(v);
  Tensor probe = random_tensor({batch, channels, time}, rng);
  auto loss = [&] {
    ly::RunningStats scratch = stats;
    return dot(ly::batch_norm(x, gamma, beta, scratch, mode).span(), probe.span());
  };
  ly::RunningStats scratch = stats;
  ly::BatchNormCache cache;
  ly::batch_norm(x, gamma, beta, scratch, mode, &cache);
  const auto g = ly::batch_norm_backward(probe, gamma, cache);
  const auto fd_x = central_difference(x, loss);
  const auto fd_gamma = central_difference(gamma, loss);
  const auto fd_beta = central_difference(beta, loss);
  return std::max({relative_error(g.input.span(), fd_x),
                   relative_error(g.gamma, fd_gamma),
                   relative_error(g.beta, fd_beta)});
}

// Backpropagation through a sequence of `steps` cells.
inline double lstm_grad_error(std::uint64_t seed, std::size_t steps = 5) {
  std::mt19937_64 rng(seed);
  const std::size_t input = 3, hidden = 4;
  ly::LstmParams p{random_tensor({4 * hidden, input + hidden}, rng, 0.5),
                   random_tensor({4 * hidden}, rng, 0.5)};
  Tensor xs = random_tensor({steps, input}, rng);
  Tensor probe = random_tensor({steps, hidden}, rng);
  auto loss = [&] { return dot(ly::lstm_sequence(xs, p).span(), probe.span()); };
  ly::LstmSequenceCache cache;
  ly::lstm_sequence(xs, p, &cache);
  const auto g = ly::lstm_sequence_backward(cache, p, probe);
  const auto fd_w = central_difference(p.weights, loss);
  const auto fd_b = central_difference(p.bias, loss);
  const auto fd_x = central_difference(xs, loss);
  return std::max({relative_error(g.weights.span(), fd_w),
                   relative_error(g.bias.span(), fd_b),
                   relative_error(g.input.span(), fd_x)});
}

inline double attention_grad_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(2, 7);
  const std::size_t steps = len(rng), dim = 5, dk = 3;
  ly::AttentionParams p{random_tensor({dk, dim}, rng), random_tensor({dk, dim}, rng)};
  Tensor h = random_tensor({steps, dim}, rng);
  Tensor probe = random_tensor({dim}, rng);
  auto loss = [&] { return dot(ly::self_attention(h, p).span(), probe.span()); };
  ly::AttentionCache cache;
  ly::self_attention(h, p, &cache);
  const auto g = ly::self_attention_backward(cache, p, probe);
  const auto fd_h = central_difference(h, loss);
  const auto fd_q = central_difference(p.query, loss);
  const auto fd_k = central_difference(p.key, loss);
  return std::max({relative_error(g.input.span(), fd_h),
                   relative_error(g.query.span(), fd_q),
                   relative_error(g.key.span(), fd_k)});
}

inline double dense_grad_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t in = 6, out = 4;
  ly::DenseParams p{random_tensor({out, in}, rng), random_tensor({out}, rng)};
  Tensor x = random_tensor({in}, rng);
  Tensor probe = random_tensor({out}, rng);
  auto loss = [&] { return dot(ly::dense(x, p).span(), probe.span()); };
  const auto g = ly::dense_backward(x, p, probe);
  const auto fd_x = central_difference(x, loss);
  const auto fd_w = central_difference(p.weights, loss);
  const auto fd_b = central_difference(p.bias, loss);
  return std::max({relative_error(g.input.span(), fd_x),
                   relative_error(g.weights.span(), fd_w),
                   relative_error(g.bias.span(), fd_b)});
}

inline double cross_entropy_grad_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor logits = random_tensor({4}, rng, 2.0);
  const int label = static_cast<int>(seed % 4);
  auto loss = [&] { return ly::softmax_cross_entropy(logits, label).loss; };
  const auto ce = ly::softmax_cross_entropy(logits, label);
  const auto fd = central_difference(logits, loss);
  return relative_error(ce.grad.span(), fd);
}

}  // namespace sincser::testing

#endif  // SINCSER_TESTS_SUPPORT_GRADCHECKS_HPP_
