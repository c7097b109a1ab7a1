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

#include "sincser/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sincser::layers {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// Row-reversed copy so the inner convolution loop is a forward dot product.
std::vector<double> flipped_kernels(const Tensor& weights) {
  const std::size_t filters = weights.dim(0);
  const std::size_t length = weights.dim(1);
  std::vector<double> out(weights.size());
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t k = 0; k < length; ++k) {
      out[f * length + k] = weights.at(f, length - 1 - k);
    }
  }
  return out;
}

void check_conv_input(const Tensor& x, std::size_t length, std::size_t stride) {
  require(x.rank() == 2, "conv input must be (batch, time), got " +
                             shape_string(x.shape()));
  require(stride >= 1, "conv stride must be >= 1");
  require(length >= 1, "conv kernel length must be >= 1");
  if (x.dim(1) < length) {
    throw std::invalid_argument("conv input has " + std::to_string(x.dim(1)) +
                                " samples but kernel length is " +
                                std::to_string(length));
  }
}

}  // namespace

std::size_t conv_output_frames(std::size_t time, std::size_t length,
                               std::size_t stride) {
  if (time < length || stride == 0) return 0;
  return (time - length) / stride + 1;
}

Tensor conv1d(const Tensor& x, const ConvKernelBank& bank, std::size_t stride) {
  const std::size_t length = bank.length();
  check_conv_input(x, length, stride);
  const std::size_t batch = x.dim(0);
  const std::size_t time = x.dim(1);
  const std::size_t filters = bank.num_filters();
  const std::size_t frames = conv_output_frames(time, length, stride);
  const std::vector<double> flipped = flipped_kernels(bank.weights);

  Tensor y({batch, filters, frames});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = x.data() + b * time;
    for (std::size_t f = 0; f < filters; ++f) {
      const double* h = flipped.data() + f * length;
      double* out = &y.at(b, f, 0);
      for (std::size_t j = 0; j < frames; ++j) {
        out[j] = dot(xb + j * stride, h, length);
      }
    }
  }
  return y;
}

Conv1dGradients conv1d_backward(const Tensor& x, const ConvKernelBank& bank,
                                std::size_t stride, const Tensor& upstream,
                                bool need_input_grad) {
  const std::size_t length = bank.length();
  check_conv_input(x, length, stride);
  const std::size_t batch = x.dim(0);
  const std::size_t time = x.dim(1);
  const std::size_t filters = bank.num_filters();
  const std::size_t frames = conv_output_frames(time, length, stride);
  require(upstream.shape() == Shape({batch, filters, frames}),
          "conv upstream gradient shape " + shape_string(upstream.shape()) +
              " does not match output " +
              shape_string({batch, filters, frames}));

  // Accumulate against the flipped kernel, then unflip.
  std::vector<double> dflipped(filters * length, 0.0);
  Conv1dGradients grads;
  if (need_input_grad) grads.input = Tensor({batch, time});
  const std::vector<double> flipped =
      need_input_grad ? flipped_kernels(bank.weights) : std::vector<double>{};

  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = x.data() + b * time;
    for (std::size_t f = 0; f < filters; ++f) {
      const double* up = upstream.data() + (b * filters + f) * frames;
      double* dh = dflipped.data() + f * length;
      for (std::size_t j = 0; j < frames; ++j) {
        const double u = up[j];
        if (u == 0.0) continue;
        const double* xs = xb + j * stride;
        for (std::size_t k = 0; k < length; ++k) dh[k] += u * xs[k];
      }
      if (need_input_grad) {
        const double* h = flipped.data() + f * length;
        double* dx = grads.input.data() + b * time;
        for (std::size_t j = 0; j < frames; ++j) {
          const double u = up[j];
          if (u == 0.0) continue;
          double* dxs = dx + j * stride;
          for (std::size_t k = 0; k < length; ++k) dxs[k] += u * h[k];
        }
      }
    }
  }

  grads.weights = Tensor({filters, length});
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t k = 0; k < length; ++k) {
      grads.weights.at(f, length - 1 - k) = dflipped[f * length + k];
    }
  }
  return grads;
}

SincBank SincBank::with_hamming(std::vector<dsp::SincFilterParams> filters,
                                dsp::CutoffLimits limits) {
  require(!filters.empty(), "sinc bank needs at least one filter");
  const std::size_t length = filters.front().length;
  const double rate = filters.front().sample_rate;
  for (const auto& f : filters) {
    require(f.length == length && f.sample_rate == rate,
            "all sinc filters must share length and sample rate");
  }
  SincBank bank;
  bank.filters = std::move(filters);
  bank.window = dsp::hamming_window(length);
  bank.limits = limits;
  return bank;
}

ConvKernelBank materialize(const SincBank& bank) {
  const std::size_t filters = bank.num_filters();
  const std::size_t length = bank.length();
  ConvKernelBank out{Tensor({filters, length}), false};
  for (std::size_t f = 0; f < filters; ++f) {
    const dsp::FilterKernel k =
        dsp::time_domain_kernel(bank.filters[f], bank.window, bank.limits);
    std::copy(k.coeffs.begin(), k.coeffs.end(), out.weights.row(f).begin());
  }
  return out;
}

Tensor sinc_conv(const Tensor& x, const SincBank& bank, std::size_t stride) {
  return conv1d(x, materialize(bank), stride);
}

void sinc_kernel_chain_rule(const SincBank& bank, const Tensor& kernel_grads,
                            std::vector<double>& dtheta1,
                            std::vector<double>& dtheta2) {
  const std::size_t filters = bank.num_filters();
  dtheta1.assign(filters, 0.0);
  dtheta2.assign(filters, 0.0);
  for (std::size_t f = 0; f < filters; ++f) {
    const auto& p = bank.filters[f];
    const dsp::KernelGradients kg =
        dsp::kernel_param_gradients(p, bank.window, bank.limits);
    const auto dk = kernel_grads.row(f);
    double dF1 = 0.0;
    double dF2 = 0.0;
    for (std::size_t n = 0; n < dk.size(); ++n) {
      dF1 += dk[n] * kg.dcoeffs_df1[n];
      dF2 += dk[n] * kg.dcoeffs_df2[n];
    }
    // Normalized frequency F = f / fs.
    const double df1 = dF1 / p.sample_rate;
    const double df2 = dF2 / p.sample_rate;
    const dsp::CutoffJacobian j = dsp::cutoff_jacobian(p, bank.limits);
    dtheta1[f] = df1 * j.df1_dtheta1 + df2 * j.df2_dtheta1;
    dtheta2[f] = df2 * j.df2_dtheta2;
  }
}

SincConvGradients sinc_conv_backward(const Tensor& x, const SincBank& bank,
                                     std::size_t stride, const Tensor& upstream,
                                     bool need_input_grad) {
  Conv1dGradients conv =
      conv1d_backward(x, materialize(bank), stride, upstream, need_input_grad);
  SincConvGradients grads;
  sinc_kernel_chain_rule(bank, conv.weights, grads.theta1, grads.theta2);
  grads.kernels = std::move(conv.weights);
  grads.input = std::move(conv.input);
  return grads;
}

// ---------------------------------------------------------------------------

Tensor batch_norm(const Tensor& x, std::span<const double> gamma,
                  std::span<const double> beta, RunningStats& stats, Mode mode,
                  BatchNormCache* cache) {
  require(x.rank() == 2 || x.rank() == 3,
          "batch_norm expects (N, C) or (N, C, T), got " +
              shape_string(x.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t inner = x.rank() == 3 ? x.dim(2) : 1;
  require(gamma.size() == channels && beta.size() == channels &&
              stats.mean.size() == channels && stats.var.size() == channels,
          "batch_norm parameter size does not match channel count");
  if (mode == Mode::kTrain && n < 2) {
    throw std::invalid_argument("batch_norm in train mode needs batch >= 2, got " +
                                std::to_string(n));
  }

  std::vector<double> mean(channels, 0.0);
  std::vector<double> var(channels, 0.0);
  if (mode == Mode::kTrain) {
    const double count = static_cast<double>(n * inner);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* xs = x.data() + (b * channels + c) * inner;
        for (std::size_t t = 0; t < inner; ++t) mean[c] += xs[t];
      }
    }
    for (double& m : mean) m /= count;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* xs = x.data() + (b * channels + c) * inner;
        for (std::size_t t = 0; t < inner; ++t) {
          const double d = xs[t] - mean[c];
          var[c] += d * d;
        }
      }
    }
    for (double& v : var) v /= count;
    const double m = stats.momentum;
    for (std::size_t c = 0; c < channels; ++c) {
      stats.mean[c] = m * stats.mean[c] + (1.0 - m) * mean[c];
      stats.var[c] = m * stats.var[c] + (1.0 - m) * var[c];
    }
  } else {
    mean = stats.mean;
    var = stats.var;
  }

  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    inv_std[c] = 1.0 / std::sqrt(var[c] + kBatchNormEpsilon);
  }

  Tensor y(x.shape());
  Tensor xhat(x.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * inner;
      for (std::size_t t = 0; t < inner; ++t) {
        const double h = (x[base + t] - mean[c]) * inv_std[c];
        xhat[base + t] = h;
        y[base + t] = gamma[c] * h + beta[c];
      }
    }
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return y;
}

BatchNormGradients batch_norm_backward(const Tensor& upstream,
                                       std::span<const double> gamma,
                                       const BatchNormCache& cache) {
  const Tensor& xhat = cache.xhat;
  require(upstream.shape() == xhat.shape(),
          "batch_norm upstream shape mismatch");
  const std::size_t n = xhat.dim(0);
  const std::size_t channels = xhat.dim(1);
  const std::size_t inner = xhat.rank() == 3 ? xhat.dim(2) : 1;

  BatchNormGradients g;
  g.gamma.assign(channels, 0.0);
  g.beta.assign(channels, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * inner;
      for (std::size_t t = 0; t < inner; ++t) {
        g.beta[c] += upstream[base + t];
        g.gamma[c] += upstream[base + t] * xhat[base + t];
      }
    }
  }

  g.input = Tensor(xhat.shape());
  if (cache.mode == Mode::kEval) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t base = (b * channels + c) * inner;
        const double s = gamma[c] * cache.inv_std[c];
        for (std::size_t t = 0; t < inner; ++t) g.input[base + t] = s * upstream[base + t];
      }
    }
    return g;
  }

  // dx = gamma * inv_std / m * (m dy - sum dy - xhat sum(dy xhat))
  const double count = static_cast<double>(n * inner);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * inner;
      const double s = gamma[c] * cache.inv_std[c] / count;
      for (std::size_t t = 0; t < inner; ++t) {
        g.input[base + t] = s * (count * upstream[base + t] - g.beta[c] -
                                 xhat[base + t] * g.gamma[c]);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  }
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& upstream,
                           double slope) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    g[i] = x[i] > 0.0 ? upstream[i] : slope * upstream[i];
  }
  return g;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

MaxPoolResult max_pool_last(const Tensor& x, std::size_t window) {
  require(window >= 1, "pool window must be >= 1");
  require(x.rank() >= 1, "pool input must have rank >= 1");
  const std::size_t time = x.shape().back();
  const std::size_t outer = x.size() / std::max<std::size_t>(time, 1);
  const std::size_t frames = time / window;
  require(frames >= 1, "pool input of length " + std::to_string(time) +
                           " is shorter than window " + std::to_string(window));
  Shape out_shape = x.shape();
  out_shape.back() = frames;
  MaxPoolResult r{Tensor(out_shape), std::vector<std::size_t>(outer * frames)};
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < frames; ++j) {
      std::size_t best = o * time + j * window;
      for (std::size_t k = 1; k < window; ++k) {
        const std::size_t idx = o * time + j * window + k;
        if (x[idx] > x[best]) best = idx;
      }
      r.output[o * frames + j] = x[best];
      r.argmax[o * frames + j] = best;
    }
  }
  return r;
}

Tensor max_pool_last_backward(const Shape& input_shape,
                              const MaxPoolResult& forward,
                              const Tensor& upstream) {
  require(upstream.shape() == forward.output.shape(),
          "pool upstream shape mismatch");
  Tensor g(input_shape);
  for (std::size_t i = 0; i < upstream.size(); ++i) {
    g[forward.argmax[i]] += upstream[i];
  }
  return g;
}

// ---------------------------------------------------------------------------

Tensor dense(const Tensor& x, const DenseParams& p) {
  const std::size_t out = p.weights.dim(0);
  const std::size_t in = p.weights.dim(1);
  require(x.size() == in && p.bias.size() == out,
          "dense expects input of size " + std::to_string(in) + ", got " +
              std::to_string(x.size()));
  Tensor y({out});
  for (std::size_t o = 0; o < out; ++o) {
    y[o] = p.bias[o] + dot(p.weights.data() + o * in, x.data(), in);
  }
  return y;
}

DenseGradients dense_backward(const Tensor& x, const DenseParams& p,
                              const Tensor& upstream) {
  const std::size_t out = p.weights.dim(0);
  const std::size_t in = p.weights.dim(1);
  require(upstream.size() == out && x.size() == in,
          "dense backward shape mismatch");
  DenseGradients g{Tensor(x.shape()), Tensor(p.weights.shape()), upstream};
  g.bias = Tensor({out}, upstream.values());
  for (std::size_t o = 0; o < out; ++o) {
    const double u = upstream[o];
    const double* w = p.weights.data() + o * in;
    double* dw = g.weights.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) {
      dw[i] = u * x[i];
      g.input[i] += u * w[i];
    }
  }
  return g;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw std::out_of_range("label " + std::to_string(label) +
                            " out of range for " +
                            std::to_string(logits.size()) + " classes");
  }
  const auto& z = logits.values();
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  const double log_sum = std::log(sum) + mx;

  CrossEntropy ce;
  ce.loss = log_sum - z[static_cast<std::size_t>(label)];
  ce.grad = Tensor({z.size()});
  for (std::size_t k = 0; k < z.size(); ++k) {
    ce.grad[k] = std::exp(z[k] - log_sum);
  }
  ce.grad[static_cast<std::size_t>(label)] -= 1.0;
  return ce;
}

// ---------------------------------------------------------------------------

LstmState lstm_step(std::span<const double> x, const LstmState& state,
                    const LstmParams& p, LstmStepCache* cache) {
  const std::size_t hidden = p.hidden();
  const std::size_t in = p.input();
  require(x.size() == in, "lstm input size " + std::to_string(x.size()) +
                              " != " + std::to_string(in));
  require(state.h.size() == hidden && state.c.size() == hidden,
          "lstm state size mismatch");
  require(p.weights.dim(0) == 4 * hidden, "lstm weight rows must be 4*hidden");

  std::vector<double> z(in + hidden);
  std::copy(x.begin(), x.end(), z.begin());
  std::copy(state.h.begin(), state.h.end(), z.begin() + static_cast<std::ptrdiff_t>(in));

  const std::size_t cols = in + hidden;
  std::vector<double> pre(4 * hidden);
  for (std::size_t r = 0; r < 4 * hidden; ++r) {
    pre[r] = p.bias[r] + dot(p.weights.data() + r * cols, z.data(), cols);
  }

  LstmState next = LstmState::zeros(hidden);
  std::vector<double> gi(hidden), gf(hidden), gg(hidden), go(hidden), tc(hidden);
  for (std::size_t k = 0; k < hidden; ++k) {
    gi[k] = sigmoid(pre[k]);
    gf[k] = sigmoid(pre[hidden + k]);
    gg[k] = std::tanh(pre[2 * hidden + k]);
    go[k] = sigmoid(pre[3 * hidden + k]);
    next.c[k] = gf[k] * state.c[k] + gi[k] * gg[k];
    tc[k] = std::tanh(next.c[k]);
    next.h[k] = go[k] * tc[k];
  }
  if (cache != nullptr) {
    cache->input = std::move(z);
    cache->c_prev = state.c;
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->g = std::move(gg);
    cache->o = std::move(go);
    cache->tanh_c = std::move(tc);
  }
  return next;
}

namespace {

// Shared step backward; accumulates parameter gradients in place and writes
// dL/d[x, h_prev] and dL/dc_prev.
void lstm_step_backward_into(const LstmStepCache& cache, const LstmParams& p,
                             std::span<const double> dh,
                             std::span<const double> dc, Tensor& dweights,
                             Tensor& dbias, std::vector<double>& dinput,
                             std::vector<double>& dc_prev) {
  const std::size_t hidden = p.hidden();
  const std::size_t cols = cache.input.size();
  std::vector<double> dpre(4 * hidden);
  dc_prev.assign(hidden, 0.0);
  for (std::size_t k = 0; k < hidden; ++k) {
    const double d_o = dh[k] * cache.tanh_c[k];
    const double dct =
        dc[k] + dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
    const double d_i = dct * cache.g[k];
    const double d_f = dct * cache.c_prev[k];
    const double d_g = dct * cache.i[k];
    dc_prev[k] = dct * cache.f[k];
    dpre[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
    dpre[hidden + k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
    dpre[2 * hidden + k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
    dpre[3 * hidden + k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
  }
  dinput.assign(cols, 0.0);
  for (std::size_t r = 0; r < 4 * hidden; ++r) {
    const double d = dpre[r];
    dbias[r] += d;
    if (d == 0.0) continue;
    const double* w = p.weights.data() + r * cols;
    double* dw = dweights.data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      dw[j] += d * cache.input[j];
      dinput[j] += d * w[j];
    }
  }
}

}  // namespace

LstmStepGradients lstm_step_backward(const LstmStepCache& cache,
                                     const LstmParams& p,
                                     std::span<const double> dh,
                                     std::span<const double> dc) {
  const std::size_t hidden = p.hidden();
  require(dh.size() == hidden && dc.size() == hidden,
          "lstm backward gradient size mismatch");
  LstmStepGradients g;
  g.weights = Tensor(p.weights.shape());
  g.bias = Tensor(p.bias.shape());
  std::vector<double> dinput;
  lstm_step_backward_into(cache, p, dh, dc, g.weights, g.bias, dinput, g.c_prev);
  const std::size_t in = p.input();
  g.x.assign(dinput.begin(), dinput.begin() + static_cast<std::ptrdiff_t>(in));
  g.h_prev.assign(dinput.begin() + static_cast<std::ptrdiff_t>(in), dinput.end());
  return g;
}

Tensor lstm_sequence(const Tensor& xs, const LstmParams& p,
                     LstmSequenceCache* cache) {
  require(xs.rank() == 2, "lstm sequence input must be (steps, input)");
  const std::size_t steps = xs.dim(0);
  const std::size_t hidden = p.hidden();
  Tensor hs({steps, hidden});
  if (cache != nullptr) cache->assign(steps, LstmStepCache{});
  LstmState state = LstmState::zeros(hidden);
  for (std::size_t t = 0; t < steps; ++t) {
    state = lstm_step(xs.row(t), state, p,
                      cache != nullptr ? &(*cache)[t] : nullptr);
    std::copy(state.h.begin(), state.h.end(), hs.row(t).begin());
  }
  return hs;
}

LstmSequenceGradients lstm_sequence_backward(const LstmSequenceCache& cache,
                                             const LstmParams& p,
                                             const Tensor& dhs) {
  const std::size_t steps = cache.size();
  const std::size_t hidden = p.hidden();
  const std::size_t in = p.input();
  require(dhs.shape() == Shape({steps, hidden}),
          "lstm sequence upstream must be (steps, hidden)");
  LstmSequenceGradients g{Tensor({steps, in}), Tensor(p.weights.shape()),
                          Tensor(p.bias.shape())};
  std::vector<double> dh(hidden, 0.0);
  std::vector<double> dc(hidden, 0.0);
  std::vector<double> dinput;
  std::vector<double> dc_prev;
  for (std::size_t t = steps; t-- > 0;) {
    const auto up = dhs.row(t);
    for (std::size_t k = 0; k < hidden; ++k) dh[k] += up[k];
    lstm_step_backward_into(cache[t], p, dh, dc, g.weights, g.bias, dinput,
                            dc_prev);
    std::copy(dinput.begin(), dinput.begin() + static_cast<std::ptrdiff_t>(in),
              g.input.row(t).begin());
    std::copy(dinput.begin() + static_cast<std::ptrdiff_t>(in), dinput.end(),
              dh.begin());
    dc = dc_prev;
  }
  return g;
}

// ---------------------------------------------------------------------------

Tensor self_attention(const Tensor& h, const AttentionParams& p,
                      AttentionCache* cache) {
  require(h.rank() == 2, "self_attention input must be (steps, dim)");
  const std::size_t steps = h.dim(0);
  const std::size_t dim = h.dim(1);
  if (steps == 0) {
    throw std::invalid_argument("self_attention over an empty sequence");
  }
  const std::size_t dk = p.query.dim(0);
  require(p.query.dim(1) == dim && p.key.shape() == p.query.shape(),
          "attention projection shapes do not match input dim");

  std::vector<double> mean(dim, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto r = h.row(t);
    for (std::size_t d = 0; d < dim; ++d) mean[d] += r[d];
  }
  for (double& m : mean) m /= static_cast<double>(steps);

  std::vector<double> q(dk);
  for (std::size_t a = 0; a < dk; ++a) {
    q[a] = dot(p.query.data() + a * dim, mean.data(), dim);
  }
  Tensor keys({steps, dk});
  std::vector<double> scores(steps);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t a = 0; a < dk; ++a) {
      keys.at(t, a) = dot(p.key.data() + a * dim, h.row(t).data(), dim);
    }
    scores[t] = scale * dot(q.data(), keys.row(t).data(), dk);
  }
  std::vector<double> weights = softmax(scores);

  Tensor out({dim});
  for (std::size_t t = 0; t < steps; ++t) {
    const auto r = h.row(t);
    for (std::size_t d = 0; d < dim; ++d) out[d] += weights[t] * r[d];
  }
  if (cache != nullptr) {
    cache->h = h;
    cache->mean = std::move(mean);
    cache->q = std::move(q);
    cache->keys = std::move(keys);
    cache->weights = std::move(weights);
  }
  return out;
}

AttentionGradients self_attention_backward(const AttentionCache& cache,
                                           const AttentionParams& p,
                                           const Tensor& upstream) {
  const Tensor& h = cache.h;
  const std::size_t steps = h.dim(0);
  const std::size_t dim = h.dim(1);
  const std::size_t dk = p.query.dim(0);
  require(upstream.size() == dim, "attention upstream size mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  AttentionGradients g{Tensor(h.shape()), Tensor(p.query.shape()),
                       Tensor(p.key.shape())};

  // Through the weighted sum.
  std::vector<double> dweights(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto r = h.row(t);
    dweights[t] = dot(upstream.data(), r.data(), dim);
    auto gr = g.input.row(t);
    for (std::size_t d = 0; d < dim; ++d) gr[d] += cache.weights[t] * upstream[d];
  }
  // Through the softmax.
  double mix = 0.0;
  for (std::size_t t = 0; t < steps; ++t) mix += cache.weights[t] * dweights[t];
  std::vector<double> dscores(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    dscores[t] = cache.weights[t] * (dweights[t] - mix);
  }
  // Through q . k_t / sqrt(dk).
  std::vector<double> dq(dk, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const double s = dscores[t] * scale;
    const auto k = cache.keys.row(t);
    const auto r = h.row(t);
    auto gr = g.input.row(t);
    for (std::size_t a = 0; a < dk; ++a) {
      dq[a] += s * k[a];
      const double dkey = s * cache.q[a];
      const double* wk = p.key.data() + a * dim;
      double* dwk = g.key.data() + a * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        dwk[d] += dkey * r[d];
        gr[d] += dkey * wk[d];
      }
    }
  }
  // Through q = Wq mean(h).
  std::vector<double> dmean(dim, 0.0);
  for (std::size_t a = 0; a < dk; ++a) {
    const double* wq = p.query.data() + a * dim;
    double* dwq = g.query.data() + a * dim;
    for (std::size_t d = 0; d < dim; ++d) {
      dwq[d] += dq[a] * cache.mean[d];
      dmean[d] += dq[a] * wq[d];
    }
  }
  const double inv_steps = 1.0 / static_cast<double>(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    auto gr = g.input.row(t);
    for (std::size_t d = 0; d < dim; ++d) gr[d] += dmean[d] * inv_steps;
  }
  return g;
}

// ---------------------------------------------------------------------------

Tensor embedding_lookup(const Tensor& table, std::span<const int> tokens) {
  const std::size_t vocab = table.dim(0);
  const std::size_t dim = table.dim(1);
  Tensor out({tokens.size(), dim});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int id = tokens[t];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    const auto src = table.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

void embedding_accumulate_grad(std::span<const int> tokens,
                               const Tensor& upstream, Tensor& table_grad) {
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto dst = table_grad.row(static_cast<std::size_t>(tokens[t]));
    const auto src = upstream.row(t);
    for (std::size_t d = 0; d < dst.size(); ++d) dst[d] += src[d];
  }
}

}  // namespace sincser::layers
