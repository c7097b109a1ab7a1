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

#ifndef SINCSER_LAYERS_HPP_
#define SINCSER_LAYERS_HPP_

// Forward and hand-derived backward passes for the layers the models use.
// There is no autodiff graph: each backward takes the forward inputs (or a
// cache filled by the forward) plus the upstream gradient and returns the
// gradients for the layer's inputs and parameters.

#include <cstddef>
#include <span>
#include <vector>

#include "sincser/dsp.hpp"
#include "sincser/tensor.hpp"

namespace sincser::layers {

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

// Standard FIR bank: weights has shape (num_filters, length).
struct ConvKernelBank {
  Tensor weights;
  bool learnable = true;

  std::size_t num_filters() const { return weights.dim(0); }
  std::size_t length() const { return weights.dim(1); }
  std::size_t learnable_parameter_count() const {
    return learnable ? weights.size() : 0;
  }
};

std::size_t conv_output_frames(std::size_t time, std::size_t length,
                               std::size_t stride);

// Valid-mode strided convolution y[n] = sum_l x[l] h[n - l].
// x: (batch, time) -> (batch, num_filters, frames).
Tensor conv1d(const Tensor& x, const ConvKernelBank& bank, std::size_t stride);

struct Conv1dGradients {
  Tensor weights;  // (num_filters, length)
  Tensor input;    // (batch, time); empty when not requested
};

Conv1dGradients conv1d_backward(const Tensor& x, const ConvKernelBank& bank,
                                std::size_t stride, const Tensor& upstream,
                                bool need_input_grad = true);

// Learnable sinc filterbank: two raw parameters per filter plus a fixed window.
struct SincBank {
  std::vector<dsp::SincFilterParams> filters;
  std::vector<double> window;
  dsp::CutoffLimits limits;

  // Hamming-windowed bank; all filters must share length and sample rate.
  static SincBank with_hamming(std::vector<dsp::SincFilterParams> filters,
                               dsp::CutoffLimits limits = {});

  std::size_t num_filters() const { return filters.size(); }
  std::size_t length() const { return window.size(); }
  std::size_t learnable_parameter_count() const { return 2 * filters.size(); }
};

// Evaluates every kernel into a non-learnable conv bank.
ConvKernelBank materialize(const SincBank& bank);

Tensor sinc_conv(const Tensor& x, const SincBank& bank, std::size_t stride);

struct SincConvGradients {
  std::vector<double> theta1;  // per filter
  std::vector<double> theta2;  // per filter
  Tensor kernels;              // dL/dcoeffs, (num_filters, length)
  Tensor input;                // empty when not requested
};

SincConvGradients sinc_conv_backward(const Tensor& x, const SincBank& bank,
                                     std::size_t stride, const Tensor& upstream,
                                     bool need_input_grad = true);

// Chains dL/dcoeffs through the kernel formula and the cutoff mapping.
void sinc_kernel_chain_rule(const SincBank& bank, const Tensor& kernel_grads,
                            std::vector<double>& dtheta1,
                            std::vector<double>& dtheta2);

// ---------------------------------------------------------------------------
// Batch normalization over (N, C) or (N, C, T); statistics per channel C.
// ---------------------------------------------------------------------------

enum class Mode { kTrain, kEval };

struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch

  RunningStats() = default;
  explicit RunningStats(std::size_t channels)
      : mean(channels, 0.0), var(channels, 1.0) {}
};

struct BatchNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
  Mode mode = Mode::kTrain;
};

inline constexpr double kBatchNormEpsilon = 1e-5;

// Throws if mode is kTrain and batch < 2.
Tensor batch_norm(const Tensor& x, std::span<const double> gamma,
                  std::span<const double> beta, RunningStats& stats, Mode mode,
                  BatchNormCache* cache = nullptr);

struct BatchNormGradients {
  Tensor input;
  std::vector<double> gamma;
  std::vector<double> beta;
};

BatchNormGradients batch_norm_backward(const Tensor& upstream,
                                       std::span<const double> gamma,
                                       const BatchNormCache& cache);

// ---------------------------------------------------------------------------
// Elementwise activations and pooling
// ---------------------------------------------------------------------------

inline constexpr double kLeakySlope = 0.1;

Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& upstream,
                           double slope = kLeakySlope);

double sigmoid(double x);

struct MaxPoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

// Non-overlapping max pool over the last axis; a trailing remainder shorter
// than the window is dropped.
MaxPoolResult max_pool_last(const Tensor& x, std::size_t window);
Tensor max_pool_last_backward(const Shape& input_shape,
                              const MaxPoolResult& forward,
                              const Tensor& upstream);

// ---------------------------------------------------------------------------
// Dense and classifier head
// ---------------------------------------------------------------------------

struct DenseParams {
  Tensor weights;  // (out, in)
  Tensor bias;     // (out)
};

Tensor dense(const Tensor& x, const DenseParams& p);

struct DenseGradients {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGradients dense_backward(const Tensor& x, const DenseParams& p,
                              const Tensor& upstream);

std::vector<double> softmax(std::span<const double> logits);

struct CrossEntropy {
  double loss = 0.0;
  Tensor grad;  // softmax(logits) - onehot(label)
};

// -log softmax(logits)[label]; throws std::out_of_range for a bad label.
CrossEntropy softmax_cross_entropy(const Tensor& logits, int label);

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

// Gate rows are stacked as [input, forget, candidate, output], each of size
// hidden; columns are [x, h_prev].
struct LstmParams {
  Tensor weights;  // (4 hidden, input + hidden)
  Tensor bias;     // (4 hidden)

  std::size_t hidden() const { return bias.size() / 4; }
  std::size_t input() const { return weights.dim(1) - hidden(); }
};

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;

  static LstmState zeros(std::size_t hidden) {
    return {std::vector<double>(hidden, 0.0), std::vector<double>(hidden, 0.0)};
  }
};

struct LstmStepCache {
  std::vector<double> input;  // [x, h_prev]
  std::vector<double> c_prev;
  std::vector<double> i, f, g, o;
  std::vector<double> tanh_c;
};

LstmState lstm_step(std::span<const double> x, const LstmState& state,
                    const LstmParams& p, LstmStepCache* cache = nullptr);

struct LstmStepGradients {
  std::vector<double> x;
  std::vector<double> h_prev;
  std::vector<double> c_prev;
  Tensor weights;
  Tensor bias;
};

LstmStepGradients lstm_step_backward(const LstmStepCache& cache,
                                     const LstmParams& p,
                                     std::span<const double> dh,
                                     std::span<const double> dc);

using LstmSequenceCache = std::vector<LstmStepCache>;

// xs: (steps, input) -> hidden states (steps, hidden), zero initial state.
Tensor lstm_sequence(const Tensor& xs, const LstmParams& p,
                     LstmSequenceCache* cache = nullptr);

struct LstmSequenceGradients {
  Tensor input;  // (steps, input)
  Tensor weights;
  Tensor bias;
};

// Backpropagation through time given dL/dh_t for every step.
LstmSequenceGradients lstm_sequence_backward(const LstmSequenceCache& cache,
                                             const LstmParams& p,
                                             const Tensor& dhs);

// ---------------------------------------------------------------------------
// Self-attention pooling
// ---------------------------------------------------------------------------

// Single-head scaled dot-product pooling. The query is a projection of the
// sequence mean, keys are projections of each position, values are the
// positions themselves:
//   q = Wq mean_t(h_t),  k_t = Wk h_t,  a = softmax_t(q . k_t / sqrt(dk)),
//   out = sum_t a_t h_t.
struct AttentionParams {
  Tensor query;  // (dk, dim)
  Tensor key;    // (dk, dim)
};

struct AttentionCache {
  Tensor h;
  std::vector<double> mean;
  std::vector<double> q;
  Tensor keys;  // (steps, dk)
  std::vector<double> weights;
};

// h: (steps, dim) -> (dim). Throws for steps == 0.
Tensor self_attention(const Tensor& h, const AttentionParams& p,
                      AttentionCache* cache = nullptr);

struct AttentionGradients {
  Tensor input;  // (steps, dim)
  Tensor query;
  Tensor key;
};

AttentionGradients self_attention_backward(const AttentionCache& cache,
                                           const AttentionParams& p,
                                           const Tensor& upstream);

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

// table: (vocab, dim); tokens index rows. Throws std::out_of_range.
Tensor embedding_lookup(const Tensor& table, std::span<const int> tokens);
void embedding_accumulate_grad(std::span<const int> tokens,
                               const Tensor& upstream, Tensor& table_grad);

}  // namespace sincser::layers

#endif  // SINCSER_LAYERS_HPP_
