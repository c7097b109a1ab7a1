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

#ifndef SINCSER_MODELS_HPP_
#define SINCSER_MODELS_HPP_

// Model composition: acoustic front-ends (cnn, sinc_dnn, sinc_lstm), the
// linguistic LSTM + self-attention encoder, and attention-gated feature
// fusion. M1 is fusion over sinc_dnn, M2 is fusion over sinc_lstm.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sincser/layers.hpp"
#include "sincser/tensor.hpp"

namespace sincser::models {

inline constexpr std::size_t kNumClasses = 4;

enum class AcousticVariant { kCnn, kSincDnn, kSincLstm };
enum class Modality { kAcoustic, kLinguistic, kFusion };

std::string to_string(AcousticVariant v);
std::string to_string(Modality m);
// Throws std::invalid_argument naming the valid choices.
AcousticVariant parse_acoustic_variant(std::string_view name);
Modality parse_modality(std::string_view name);

struct ModelConfig {
  AcousticVariant acoustic_variant = AcousticVariant::kSincLstm;
  Modality modality = Modality::kAcoustic;

  std::size_t num_filters = 16;
  std::size_t kernel_length = 251;
  std::size_t stride = 16;
  std::size_t pool_window = 4;
  double sample_rate = 16000.0;
  std::size_t chunk_samples = 4000;
  double cutoff_f_min = 30.0;
  double cutoff_band_min = 50.0;
  std::size_t acoustic_hidden = 32;
  std::size_t acoustic_vec_dim = 64;

  std::size_t vocab_size = 4096;
  std::size_t embedding_dim = 16;
  std::size_t linguistic_hidden = 32;
  std::size_t attention_dim = 16;
  std::size_t linguistic_vec_dim = 96;
  std::size_t max_seq_len = 64;

  std::size_t num_classes = kNumClasses;
  std::uint64_t seed = 0;

  bool uses_acoustic() const { return modality != Modality::kLinguistic; }
  bool uses_linguistic() const { return modality != Modality::kAcoustic; }
  bool is_sinc() const { return acoustic_variant != AcousticVariant::kCnn; }

  // Throws std::invalid_argument on the first violated constraint.
  void validate() const;

  // Fusion dimensions at full scale (2048-D acoustic, 4800-D text).
  static ModelConfig full_scale();
};

// Class order: happy, neutral, angry, sad.
struct Posterior {
  std::array<double, kNumClasses> probs{};

  bool is_valid(double tolerance = 1e-9) const;
};

// Argmax with ties resolved to the lowest class index.
int predict(const Posterior& posterior);

enum class ParamGroup { kDefault, kCutoff };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  ParamGroup group = ParamGroup::kDefault;
};

// Ordered named parameters; order is the checkpoint and optimizer order.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value,
                  ParamGroup group = ParamGroup::kDefault);
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Parameter* find(std::string_view name) const;
  Parameter* find(std::string_view name);
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// One minibatch. chunks is (batch, chunk_samples) and may be empty for a
// linguistic-only model; tokens may be empty for an acoustic-only model.
struct Batch {
  Tensor chunks;
  std::vector<std::vector<int>> tokens;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct AcousticOutput {
  Tensor features;  // (acoustic_vec_dim)
  Posterior posterior;
};

struct LinguisticOutput {
  Tensor features;  // (linguistic_vec_dim)
  Posterior posterior;
};

struct FusionParams {
  layers::DenseParams acoustic_gate;    // (Va, Va)
  layers::DenseParams linguistic_gate;  // (Vl, Vl)
  layers::DenseParams head;             // (classes, Va + Vl)
};

class Model {
 public:
  Model() = default;

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  layers::RunningStats& bn_stats() { return bn_stats_; }
  const layers::RunningStats& bn_stats() const { return bn_stats_; }

  std::size_t parameter_count() const { return params_.scalar_count(); }
  // Learnable scalars in the first (waveform) layer: 2F for sinc, F*L for cnn.
  std::size_t first_layer_parameter_count() const;

  // Current sinc bank; throws for the cnn variant.
  layers::SincBank sinc_bank() const;
  // First-layer kernels as a conv bank (sinc kernels materialized).
  layers::ConvKernelBank frontend_kernels() const;

  // Train-mode forward and backward; adds dL/dparam of the mean batch loss
  // into each Parameter::grad and updates batch-norm running statistics.
  // Returns the mean cross-entropy; optionally reports the train-mode
  // posteriors.
  double accumulate_gradients(const Batch& batch,
                              std::vector<Posterior>* posteriors = nullptr);

  // Mean cross-entropy without touching gradients or running statistics.
  double loss(const Batch& batch, layers::Mode mode) const;

  // Eval-mode posteriors for every example.
  std::vector<Posterior> predict_batch(const Batch& batch) const;

  FusionParams fusion_params() const;

 private:
  friend Model build_model(const ModelConfig& config);
  friend Model model_from_parameters(const ModelConfig& config,
                                     ParameterSet params,
                                     layers::RunningStats stats);
  friend AcousticOutput acoustic_forward(const Model& model, const Tensor& chunk);
  friend LinguisticOutput linguistic_forward(const Model& model,
                                             std::span<const int> tokens);

  struct Indices {
    std::size_t frontend = 0;  // sinc theta (F, 2) or conv weights (F, L)
    std::size_t bn_gamma = 0, bn_beta = 0;
    std::size_t dnn_w = 0, dnn_b = 0;
    std::size_t alstm_w = 0, alstm_b = 0;
    std::size_t aproj_w = 0, aproj_b = 0;
    std::size_t ahead_w = 0, ahead_b = 0;
    std::size_t embedding = 0;
    std::size_t llstm_w = 0, llstm_b = 0;
    std::size_t attn_q = 0, attn_k = 0;
    std::size_t lproj_w = 0, lproj_b = 0;
    std::size_t lhead_w = 0, lhead_b = 0;
    std::size_t gate_a_w = 0, gate_a_b = 0;
    std::size_t gate_l_w = 0, gate_l_b = 0;
    std::size_t fhead_w = 0, fhead_b = 0;
  };

  void bind_indices();
  double run(const Batch& batch, layers::Mode mode, bool backward,
             layers::RunningStats& stats, std::vector<Posterior>* posteriors);

  const Tensor& value(std::size_t i) const { return params_[i].value; }
  layers::DenseParams dense_params(std::size_t w, std::size_t b) const;
  layers::LstmParams lstm_params(std::size_t w, std::size_t b) const;

  ModelConfig config_;
  ParameterSet params_;
  layers::RunningStats bn_stats_;
  Indices idx_;
};

// Deterministic initialization from config.seed; sinc variants start from
// the mel-spaced bank. Throws on an invalid config.
Model build_model(const ModelConfig& config);

// Rebuilds a model around existing parameters (checkpoint loading). Names and
// shapes must match what build_model would create.
Model model_from_parameters(const ModelConfig& config, ParameterSet params,
                            layers::RunningStats stats);

// Eval-mode acoustic branch for one chunk of chunk_samples samples.
AcousticOutput acoustic_forward(const Model& model, const Tensor& chunk);

// Eval-mode linguistic branch; 1 <= tokens.size() <= max_seq_len.
LinguisticOutput linguistic_forward(const Model& model,
                                    std::span<const int> tokens);

// Gate each modality vector by sigmoid(W v + b), concatenate, dense, softmax.
Posterior fuse(const Tensor& acoustic_features,
               const Tensor& linguistic_features, const FusionParams& params);

}  // namespace sincser::models

#endif  // SINCSER_MODELS_HPP_
