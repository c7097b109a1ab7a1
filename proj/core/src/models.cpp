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

#include "sincser/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace sincser::models {
namespace {

using layers::Mode;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void add_into(Tensor& dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Posterior to_posterior(const Tensor& logits) {
  const std::vector<double> p = layers::softmax(logits.values());
  Posterior out;
  std::copy(p.begin(), p.end(), out.probs.begin());
  return out;
}

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // Glorot-uniform (fan_out, fan_in) matrix.
  Tensor glorot(std::size_t rows, std::size_t cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    return uniform({rows, cols}, limit);
  }

  Tensor uniform(Shape shape, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = dist(rng_);
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

// (F, T) slice of a (B, F, T) tensor, transposed to (T, F).
Tensor time_major(const Tensor& x, std::size_t b) {
  const std::size_t filters = x.dim(1);
  const std::size_t frames = x.dim(2);
  Tensor out({frames, filters});
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t t = 0; t < frames; ++t) out.at(t, f) = x.at(b, f, t);
  }
  return out;
}

Tensor mean_rows(const Tensor& x) {
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  Tensor out({cols});
  for (std::size_t r = 0; r < rows; ++r) add_into(out, x.row(r));
  for (double& v : out.values()) v /= static_cast<double>(rows);
  return out;
}

struct GateResult {
  Tensor pre;
  Tensor gate;
  Tensor gated;
};

GateResult apply_gate(const Tensor& v, const layers::DenseParams& p) {
  GateResult r{layers::dense(v, p), Tensor(v.shape()), Tensor(v.shape())};
  for (std::size_t i = 0; i < v.size(); ++i) {
    r.gate[i] = layers::sigmoid(r.pre[i]);
    r.gated[i] = r.gate[i] * v[i];
  }
  return r;
}

}  // namespace

std::string to_string(AcousticVariant v) {
  switch (v) {
    case AcousticVariant::kCnn: return "cnn";
    case AcousticVariant::kSincDnn: return "sinc_dnn";
    case AcousticVariant::kSincLstm: return "sinc_lstm";
  }
  return "unknown";
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kAcoustic: return "acoustic";
    case Modality::kLinguistic: return "linguistic";
    case Modality::kFusion: return "fusion";
  }
  return "unknown";
}

AcousticVariant parse_acoustic_variant(std::string_view name) {
  if (name == "cnn") return AcousticVariant::kCnn;
  if (name == "sinc_dnn") return AcousticVariant::kSincDnn;
  if (name == "sinc_lstm") return AcousticVariant::kSincLstm;
  throw std::invalid_argument("invalid acoustic variant '" + std::string(name) +
                              "' (expected cnn, sinc_dnn or sinc_lstm)");
}

Modality parse_modality(std::string_view name) {
  if (name == "acoustic") return Modality::kAcoustic;
  if (name == "linguistic") return Modality::kLinguistic;
  if (name == "fusion") return Modality::kFusion;
  throw std::invalid_argument("invalid modality '" + std::string(name) +
                              "' (expected acoustic, linguistic or fusion)");
}

void ModelConfig::validate() const {
  require(num_classes == kNumClasses, "num_classes must be 4");
  require(num_filters >= 1 && kernel_length >= 1 && stride >= 1 &&
              pool_window >= 1 && acoustic_hidden >= 1 &&
              acoustic_vec_dim >= 1 && vocab_size >= 1 && embedding_dim >= 1 &&
              linguistic_hidden >= 1 && attention_dim >= 1 &&
              linguistic_vec_dim >= 1 && max_seq_len >= 1,
          "all model dimensions must be >= 1");
  require(sample_rate > 0.0, "sample_rate must be positive");
  if (is_sinc()) {
    require(kernel_length % 2 == 1, "sinc kernel_length must be odd");
  }
  if (uses_acoustic()) {
    const std::size_t frames =
        layers::conv_output_frames(chunk_samples, kernel_length, stride);
    require(frames >= pool_window,
            "chunk_samples too short for kernel_length/stride/pool_window");
  }
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.modality = Modality::kFusion;
  c.acoustic_vec_dim = 2048;
  c.linguistic_vec_dim = 4800;
  return c;
}

bool Posterior::is_valid(double tolerance) const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tolerance;
}

int predict(const Posterior& posterior) {
  int best = 0;
  for (std::size_t k = 1; k < posterior.probs.size(); ++k) {
    if (posterior.probs[k] > posterior.probs[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(k);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

std::size_t ParameterSet::add(std::string name, Tensor value, ParamGroup group) {
  if (index_.count(name) != 0) {
    throw std::invalid_argument("duplicate parameter name " + name);
  }
  const std::size_t i = params_.size();
  Tensor grad(value.shape());
  index_.emplace(name, i);
  params_.push_back({std::move(name), std::move(value), std::move(grad), group});
  return i;
}

const Parameter* ParameterSet::find(std::string_view name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter* ParameterSet::find(std::string_view name) {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

// ---------------------------------------------------------------------------

Model build_model(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config_ = config;
  Initializer init(config.seed);
  ParameterSet& ps = m.params_;
  const std::size_t F = config.num_filters;

  if (config.uses_acoustic()) {
    if (config.is_sinc()) {
      const auto filters = dsp::mel_spaced_init(
          static_cast<int>(F), config.sample_rate, config.kernel_length,
          {config.cutoff_f_min, config.cutoff_band_min});
      Tensor theta({F, 2});
      for (std::size_t f = 0; f < F; ++f) {
        theta.at(f, 0) = filters[f].theta1;
        theta.at(f, 1) = filters[f].theta2;
      }
      ps.add("acoustic.sinc.theta", std::move(theta), ParamGroup::kCutoff);
    } else {
      ps.add("acoustic.conv.weight", init.glorot(F, config.kernel_length));
    }
    ps.add("acoustic.bn.gamma", Tensor({F}, 1.0));
    ps.add("acoustic.bn.beta", Tensor({F}, 0.0));
    const std::size_t H = config.acoustic_hidden;
    if (config.acoustic_variant == AcousticVariant::kSincLstm) {
      ps.add("acoustic.lstm.weight", init.glorot(4 * H, F + H));
      Tensor bias({4 * H}, 0.0);
      for (std::size_t k = H; k < 2 * H; ++k) bias[k] = 1.0;  // forget gate
      ps.add("acoustic.lstm.bias", std::move(bias));
    } else {
      ps.add("acoustic.dnn.weight", init.glorot(H, F));
      ps.add("acoustic.dnn.bias", Tensor({H}));
    }
    ps.add("acoustic.proj.weight", init.glorot(config.acoustic_vec_dim, H));
    ps.add("acoustic.proj.bias", Tensor({config.acoustic_vec_dim}));
    ps.add("acoustic.head.weight",
           init.glorot(config.num_classes, config.acoustic_vec_dim));
    ps.add("acoustic.head.bias", Tensor({config.num_classes}));
  }

  if (config.uses_linguistic()) {
    const std::size_t E = config.embedding_dim;
    const std::size_t H = config.linguistic_hidden;
    ps.add("linguistic.embedding",
           init.uniform({config.vocab_size, E}, 0.1));
    ps.add("linguistic.lstm.weight", init.glorot(4 * H, E + H));
    Tensor bias({4 * H}, 0.0);
    for (std::size_t k = H; k < 2 * H; ++k) bias[k] = 1.0;
    ps.add("linguistic.lstm.bias", std::move(bias));
    ps.add("linguistic.attention.query", init.glorot(config.attention_dim, H));
    ps.add("linguistic.attention.key", init.glorot(config.attention_dim, H));
    ps.add("linguistic.proj.weight", init.glorot(config.linguistic_vec_dim, H));
    ps.add("linguistic.proj.bias", Tensor({config.linguistic_vec_dim}));
    ps.add("linguistic.head.weight",
           init.glorot(config.num_classes, config.linguistic_vec_dim));
    ps.add("linguistic.head.bias", Tensor({config.num_classes}));
  }

  if (config.modality == Modality::kFusion) {
    const std::size_t Va = config.acoustic_vec_dim;
    const std::size_t Vl = config.linguistic_vec_dim;
    ps.add("fusion.gate_acoustic.weight", init.glorot(Va, Va));
    ps.add("fusion.gate_acoustic.bias", Tensor({Va}));
    ps.add("fusion.gate_linguistic.weight", init.glorot(Vl, Vl));
    ps.add("fusion.gate_linguistic.bias", Tensor({Vl}));
    ps.add("fusion.head.weight", init.glorot(config.num_classes, Va + Vl));
    ps.add("fusion.head.bias", Tensor({config.num_classes}));
  }

  m.bn_stats_ = layers::RunningStats(config.uses_acoustic() ? F : 0);
  m.bind_indices();
  return m;
}

Model model_from_parameters(const ModelConfig& config, ParameterSet params,
                            layers::RunningStats stats) {
  const Model reference = build_model(config);
  if (params.size() != reference.params_.size()) {
    throw std::invalid_argument("parameter count " + std::to_string(params.size()) +
                                " does not match model layout (" +
                                std::to_string(reference.params_.size()) + ")");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& want = reference.params_[i];
    const Parameter& got = params[i];
    if (got.name != want.name || got.value.shape() != want.value.shape()) {
      throw std::invalid_argument("parameter '" + got.name + "' " +
                                  shape_string(got.value.shape()) +
                                  " does not match expected '" + want.name +
                                  "' " + shape_string(want.value.shape()));
    }
    params[i].group = want.group;
  }
  if (stats.mean.size() != reference.bn_stats_.mean.size() ||
      stats.var.size() != reference.bn_stats_.var.size()) {
    throw std::invalid_argument("batch-norm statistics size mismatch");
  }
  Model m;
  m.config_ = config;
  m.params_ = std::move(params);
  m.bn_stats_ = std::move(stats);
  m.bind_indices();
  return m;
}

void Model::bind_indices() {
  const auto at = [this](std::string_view name) -> std::size_t {
    const Parameter* p = params_.find(name);
    if (p == nullptr) {
      throw std::logic_error("missing parameter " + std::string(name));
    }
    return static_cast<std::size_t>(p - &*params_.begin());
  };
  const ModelConfig& c = config_;
  if (c.uses_acoustic()) {
    idx_.frontend = at(c.is_sinc() ? "acoustic.sinc.theta" : "acoustic.conv.weight");
    idx_.bn_gamma = at("acoustic.bn.gamma");
    idx_.bn_beta = at("acoustic.bn.beta");
    if (c.acoustic_variant == AcousticVariant::kSincLstm) {
      idx_.alstm_w = at("acoustic.lstm.weight");
      idx_.alstm_b = at("acoustic.lstm.bias");
    } else {
      idx_.dnn_w = at("acoustic.dnn.weight");
      idx_.dnn_b = at("acoustic.dnn.bias");
    }
    idx_.aproj_w = at("acoustic.proj.weight");
    idx_.aproj_b = at("acoustic.proj.bias");
    idx_.ahead_w = at("acoustic.head.weight");
    idx_.ahead_b = at("acoustic.head.bias");
  }
  if (c.uses_linguistic()) {
    idx_.embedding = at("linguistic.embedding");
    idx_.llstm_w = at("linguistic.lstm.weight");
    idx_.llstm_b = at("linguistic.lstm.bias");
    idx_.attn_q = at("linguistic.attention.query");
    idx_.attn_k = at("linguistic.attention.key");
    idx_.lproj_w = at("linguistic.proj.weight");
    idx_.lproj_b = at("linguistic.proj.bias");
    idx_.lhead_w = at("linguistic.head.weight");
    idx_.lhead_b = at("linguistic.head.bias");
  }
  if (c.modality == Modality::kFusion) {
    idx_.gate_a_w = at("fusion.gate_acoustic.weight");
    idx_.gate_a_b = at("fusion.gate_acoustic.bias");
    idx_.gate_l_w = at("fusion.gate_linguistic.weight");
    idx_.gate_l_b = at("fusion.gate_linguistic.bias");
    idx_.fhead_w = at("fusion.head.weight");
    idx_.fhead_b = at("fusion.head.bias");
  }
}

layers::DenseParams Model::dense_params(std::size_t w, std::size_t b) const {
  return {value(w), value(b)};
}

layers::LstmParams Model::lstm_params(std::size_t w, std::size_t b) const {
  return {value(w), value(b)};
}

FusionParams Model::fusion_params() const {
  if (config_.modality != Modality::kFusion) {
    throw std::logic_error("model has no fusion head");
  }
  return {dense_params(idx_.gate_a_w, idx_.gate_a_b),
          dense_params(idx_.gate_l_w, idx_.gate_l_b),
          dense_params(idx_.fhead_w, idx_.fhead_b)};
}

std::size_t Model::first_layer_parameter_count() const {
  if (!config_.uses_acoustic()) return 0;
  return value(idx_.frontend).size();
}

layers::SincBank Model::sinc_bank() const {
  if (!config_.uses_acoustic() || !config_.is_sinc()) {
    throw std::logic_error("model has no sinc front-end");
  }
  const Tensor& theta = value(idx_.frontend);
  std::vector<dsp::SincFilterParams> filters(theta.dim(0));
  for (std::size_t f = 0; f < filters.size(); ++f) {
    filters[f] = {theta.at(f, 0), theta.at(f, 1), config_.sample_rate,
                  config_.kernel_length};
  }
  return layers::SincBank::with_hamming(
      std::move(filters), {config_.cutoff_f_min, config_.cutoff_band_min});
}

layers::ConvKernelBank Model::frontend_kernels() const {
  if (!config_.uses_acoustic()) {
    throw std::logic_error("model has no acoustic front-end");
  }
  if (config_.is_sinc()) return layers::materialize(sinc_bank());
  return {value(idx_.frontend), true};
}

// ---------------------------------------------------------------------------

double Model::run(const Batch& batch, Mode mode, bool backward,
                  layers::RunningStats& stats,
                  std::vector<Posterior>* posteriors) {
  const ModelConfig& c = config_;
  const std::size_t B = batch.size();
  require(B >= 1, "empty batch");
  const bool acoustic = c.uses_acoustic();
  const bool linguistic = c.uses_linguistic();
  const bool fusion = c.modality == Modality::kFusion;
  const bool lstm_variant = c.acoustic_variant == AcousticVariant::kSincLstm;

  // ---- acoustic branch (batched front-end) --------------------------------
  layers::ConvKernelBank kernels;
  layers::SincBank bank;
  Tensor conv_out, bn_out, act;
  layers::BatchNormCache bn_cache;
  layers::MaxPoolResult pool;
  struct AcousticSample {
    Tensor seq;         // (T2, F)
    Tensor pooled;      // mean over time of seq (dnn) or hidden states (lstm)
    Tensor hidden_pre;  // dnn only
    Tensor hidden;      // input to projection
    layers::LstmSequenceCache lstm;
    Tensor proj_pre;
    Tensor features;
  };
  std::vector<AcousticSample> as(acoustic ? B : 0);

  if (acoustic) {
    require(batch.chunks.rank() == 2 && batch.chunks.dim(0) == B &&
                batch.chunks.dim(1) == c.chunk_samples,
            "acoustic batch must be (batch, " + std::to_string(c.chunk_samples) +
                "), got " + shape_string(batch.chunks.shape()));
    if (c.is_sinc()) {
      bank = sinc_bank();
      kernels = layers::materialize(bank);
    } else {
      kernels = {value(idx_.frontend), true};
    }
    conv_out = layers::conv1d(batch.chunks, kernels, c.stride);
    bn_out = layers::batch_norm(conv_out, value(idx_.bn_gamma).span(),
                                value(idx_.bn_beta).span(), stats, mode,
                                &bn_cache);
    act = layers::leaky_relu(bn_out);
    pool = layers::max_pool_last(act, c.pool_window);

    for (std::size_t b = 0; b < B; ++b) {
      AcousticSample& s = as[b];
      s.seq = time_major(pool.output, b);
      if (lstm_variant) {
        const Tensor hs = layers::lstm_sequence(
            s.seq, lstm_params(idx_.alstm_w, idx_.alstm_b),
            backward ? &s.lstm : nullptr);
        s.hidden = mean_rows(hs);
      } else {
        s.pooled = mean_rows(s.seq);
        s.hidden_pre = layers::dense(s.pooled, dense_params(idx_.dnn_w, idx_.dnn_b));
        s.hidden = layers::leaky_relu(s.hidden_pre);
      }
      s.proj_pre = layers::dense(s.hidden, dense_params(idx_.aproj_w, idx_.aproj_b));
      s.features = layers::leaky_relu(s.proj_pre);
    }
  }

  // ---- linguistic branch ---------------------------------------------------
  struct LinguisticSample {
    layers::LstmSequenceCache lstm;
    layers::AttentionCache attention;
    Tensor pooled;
    Tensor proj_pre;
    Tensor features;
  };
  std::vector<LinguisticSample> ls(linguistic ? B : 0);
  if (linguistic) {
    require(batch.tokens.size() == B, "token batch size mismatch");
    for (std::size_t b = 0; b < B; ++b) {
      const auto& tokens = batch.tokens[b];
      require(!tokens.empty(), "empty token sequence");
      require(tokens.size() <= c.max_seq_len,
              "token sequence longer than max_seq_len");
      LinguisticSample& s = ls[b];
      const Tensor emb = layers::embedding_lookup(value(idx_.embedding), tokens);
      const Tensor hs = layers::lstm_sequence(
          emb, lstm_params(idx_.llstm_w, idx_.llstm_b),
          backward ? &s.lstm : nullptr);
      s.pooled = layers::self_attention(hs, {value(idx_.attn_q), value(idx_.attn_k)},
                                        &s.attention);
      s.proj_pre = layers::dense(s.pooled, dense_params(idx_.lproj_w, idx_.lproj_b));
      s.features = layers::leaky_relu(s.proj_pre);
    }
  }

  // ---- heads and loss -------------------------------------------------------
  struct FusionSample {
    GateResult ga;
    GateResult gl;
    Tensor z;
  };
  std::vector<FusionSample> fs(fusion ? B : 0);
  std::vector<Tensor> dlogits(B);
  double total_loss = 0.0;
  if (posteriors != nullptr) posteriors->assign(B, Posterior{});

  for (std::size_t b = 0; b < B; ++b) {
    Tensor logits;
    if (fusion) {
      FusionSample& s = fs[b];
      s.ga = apply_gate(as[b].features, dense_params(idx_.gate_a_w, idx_.gate_a_b));
      s.gl = apply_gate(ls[b].features, dense_params(idx_.gate_l_w, idx_.gate_l_b));
      s.z = Tensor({s.ga.gated.size() + s.gl.gated.size()});
      std::copy(s.ga.gated.values().begin(), s.ga.gated.values().end(),
                s.z.values().begin());
      std::copy(s.gl.gated.values().begin(), s.gl.gated.values().end(),
                s.z.values().begin() +
                    static_cast<std::ptrdiff_t>(s.ga.gated.size()));
      logits = layers::dense(s.z, dense_params(idx_.fhead_w, idx_.fhead_b));
    } else if (acoustic) {
      logits = layers::dense(as[b].features, dense_params(idx_.ahead_w, idx_.ahead_b));
    } else {
      logits = layers::dense(ls[b].features, dense_params(idx_.lhead_w, idx_.lhead_b));
    }
    if (posteriors != nullptr) (*posteriors)[b] = to_posterior(logits);
    if (!batch.labels.empty()) {
      layers::CrossEntropy ce = layers::softmax_cross_entropy(logits, batch.labels[b]);
      total_loss += ce.loss;
      dlogits[b] = std::move(ce.grad);
    }
  }
  const double mean_loss = total_loss / static_cast<double>(B);
  if (!backward) return mean_loss;

  // ---- backward -------------------------------------------------------------
  const double inv_b = 1.0 / static_cast<double>(B);
  const auto accumulate_dense = [this](std::size_t w, std::size_t bias,
                                       const layers::DenseGradients& g) {
    add_into(params_[w].grad, g.weights);
    add_into(params_[bias].grad, g.bias);
  };
  const auto gate_backward = [&](const GateResult& gate, const Tensor& v,
                                 std::span<const double> dgated, std::size_t w,
                                 std::size_t bias) {
    Tensor dv(v.shape());
    Tensor dpre(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) {
      dv[i] = dgated[i] * gate.gate[i];
      dpre[i] = dgated[i] * v[i] * gate.gate[i] * (1.0 - gate.gate[i]);
    }
    const layers::DenseGradients g = layers::dense_backward(v, dense_params(w, bias), dpre);
    accumulate_dense(w, bias, g);
    add_into(dv, g.input);
    return dv;
  };

  std::vector<Tensor> dafeat(acoustic ? B : 0);
  std::vector<Tensor> dlfeat(linguistic ? B : 0);
  for (std::size_t b = 0; b < B; ++b) {
    Tensor dl = dlogits[b];
    for (double& v : dl.values()) v *= inv_b;
    if (fusion) {
      const FusionSample& s = fs[b];
      const layers::DenseGradients g =
          layers::dense_backward(s.z, dense_params(idx_.fhead_w, idx_.fhead_b), dl);
      accumulate_dense(idx_.fhead_w, idx_.fhead_b, g);
      const std::size_t va = s.ga.gated.size();
      dafeat[b] = gate_backward(s.ga, as[b].features, g.input.span().subspan(0, va),
                                idx_.gate_a_w, idx_.gate_a_b);
      dlfeat[b] = gate_backward(s.gl, ls[b].features, g.input.span().subspan(va),
                                idx_.gate_l_w, idx_.gate_l_b);
    } else if (acoustic) {
      const layers::DenseGradients g = layers::dense_backward(
          as[b].features, dense_params(idx_.ahead_w, idx_.ahead_b), dl);
      accumulate_dense(idx_.ahead_w, idx_.ahead_b, g);
      dafeat[b] = g.input;
    } else {
      const layers::DenseGradients g = layers::dense_backward(
          ls[b].features, dense_params(idx_.lhead_w, idx_.lhead_b), dl);
      accumulate_dense(idx_.lhead_w, idx_.lhead_b, g);
      dlfeat[b] = g.input;
    }
  }

  if (linguistic) {
    for (std::size_t b = 0; b < B; ++b) {
      const LinguisticSample& s = ls[b];
      const Tensor dproj = layers::leaky_relu_backward(s.proj_pre, dlfeat[b]);
      const layers::DenseGradients gp = layers::dense_backward(
          s.pooled, dense_params(idx_.lproj_w, idx_.lproj_b), dproj);
      accumulate_dense(idx_.lproj_w, idx_.lproj_b, gp);
      const layers::AttentionGradients ga = layers::self_attention_backward(
          s.attention, {value(idx_.attn_q), value(idx_.attn_k)}, gp.input);
      add_into(params_[idx_.attn_q].grad, ga.query);
      add_into(params_[idx_.attn_k].grad, ga.key);
      const layers::LstmSequenceGradients gl = layers::lstm_sequence_backward(
          s.lstm, lstm_params(idx_.llstm_w, idx_.llstm_b), ga.input);
      add_into(params_[idx_.llstm_w].grad, gl.weights);
      add_into(params_[idx_.llstm_b].grad, gl.bias);
      layers::embedding_accumulate_grad(batch.tokens[b], gl.input,
                                        params_[idx_.embedding].grad);
    }
  }

  if (acoustic) {
    const std::size_t F = c.num_filters;
    Tensor dpool(pool.output.shape());
    for (std::size_t b = 0; b < B; ++b) {
      const AcousticSample& s = as[b];
      const Tensor dproj = layers::leaky_relu_backward(s.proj_pre, dafeat[b]);
      const layers::DenseGradients gp = layers::dense_backward(
          s.hidden, dense_params(idx_.aproj_w, idx_.aproj_b), dproj);
      accumulate_dense(idx_.aproj_w, idx_.aproj_b, gp);
      const std::size_t steps = s.seq.dim(0);
      const double inv_t = 1.0 / static_cast<double>(steps);
      Tensor dseq;
      if (lstm_variant) {
        Tensor dhs({steps, c.acoustic_hidden});
        for (std::size_t t = 0; t < steps; ++t) {
          auto r = dhs.row(t);
          for (std::size_t k = 0; k < r.size(); ++k) r[k] = gp.input[k] * inv_t;
        }
        layers::LstmSequenceGradients gl = layers::lstm_sequence_backward(
            s.lstm, lstm_params(idx_.alstm_w, idx_.alstm_b), dhs);
        add_into(params_[idx_.alstm_w].grad, gl.weights);
        add_into(params_[idx_.alstm_b].grad, gl.bias);
        dseq = std::move(gl.input);
      } else {
        const Tensor dh = layers::leaky_relu_backward(s.hidden_pre, gp.input);
        const layers::DenseGradients gd = layers::dense_backward(
            s.pooled, dense_params(idx_.dnn_w, idx_.dnn_b), dh);
        accumulate_dense(idx_.dnn_w, idx_.dnn_b, gd);
        dseq = Tensor({steps, F});
        for (std::size_t t = 0; t < steps; ++t) {
          auto r = dseq.row(t);
          for (std::size_t f = 0; f < F; ++f) r[f] = gd.input[f] * inv_t;
        }
      }
      for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t t = 0; t < steps; ++t) dpool.at(b, f, t) = dseq.at(t, f);
      }
    }
    const Tensor dact = layers::max_pool_last_backward(act.shape(), pool, dpool);
    const Tensor dbn = layers::leaky_relu_backward(bn_out, dact);
    const layers::BatchNormGradients gbn =
        layers::batch_norm_backward(dbn, value(idx_.bn_gamma).span(), bn_cache);
    add_into(params_[idx_.bn_gamma].grad, gbn.gamma);
    add_into(params_[idx_.bn_beta].grad, gbn.beta);
    const layers::Conv1dGradients gc =
        layers::conv1d_backward(batch.chunks, kernels, c.stride, gbn.input, false);
    if (c.is_sinc()) {
      std::vector<double> d1, d2;
      layers::sinc_kernel_chain_rule(bank, gc.weights, d1, d2);
      Tensor& g = params_[idx_.frontend].grad;
      for (std::size_t f = 0; f < F; ++f) {
        g.at(f, 0) += d1[f];
        g.at(f, 1) += d2[f];
      }
    } else {
      add_into(params_[idx_.frontend].grad, gc.weights);
    }
  }
  return mean_loss;
}

double Model::accumulate_gradients(const Batch& batch,
                                   std::vector<Posterior>* posteriors) {
  return run(batch, Mode::kTrain, true, bn_stats_, posteriors);
}

double Model::loss(const Batch& batch, Mode mode) const {
  layers::RunningStats scratch = bn_stats_;
  return const_cast<Model*>(this)->run(batch, mode, false, scratch, nullptr);
}

std::vector<Posterior> Model::predict_batch(const Batch& batch) const {
  layers::RunningStats scratch = bn_stats_;
  std::vector<Posterior> out;
  const_cast<Model*>(this)->run(batch, Mode::kEval, false, scratch, &out);
  return out;
}

// ---------------------------------------------------------------------------

AcousticOutput acoustic_forward(const Model& model, const Tensor& chunk) {
  const ModelConfig& c = model.config();
  if (!c.uses_acoustic()) throw std::logic_error("model has no acoustic branch");
  if (chunk.size() != c.chunk_samples) {
    throw std::invalid_argument("chunk has " + std::to_string(chunk.size()) +
                                " samples, expected " +
                                std::to_string(c.chunk_samples));
  }
  const Tensor x = chunk.reshaped({1, c.chunk_samples});
  layers::RunningStats stats = model.bn_stats();
  const Tensor conv = layers::conv1d(x, model.frontend_kernels(), c.stride);
  const Tensor bn = layers::batch_norm(conv, model.value(model.idx_.bn_gamma).span(),
                                       model.value(model.idx_.bn_beta).span(), stats,
                                       Mode::kEval);
  const layers::MaxPoolResult pool =
      layers::max_pool_last(layers::leaky_relu(bn), c.pool_window);
  const Tensor seq = time_major(pool.output, 0);
  Tensor hidden;
  if (c.acoustic_variant == AcousticVariant::kSincLstm) {
    hidden = mean_rows(layers::lstm_sequence(
        seq, model.lstm_params(model.idx_.alstm_w, model.idx_.alstm_b)));
  } else {
    hidden = layers::leaky_relu(layers::dense(
        mean_rows(seq), model.dense_params(model.idx_.dnn_w, model.idx_.dnn_b)));
  }
  AcousticOutput out;
  out.features = layers::leaky_relu(layers::dense(
      hidden, model.dense_params(model.idx_.aproj_w, model.idx_.aproj_b)));
  out.posterior = to_posterior(layers::dense(
      out.features, model.dense_params(model.idx_.ahead_w, model.idx_.ahead_b)));
  return out;
}

LinguisticOutput linguistic_forward(const Model& model,
                                    std::span<const int> tokens) {
  const ModelConfig& c = model.config();
  if (!c.uses_linguistic()) {
    throw std::logic_error("model has no linguistic branch");
  }
  if (tokens.empty()) throw std::invalid_argument("empty token sequence");
  if (tokens.size() > c.max_seq_len) {
    throw std::invalid_argument("token sequence of " + std::to_string(tokens.size()) +
                                " exceeds max_seq_len " +
                                std::to_string(c.max_seq_len));
  }
  const Tensor emb = layers::embedding_lookup(model.value(model.idx_.embedding), tokens);
  const Tensor hs = layers::lstm_sequence(
      emb, model.lstm_params(model.idx_.llstm_w, model.idx_.llstm_b));
  const Tensor pooled = layers::self_attention(
      hs, {model.value(model.idx_.attn_q), model.value(model.idx_.attn_k)});
  LinguisticOutput out;
  out.features = layers::leaky_relu(layers::dense(
      pooled, model.dense_params(model.idx_.lproj_w, model.idx_.lproj_b)));
  out.posterior = to_posterior(layers::dense(
      out.features, model.dense_params(model.idx_.lhead_w, model.idx_.lhead_b)));
  return out;
}

Posterior fuse(const Tensor& acoustic_features,
               const Tensor& linguistic_features, const FusionParams& params) {
  if (params.acoustic_gate.weights.dim(1) != acoustic_features.size() ||
      params.linguistic_gate.weights.dim(1) != linguistic_features.size() ||
      params.head.weights.dim(1) !=
          acoustic_features.size() + linguistic_features.size()) {
    throw std::invalid_argument("fusion input dimensions do not match fusion parameters");
  }
  const GateResult ga = apply_gate(acoustic_features, params.acoustic_gate);
  const GateResult gl = apply_gate(linguistic_features, params.linguistic_gate);
  Tensor z({ga.gated.size() + gl.gated.size()});
  std::copy(ga.gated.values().begin(), ga.gated.values().end(), z.values().begin());
  std::copy(gl.gated.values().begin(), gl.gated.values().end(),
            z.values().begin() + static_cast<std::ptrdiff_t>(ga.gated.size()));
  return to_posterior(layers::dense(z, params.head));
}

}  // namespace sincser::models
