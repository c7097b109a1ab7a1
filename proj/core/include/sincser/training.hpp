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

#ifndef SINCSER_TRAINING_HPP_
#define SINCSER_TRAINING_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sincser/data_io.hpp"
#include "sincser/models.hpp"

namespace sincser::training {

// ---------------------------------------------------------------------------
// Chunk selection
// ---------------------------------------------------------------------------

struct ChunkPolicy {
  double chunk_ms = 250.0;
  bool energy_filter = true;
  double energy_quantile = 0.5;
  double subwindow_ms = 25.0;  // RMS resolution of the energy threshold
  int max_draws = 32;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t chunk_samples(double sample_rate) const;
};

// Draws one chunk. Without the energy filter the start offset is uniform.
// With it, offsets are drawn until the chunk RMS reaches the energy_quantile
// of the signal's sub-window RMS values; after max_draws the highest-RMS
// candidate seen is used. Throws std::invalid_argument when the signal is
// shorter than one chunk.
std::vector<double> sample_chunk(std::span<const double> signal,
                                 const ChunkPolicy& policy, double sample_rate,
                                 std::mt19937_64& rng);

// Convenience overload seeded from policy.seed.
Tensor sample_chunk(std::span<const double> signal, const ChunkPolicy& policy,
                    double sample_rate);

// Start offsets of the `count` highest-RMS chunk positions on a sub-window
// hop grid, strongest first (ties to the earlier offset).
std::vector<std::size_t> top_energy_offsets(std::span<const double> signal,
                                            const ChunkPolicy& policy,
                                            double sample_rate, std::size_t count);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Rows are gold labels, columns predictions.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, 4>, 4> counts{};

  void add(int gold, int predicted);
  std::int64_t total() const;
  std::int64_t correct() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

// trace / total. Throws std::invalid_argument for an all-zero matrix.
double weighted_accuracy(const ConfusionMatrix& cm);

struct UnweightedAccuracy {
  double value = 0.0;
  std::vector<std::string> warnings;  // one per class excluded for lack of gold
};

// Mean per-class recall over classes with at least one gold instance.
UnweightedAccuracy unweighted_accuracy(const ConfusionMatrix& cm);

// Fraction of misclassified sentences, 1 - WA.
double sentence_error_rate(const ConfusionMatrix& cm);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

struct OptimizerConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  // Step multiplier for sinc cutoff parameters, which live in Hz. Equal to
  // the sample rate, it matches Adam on normalized cutoffs.
  double cutoff_lr_scale = 16000.0;

  void validate() const;
};

class Adam {
 public:
  Adam(OptimizerConfig config, const models::ParameterSet& params);
  void step(models::ParameterSet& params);
  std::size_t steps() const { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

struct TrainConfig {
  OptimizerConfig optimizer;
  ChunkPolicy chunk;
  std::size_t epochs = 20;
  std::size_t eval_chunks = 1;  // >1 averages posteriors over top-energy chunks
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double wa = 0.0;
  double ua = 0.0;
  double ser = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingLog {
  std::vector<EpochRecord> records;

  // One JSON object per line with epoch, split, loss, wa, ua, ser and, when
  // non-empty, config_hash.
  std::string to_jsonl(const std::string& config_hash = "") const;
  // First epoch whose record for `split` has wa >= threshold.
  std::optional<int> first_epoch_reaching(const std::string& split,
                                          double threshold) const;

  friend bool operator==(const TrainingLog&, const TrainingLog&) = default;
};

// Return false to stop after the current epoch.
using EpochCallback = std::function<bool(const EpochRecord& train,
                                         const EpochRecord& val)>;

struct Split {
  data::Dataset train;
  data::Dataset val;
};

// Per-class seeded split; val takes round(val_fraction * n_class) of each class.
Split stratified_split(const data::Dataset& dataset, double val_fraction,
                       std::uint64_t seed);

// Builds a batch for the given utterance indices using the model's modalities.
// Chunks come from sample_chunk with the supplied rng.
models::Batch make_batch(const models::Model& model, const data::Dataset& dataset,
                         std::span<const std::size_t> indices,
                         const ChunkPolicy& policy, std::mt19937_64& rng);

struct Evaluation {
  ConfusionMatrix confusion;
  double loss = 0.0;
  std::vector<models::Posterior> posteriors;  // dataset order
};

// Eval-mode pass; acoustic input is the top-energy chunk (or the mean
// posterior over eval_chunks of them).
Evaluation evaluate(const models::Model& model, const data::Dataset& dataset,
                    const TrainConfig& config);

// Minibatch Adam on softmax cross-entropy. Train records use the train-mode
// predictions made while fitting each epoch; val records use evaluate().
// Throws std::invalid_argument for an empty training set and
// std::runtime_error when the loss becomes non-finite.
TrainingLog train(models::Model& model, const data::Dataset& train_set,
                  const data::Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace sincser::training

#endif  // SINCSER_TRAINING_HPP_
