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

#include "sincser/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace sincser::training {
namespace {

std::vector<double> prefix_energy(std::span<const double> signal) {
  std::vector<double> prefix(signal.size() + 1, 0.0);
  for (std::size_t i = 0; i < signal.size(); ++i) {
    prefix[i + 1] = prefix[i] + signal[i] * signal[i];
  }
  return prefix;
}

double window_rms(const std::vector<double>& prefix, std::size_t start,
                  std::size_t length) {
  const double e = prefix[start + length] - prefix[start];
  return std::sqrt(std::max(0.0, e) / static_cast<double>(length));
}

// Linear-interpolated quantile of unsorted values.
double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::size_t subwindow_samples(const ChunkPolicy& policy, double sample_rate) {
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(policy.subwindow_ms * sample_rate / 1000.0)));
}

void check_signal(std::span<const double> signal, std::size_t chunk) {
  if (signal.size() < chunk) {
    throw std::invalid_argument("signal has " + std::to_string(signal.size()) +
                                " samples; chunk needs at least " +
                                std::to_string(chunk));
  }
}

int argmax_label(const models::Posterior& p) { return models::predict(p); }

EpochRecord make_record(int epoch, std::string split, double loss,
                        const ConfusionMatrix& cm) {
  EpochRecord r;
  r.epoch = epoch;
  r.split = std::move(split);
  r.loss = loss;
  r.wa = weighted_accuracy(cm);
  r.ua = unweighted_accuracy(cm).value;
  r.ser = sentence_error_rate(cm);
  return r;
}

}  // namespace

void ChunkPolicy::validate() const {
  if (!(chunk_ms > 0.0)) throw std::invalid_argument("chunk_ms must be positive");
  if (!(energy_quantile >= 0.0 && energy_quantile <= 1.0)) {
    throw std::invalid_argument("energy_quantile must be in [0, 1]");
  }
  if (!(subwindow_ms > 0.0)) throw std::invalid_argument("subwindow_ms must be positive");
  if (max_draws < 1) throw std::invalid_argument("max_draws must be >= 1");
}

std::size_t ChunkPolicy::chunk_samples(double sample_rate) const {
  return static_cast<std::size_t>(std::lround(chunk_ms * sample_rate / 1000.0));
}

std::vector<double> sample_chunk(std::span<const double> signal,
                                 const ChunkPolicy& policy, double sample_rate,
                                 std::mt19937_64& rng) {
  policy.validate();
  const std::size_t chunk = policy.chunk_samples(sample_rate);
  check_signal(signal, chunk);
  const std::size_t last_offset = signal.size() - chunk;
  std::uniform_int_distribution<std::size_t> offset_dist(0, last_offset);

  std::size_t offset = 0;
  if (!policy.energy_filter) {
    offset = offset_dist(rng);
  } else {
    const auto prefix = prefix_energy(signal);
    const std::size_t sub = std::min(subwindow_samples(policy, sample_rate), signal.size());
    std::vector<double> sub_rms;
    for (std::size_t s = 0; s + sub <= signal.size(); s += sub) {
      sub_rms.push_back(window_rms(prefix, s, sub));
    }
    const double threshold = quantile(std::move(sub_rms), policy.energy_quantile);
    double best_rms = -1.0;
    bool accepted = false;
    for (int draw = 0; draw < policy.max_draws && !accepted; ++draw) {
      const std::size_t candidate = offset_dist(rng);
      const double rms = window_rms(prefix, candidate, chunk);
      if (rms > best_rms) {
        best_rms = rms;
        offset = candidate;
      }
      if (rms >= threshold) {
        offset = candidate;
        accepted = true;
      }
    }
  }
  return {signal.begin() + static_cast<std::ptrdiff_t>(offset),
          signal.begin() + static_cast<std::ptrdiff_t>(offset + chunk)};
}

Tensor sample_chunk(std::span<const double> signal, const ChunkPolicy& policy,
                    double sample_rate) {
  std::mt19937_64 rng(policy.seed);
  return Tensor::vector(sample_chunk(signal, policy, sample_rate, rng));
}

std::vector<std::size_t> top_energy_offsets(std::span<const double> signal,
                                            const ChunkPolicy& policy,
                                            double sample_rate, std::size_t count) {
  policy.validate();
  const std::size_t chunk = policy.chunk_samples(sample_rate);
  check_signal(signal, chunk);
  const auto prefix = prefix_energy(signal);
  const std::size_t hop = subwindow_samples(policy, sample_rate);
  std::vector<std::pair<double, std::size_t>> candidates;
  for (std::size_t off = 0; off + chunk <= signal.size(); off += hop) {
    candidates.push_back({window_rms(prefix, off, chunk), off});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(count, candidates.size()); ++i) {
    out.push_back(candidates[i].second);
  }
  return out;
}

// ---------------------------------------------------------------------------

void ConfusionMatrix::add(int gold, int predicted) {
  if (gold < 0 || gold > 3 || predicted < 0 || predicted > 3) {
    throw std::out_of_range("confusion matrix labels must be in 0..3");
  }
  ++counts[static_cast<std::size_t>(gold)][static_cast<std::size_t>(predicted)];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (const auto& row : counts) n += std::accumulate(row.begin(), row.end(), std::int64_t{0});
  return n;
}

std::int64_t ConfusionMatrix::correct() const {
  std::int64_t n = 0;
  for (std::size_t k = 0; k < 4; ++k) n += counts[k][k];
  return n;
}

double weighted_accuracy(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total <= 0) throw std::invalid_argument("confusion matrix is empty");
  return static_cast<double>(cm.correct()) / static_cast<double>(total);
}

UnweightedAccuracy unweighted_accuracy(const ConfusionMatrix& cm) {
  if (cm.total() <= 0) throw std::invalid_argument("confusion matrix is empty");
  UnweightedAccuracy ua;
  double sum = 0.0;
  int classes = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto gold = std::accumulate(cm.counts[k].begin(), cm.counts[k].end(),
                                      std::int64_t{0});
    if (gold == 0) {
      ua.warnings.push_back("class " + std::string(data::label_name(static_cast<int>(k))) +
                            " has no gold instances; excluded from UA");
      continue;
    }
    sum += static_cast<double>(cm.counts[k][k]) / static_cast<double>(gold);
    ++classes;
  }
  ua.value = sum / static_cast<double>(classes);
  return ua;
}

double sentence_error_rate(const ConfusionMatrix& cm) {
  return 1.0 - weighted_accuracy(cm);
}

// ---------------------------------------------------------------------------

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(cutoff_lr_scale >= 0.0)) throw std::invalid_argument("cutoff_lr_scale must be >= 0");
}

Adam::Adam(OptimizerConfig config, const models::ParameterSet& params)
    : config_(config) {
  config_.validate();
  for (const auto& p : params) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step(models::ParameterSet& params) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const double lr = config_.lr *
        (p.group == models::ParamGroup::kCutoff ? config_.cutoff_lr_scale : 1.0);
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p.value[k] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------

std::string TrainingLog::to_jsonl(const std::string& config_hash) const {
  std::ostringstream out;
  for (const auto& r : records) {
    nlohmann::ordered_json j{{"epoch", r.epoch}, {"split", r.split},
                             {"loss", r.loss},   {"wa", r.wa},
                             {"ua", r.ua},       {"ser", r.ser}};
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::optional<int> TrainingLog::first_epoch_reaching(const std::string& split,
                                                     double threshold) const {
  for (const auto& r : records) {
    if (r.split == split && r.wa >= threshold) return r.epoch;
  }
  return std::nullopt;
}

Split stratified_split(const data::Dataset& dataset, double val_fraction,
                       std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("val_fraction must be in [0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::array<std::vector<std::size_t>, 4> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset[i].label)].push_back(i);
  }
  std::vector<bool> is_val(dataset.size(), false);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = static_cast<std::size_t>(
        std::lround(val_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < take; ++k) is_val[members[k]] = true;
  }
  Split split;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (is_val[i] ? split.val : split.train).push_back(dataset[i]);
  }
  return split;
}

models::Batch make_batch(const models::Model& model, const data::Dataset& dataset,
                         std::span<const std::size_t> indices,
                         const ChunkPolicy& policy, std::mt19937_64& rng) {
  const auto& cfg = model.config();
  models::Batch batch;
  batch.labels.reserve(indices.size());
  if (cfg.uses_acoustic()) {
    batch.chunks = Tensor({indices.size(), cfg.chunk_samples});
  }
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const data::Utterance& u = dataset[indices[b]];
    batch.labels.push_back(u.label);
    if (cfg.uses_acoustic()) {
      const auto chunk = sample_chunk(u.samples, policy, u.sample_rate, rng);
      if (chunk.size() != cfg.chunk_samples) {
        throw std::invalid_argument("chunk policy yields " + std::to_string(chunk.size()) +
                                    " samples but model expects " +
                                    std::to_string(cfg.chunk_samples));
      }
      std::copy(chunk.begin(), chunk.end(), batch.chunks.row(b).begin());
    }
    if (cfg.uses_linguistic()) {
      auto tokens = u.tokens;
      if (tokens.size() > cfg.max_seq_len) tokens.resize(cfg.max_seq_len);
      batch.tokens.push_back(std::move(tokens));
    }
  }
  return batch;
}

Evaluation evaluate(const models::Model& model, const data::Dataset& dataset,
                    const TrainConfig& config) {
  const auto& cfg = model.config();
  const std::size_t per_utt = std::max<std::size_t>(1, config.eval_chunks);
  const std::size_t batch_size = std::max<std::size_t>(1, config.optimizer.batch_size);
  Evaluation ev;
  ev.posteriors.resize(dataset.size());
  double loss_sum = 0.0;

  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const std::size_t end = std::min(dataset.size(), start + batch_size);
    const std::size_t n = end - start;
    // Each utterance contributes per_utt rows; row r belongs to start + r / per_utt.
    models::Batch batch;
    if (cfg.uses_acoustic()) batch.chunks = Tensor({n * per_utt, cfg.chunk_samples});
    for (std::size_t i = 0; i < n; ++i) {
      const data::Utterance& u = dataset[start + i];
      std::vector<std::size_t> offsets;
      if (cfg.uses_acoustic()) {
        offsets = top_energy_offsets(u.samples, config.chunk, u.sample_rate, per_utt);
        // Short signals may have fewer positions than requested; repeat the best.
        while (offsets.size() < per_utt) offsets.push_back(offsets.front());
      }
      for (std::size_t r = 0; r < per_utt; ++r) {
        batch.labels.push_back(u.label);
        if (cfg.uses_acoustic()) {
          const auto src = std::span<const double>(u.samples).subspan(offsets[r], cfg.chunk_samples);
          std::copy(src.begin(), src.end(), batch.chunks.row(i * per_utt + r).begin());
        }
        if (cfg.uses_linguistic()) {
          auto tokens = u.tokens;
          if (tokens.size() > cfg.max_seq_len) tokens.resize(cfg.max_seq_len);
          batch.tokens.push_back(std::move(tokens));
        }
      }
    }
    const auto posteriors = model.predict_batch(batch);
    for (std::size_t i = 0; i < n; ++i) {
      models::Posterior mean;
      for (std::size_t r = 0; r < per_utt; ++r) {
        for (std::size_t k = 0; k < 4; ++k) {
          mean.probs[k] += posteriors[i * per_utt + r].probs[k];
        }
      }
      for (double& p : mean.probs) p /= static_cast<double>(per_utt);
      const int gold = dataset[start + i].label;
      ev.posteriors[start + i] = mean;
      ev.confusion.add(gold, argmax_label(mean));
      loss_sum -= std::log(std::max(mean.probs[static_cast<std::size_t>(gold)],
                                    std::numeric_limits<double>::min()));
    }
  }
  ev.loss = dataset.empty() ? 0.0 : loss_sum / static_cast<double>(dataset.size());
  return ev;
}

TrainingLog train(models::Model& model, const data::Dataset& train_set,
                  const data::Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  config.chunk.validate();
  Adam adam(config.optimizer, model.parameters());
  std::mt19937_64 rng(config.seed);
  const std::size_t batch_size = config.optimizer.batch_size;
  const bool needs_pairs = model.config().uses_acoustic();

  TrainingLog log;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t s = 0; s < order.size(); s += batch_size) {
      batches.push_back({s, std::min(order.size(), s + batch_size)});
    }
    // Batch norm needs two examples; fold a trailing singleton into its neighbour.
    if (needs_pairs && batches.size() > 1 &&
        batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }

    ConfusionMatrix cm;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto [s, e] = batches[bi];
      const std::span<const std::size_t> idx(order.data() + s, e - s);
      const models::Batch batch = make_batch(model, train_set, idx, config.chunk, rng);
      model.parameters().zero_grad();
      std::vector<models::Posterior> posteriors;
      const double loss = model.accumulate_gradients(batch, &posteriors);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("non-finite training loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(bi));
      }
      adam.step(model.parameters());
      loss_sum += loss * static_cast<double>(idx.size());
      seen += idx.size();
      for (std::size_t b = 0; b < idx.size(); ++b) {
        cm.add(batch.labels[b], argmax_label(posteriors[b]));
      }
    }
    const EpochRecord train_rec = make_record(static_cast<int>(epoch), "train",
                                              loss_sum / static_cast<double>(seen), cm);
    log.records.push_back(train_rec);

    EpochRecord val_rec;
    if (!val_set.empty()) {
      const Evaluation ev = evaluate(model, val_set, config);
      val_rec = make_record(static_cast<int>(epoch), "val", ev.loss, ev.confusion);
      log.records.push_back(val_rec);
    }
    if (on_epoch && !on_epoch(train_rec, val_rec)) break;
  }
  return log;
}

}  // namespace sincser::training
