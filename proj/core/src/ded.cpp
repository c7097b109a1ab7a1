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

#include "sincser/ded.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "sincser/data_io.hpp"

namespace sincser::ded {
namespace {

constexpr int kClasses = static_cast<int>(models::kNumClasses);

using Counts = std::array<int, models::kNumClasses>;

// Score contribution of choosing `label` at step t given the history counts
// and the previous label (-1 at t = 0). Shared by every scorer so that beam,
// brute-force and direct scoring sum identical terms in identical order.
double step_term(const models::Posterior& row, int label, const Counts& counts,
                 int t, int previous, const DedConfig& cfg) {
  const double p = std::max(row.probs[static_cast<std::size_t>(label)], DBL_EPSILON);
  double term = std::log(p);
  if (cfg.lambda_history != 0.0) {
    const double k = cfg.history_smoothing;
    term += cfg.lambda_history *
            std::log((counts[static_cast<std::size_t>(label)] + k) / (t + kClasses * k));
  }
  if (t > 0 && label != previous) term -= cfg.shift_penalty;
  return term;
}

void check_label(int label) {
  if (label < 0 || label >= kClasses) {
    throw std::invalid_argument("label " + std::to_string(label) +
                                " outside [0, 3]");
  }
}

struct Hypothesis {
  std::vector<int> labels;
  Counts counts{};
  double score = 0.0;
  std::vector<double> steps;
};

// Higher score first; equal scores go to the lexicographically smaller labels.
bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.labels < b.labels;
}

DecodedDialog to_decoded(Hypothesis h) {
  return {std::move(h.labels), h.score, std::move(h.steps)};
}

}  // namespace

void DialogPosteriors::validate() const {
  if (rows.empty()) {
    throw std::invalid_argument("dialog '" + dialog_id + "' has no rows");
  }
  if (!utterance_ids.empty() && utterance_ids.size() != rows.size()) {
    throw std::invalid_argument("dialog '" + dialog_id +
                                "': utterance_ids and rows differ in length");
  }
  if (!gold.empty() && gold.size() != rows.size()) {
    throw std::invalid_argument("dialog '" + dialog_id +
                                "': gold and rows differ in length");
  }
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (!rows[t].is_valid(1e-6)) {
      throw std::invalid_argument("dialog '" + dialog_id + "': row " +
                                  std::to_string(t) + " is not a distribution");
    }
  }
  for (int g : gold) check_label(g);
}

void DedConfig::validate() const {
  if (!(lambda_history >= 0.0) || !std::isfinite(lambda_history)) {
    throw std::invalid_argument("lambda_history must be a finite value >= 0");
  }
  if (!(shift_penalty >= 0.0) || !std::isfinite(shift_penalty)) {
    throw std::invalid_argument("shift_penalty must be a finite value >= 0");
  }
  if (!(history_smoothing > 0.0) || !std::isfinite(history_smoothing)) {
    throw std::invalid_argument("history_smoothing must be > 0");
  }
  if (beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
}

double score_assignment(const DialogPosteriors& dp, std::span<const int> labels,
                        const DedConfig& cfg) {
  if (labels.size() != dp.rows.size()) {
    throw std::invalid_argument("labels length " + std::to_string(labels.size()) +
                                " != rows length " + std::to_string(dp.rows.size()));
  }
  Counts counts{};
  double score = 0.0;
  int previous = -1;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    check_label(labels[t]);
    score += step_term(dp.rows[t], labels[t], counts, static_cast<int>(t), previous, cfg);
    ++counts[static_cast<std::size_t>(labels[t])];
    previous = labels[t];
  }
  return score;
}

DecodedDialog decode(const DialogPosteriors& dp, const DedConfig& cfg) {
  dp.validate();
  cfg.validate();

  std::vector<Hypothesis> beam(1);
  for (std::size_t t = 0; t < dp.rows.size(); ++t) {
    // Future terms depend only on (counts, last label), so hypotheses sharing
    // that state are recombined, keeping the better one.
    std::map<std::pair<Counts, int>, Hypothesis> merged;
    for (const Hypothesis& h : beam) {
      const int previous = h.labels.empty() ? -1 : h.labels.back();
      for (int c = 0; c < kClasses; ++c) {
        Hypothesis next = h;
        const double term =
            step_term(dp.rows[t], c, h.counts, static_cast<int>(t), previous, cfg);
        next.score += term;
        next.steps.push_back(term);
        next.labels.push_back(c);
        ++next.counts[static_cast<std::size_t>(c)];
        auto key = std::make_pair(next.counts, c);
        auto it = merged.find(key);
        if (it == merged.end()) {
          merged.emplace(std::move(key), std::move(next));
        } else if (better(next, it->second)) {
          it->second = std::move(next);
        }
      }
    }
    beam.clear();
    beam.reserve(merged.size());
    for (auto& [key, h] : merged) beam.push_back(std::move(h));
    std::sort(beam.begin(), beam.end(), better);
    if (beam.size() > cfg.beam_width) beam.resize(cfg.beam_width);
  }
  return to_decoded(std::move(beam.front()));
}

DecodedDialog brute_force_decode(const DialogPosteriors& dp, const DedConfig& cfg) {
  dp.validate();
  cfg.validate();
  const std::size_t steps = dp.rows.size();
  if (steps > kMaxBruteForceLength) {
    throw std::invalid_argument("dialog too long for brute force: " +
                                std::to_string(steps) + " > " +
                                std::to_string(kMaxBruteForceLength));
  }

  std::size_t total = 1;
  for (std::size_t t = 0; t < steps; ++t) total *= kClasses;

  // Enumerate in lexicographic order; only a strictly better score replaces
  // the incumbent, which yields the lexicographically smallest argmax.
  Hypothesis best;
  bool have_best = false;
  Hypothesis cur;
  cur.labels.resize(steps);
  cur.steps.resize(steps);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rem = code;
    for (std::size_t t = steps; t-- > 0;) {
      cur.labels[t] = static_cast<int>(rem % kClasses);
      rem /= kClasses;
    }
    Counts counts{};
    double score = 0.0;
    int previous = -1;
    for (std::size_t t = 0; t < steps; ++t) {
      const double term = step_term(dp.rows[t], cur.labels[t], counts,
                                    static_cast<int>(t), previous, cfg);
      cur.steps[t] = term;
      score += term;
      ++counts[static_cast<std::size_t>(cur.labels[t])];
      previous = cur.labels[t];
    }
    cur.score = score;
    if (!have_best || score > best.score) {
      best = cur;
      have_best = true;
    }
  }
  return to_decoded(std::move(best));
}

std::vector<GainPoint> ded_gain_study(std::span<const double> accuracy_grid,
                                      std::size_t num_dialogs, std::uint64_t seed,
                                      const GainStudyOptions& options) {
  if (accuracy_grid.empty()) throw std::invalid_argument("empty accuracy grid");
  if (num_dialogs == 0) throw std::invalid_argument("num_dialogs must be > 0");
  for (double a : accuracy_grid) {
    if (!(a > 0.0 && a <= 1.0)) {
      throw std::invalid_argument("accuracy " + std::to_string(a) +
                                  " outside (0, 1]");
    }
  }
  const auto [len_lo, len_hi] = options.dialog_length_range;
  if (len_lo < 1 || len_hi < len_lo) {
    throw std::invalid_argument("invalid dialog_length_range");
  }
  const auto [conf_lo, conf_hi] = options.confidence_range;
  if (!(conf_lo >= 0.5 && conf_hi <= 1.0 && conf_lo <= conf_hi)) {
    throw std::invalid_argument("confidence_range must lie within [0.5, 1]");
  }
  if (!(options.label_autocorrelation >= 0.0 && options.label_autocorrelation < 1.0)) {
    throw std::invalid_argument("label_autocorrelation must be in [0, 1)");
  }
  options.decoder.validate();

  std::vector<GainPoint> table;
  table.reserve(accuracy_grid.size());
  for (std::size_t g = 0; g < accuracy_grid.size(); ++g) {
    const double accuracy = accuracy_grid[g];
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(g)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> length(len_lo, len_hi);
    std::uniform_int_distribution<int> other(0, kClasses - 2);
    std::discrete_distribution<int> prior(options.class_priors.begin(),
                                          options.class_priors.end());
    std::uniform_real_distribution<double> confidence(conf_lo, conf_hi);
    std::exponential_distribution<double> gamma1(1.0);

    std::size_t total = 0, raw_correct = 0, ded_correct = 0;
    for (std::size_t d = 0; d < num_dialogs; ++d) {
      DialogPosteriors dp;
      dp.dialog_id = "sim" + std::to_string(d);
      const int steps = length(rng);
      int label = prior(rng);
      for (int t = 0; t < steps; ++t) {
        if (t > 0 && unit(rng) >= options.label_autocorrelation) label = prior(rng);
        int predicted = label;
        if (unit(rng) >= accuracy) {
          predicted = other(rng);
          if (predicted >= label) ++predicted;
        }
        // Mass c on the prediction, the rest split by a flat Dirichlet.
        const double c = confidence(rng);
        std::array<double, models::kNumClasses> share{};
        double share_sum = 0.0;
        for (int k = 0; k < kClasses; ++k) {
          if (k == predicted) continue;
          share[static_cast<std::size_t>(k)] = gamma1(rng);
          share_sum += share[static_cast<std::size_t>(k)];
        }
        models::Posterior row;
        for (int k = 0; k < kClasses; ++k) {
          row.probs[static_cast<std::size_t>(k)] =
              k == predicted ? c
                             : (1.0 - c) * share[static_cast<std::size_t>(k)] / share_sum;
        }
        dp.rows.push_back(row);
        dp.gold.push_back(label);
      }

      const DecodedDialog decoded = decode(dp, options.decoder);
      for (std::size_t t = 0; t < dp.rows.size(); ++t) {
        ++total;
        if (models::predict(dp.rows[t]) == dp.gold[t]) ++raw_correct;
        if (decoded.labels[t] == dp.gold[t]) ++ded_correct;
      }
    }
    table.push_back({accuracy, static_cast<double>(raw_correct) / total,
                     static_cast<double>(ded_correct) / total});
  }
  return table;
}

std::vector<DialogPosteriors> read_posteriors_jsonl(std::istream& in) {
  std::vector<DialogPosteriors> dialogs;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw std::invalid_argument(where + "malformed JSON");
    }
    if (!rec.is_object()) throw std::invalid_argument(where + "expected an object");
    for (const char* key : {"dialog_id", "utterance_id", "posterior"}) {
      if (!rec.contains(key)) {
        throw std::invalid_argument(where + "missing field '" + key + "'");
      }
    }
    if (!rec["dialog_id"].is_string() || !rec["utterance_id"].is_string()) {
      throw std::invalid_argument(where + "dialog_id and utterance_id must be strings");
    }
    const auto& post = rec["posterior"];
    if (!post.is_array() || post.size() != models::kNumClasses) {
      throw std::invalid_argument(where + "posterior must be an array of 4 numbers");
    }
    models::Posterior row;
    for (std::size_t k = 0; k < models::kNumClasses; ++k) {
      if (!post[k].is_number()) {
        throw std::invalid_argument(where + "posterior must be an array of 4 numbers");
      }
      row.probs[k] = post[k].get<double>();
    }
    if (!row.is_valid(1e-6)) {
      throw std::invalid_argument(where + "posterior is not a distribution");
    }

    const std::string dialog_id = rec["dialog_id"].get<std::string>();
    auto [it, inserted] = index.try_emplace(dialog_id, dialogs.size());
    if (inserted) {
      dialogs.emplace_back();
      dialogs.back().dialog_id = dialog_id;
    }
    DialogPosteriors& dp = dialogs[it->second];

    const bool has_gold = rec.contains("gold") && !rec["gold"].is_null();
    if (!dp.rows.empty() && has_gold != !dp.gold.empty()) {
      throw std::invalid_argument(where + "gold must be present on all or none of dialog '" +
                                  dialog_id + "'");
    }
    if (has_gold) {
      const auto& g = rec["gold"];
      int label = -1;
      try {
        if (g.is_number_integer()) {
          label = g.get<int>();
          check_label(label);
        } else if (g.is_string()) {
          label = data::parse_label(g.get<std::string>());
        }
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(where + e.what());
      }
      if (label < 0) {
        throw std::invalid_argument(where + "gold must be a label name or index");
      }
      dp.gold.push_back(label);
    }
    dp.utterance_ids.push_back(rec["utterance_id"].get<std::string>());
    dp.rows.push_back(row);
  }
  return dialogs;
}

namespace {

nlohmann::ordered_json base_record(const DialogPosteriors& dp, std::size_t t) {
  nlohmann::ordered_json rec;
  rec["dialog_id"] = dp.dialog_id;
  rec["utterance_id"] = t < dp.utterance_ids.size()
                            ? dp.utterance_ids[t]
                            : dp.dialog_id + "_u" + std::to_string(t);
  rec["posterior"] = dp.rows[t].probs;
  if (!dp.gold.empty()) rec["gold"] = std::string(data::label_name(dp.gold[t]));
  return rec;
}

}  // namespace

void write_posteriors_jsonl(std::ostream& out,
                            std::span<const DialogPosteriors> dialogs,
                            const std::string& config_hash) {
  for (const auto& dp : dialogs) {
    for (std::size_t t = 0; t < dp.rows.size(); ++t) {
      auto rec = base_record(dp, t);
      if (!config_hash.empty()) rec["config_hash"] = config_hash;
      out << rec.dump() << '\n';
    }
  }
}

void write_decoded_jsonl(std::ostream& out,
                         std::span<const DialogPosteriors> dialogs,
                         std::span<const DecodedDialog> decoded,
                         const std::string& config_hash) {
  if (dialogs.size() != decoded.size()) {
    throw std::invalid_argument("dialogs and decoded results differ in count");
  }
  for (std::size_t d = 0; d < dialogs.size(); ++d) {
    const auto& dp = dialogs[d];
    const auto& dec = decoded[d];
    if (dec.labels.size() != dp.rows.size()) {
      throw std::invalid_argument("decoded length mismatch for dialog '" +
                                  dp.dialog_id + "'");
    }
    for (std::size_t t = 0; t < dp.rows.size(); ++t) {
      auto rec = base_record(dp, t);
      rec["decoded_label"] = std::string(data::label_name(dec.labels[t]));
      rec["score"] = dec.per_step_scores[t];
      if (!config_hash.empty()) rec["config_hash"] = config_hash;
      out << rec.dump() << '\n';
    }
  }
}

}  // namespace sincser::ded
