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

#ifndef SINCSER_DED_HPP_
#define SINCSER_DED_HPP_

// Dialog-level emotion decoder.
//
// A labeling y_0..y_{T-1} of a dialog is scored as
//
//   sum_t  log p_t(y_t)
//        + lambda_history * log((#{s < t : y_s = y_t} + k) / (t + 4k))
//        - shift_penalty  * [t > 0 and y_t != y_{t-1}]
//
// i.e. classifier evidence, an add-k smoothed frequency prior from the dialog
// history, and a constant cost per emotion shift. decode() searches for the
// best labeling with a beam over (history counts, last label) states;
// brute_force_decode() enumerates all 4^T labelings.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sincser/data_io.hpp"
#include "sincser/models.hpp"

namespace sincser::ded {

struct DialogPosteriors {
  std::string dialog_id;
  std::vector<std::string> utterance_ids;
  std::vector<models::Posterior> rows;
  std::vector<int> gold;  // empty, or one label per row

  void validate() const;
};

struct DedConfig {
  double lambda_history = 0.3;
  double shift_penalty = 1.5;
  double history_smoothing = 1.0;  // add-k
  std::size_t beam_width = 16;

  void validate() const;
};

struct DecodedDialog {
  std::vector<int> labels;
  double total_score = 0.0;
  std::vector<double> per_step_scores;
};

// Posterior entries of 0 are floored at machine epsilon before the log.
// Throws std::invalid_argument when labels and rows differ in length.
double score_assignment(const DialogPosteriors& dp, std::span<const int> labels,
                        const DedConfig& cfg);

// Beam search; ties go to the lexicographically smaller label sequence.
DecodedDialog decode(const DialogPosteriors& dp, const DedConfig& cfg);

inline constexpr std::size_t kMaxBruteForceLength = 10;

// Exhaustive search over all 4^T labelings (T <= 10).
DecodedDialog brute_force_decode(const DialogPosteriors& dp, const DedConfig& cfg);

// ---------------------------------------------------------------------------
// Simulation of decoder gain over a pre-classifier of known accuracy
// ---------------------------------------------------------------------------

struct GainStudyOptions {
  std::pair<int, int> dialog_length_range = {8, 16};
  double label_autocorrelation = 0.8;
  std::array<double, 4> class_priors = data::kDefaultClassPriors;
  // Probability mass on the predicted class, drawn uniformly from this range
  // (lower bound >= 0.5 keeps the prediction the argmax).
  std::pair<double, double> confidence_range = {0.5, 0.95};
  DedConfig decoder;
};

struct GainPoint {
  double pre_acc = 0.0;
  double raw_wa = 0.0;  // argmax of the simulated posteriors
  double ded_wa = 0.0;  // after decode()
};

// Accuracies must lie in (0, 1]; throws std::invalid_argument for an empty
// grid or num_dialogs == 0.
std::vector<GainPoint> ded_gain_study(std::span<const double> accuracy_grid,
                                      std::size_t num_dialogs, std::uint64_t seed,
                                      const GainStudyOptions& options = {});

// ---------------------------------------------------------------------------
// JSON-lines I/O
// ---------------------------------------------------------------------------

// One object per line: {"dialog_id", "utterance_id", "posterior": [4],
// "gold": optional int 0..3 or label name}. Dialogs are returned in
// first-appearance order with rows in file order.
std::vector<DialogPosteriors> read_posteriors_jsonl(std::istream& in);

void write_posteriors_jsonl(std::ostream& out,
                            std::span<const DialogPosteriors> dialogs,
                            const std::string& config_hash = "");

// Input records plus "decoded_label" and per-step "score"; when config_hash
// is non-empty every record also carries it.
void write_decoded_jsonl(std::ostream& out,
                         std::span<const DialogPosteriors> dialogs,
                         std::span<const DecodedDialog> decoded,
                         const std::string& config_hash = "");

}  // namespace sincser::ded

#endif  // SINCSER_DED_HPP_
