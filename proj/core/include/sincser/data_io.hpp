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

#ifndef SINCSER_DATA_IO_HPP_
#define SINCSER_DATA_IO_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sincser::data {

inline constexpr std::array<std::string_view, 4> kLabelNames = {
    "happy", "neutral", "angry", "sad"};

// Throws std::invalid_argument listing the four valid labels.
int parse_label(std::string_view name);
std::string_view label_name(int label);

struct Utterance {
  std::string utterance_id;
  std::string dialog_id;
  std::string speaker_id;
  std::vector<double> samples;  // mono, [-1, 1]
  double sample_rate = 16000.0;
  std::string transcript;
  std::vector<int> tokens;
  int label = 0;
};

using Dataset = std::vector<Utterance>;

// Dialog ids in first-appearance order, each with its utterance indices in
// dataset order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> group_by_dialog(
    const Dataset& dataset);

// ---------------------------------------------------------------------------
// WAV (RIFF/WAVE, PCM 16-bit, mono)
// ---------------------------------------------------------------------------

struct WavAudio {
  std::vector<double> samples;  // int16 / 32768
  double sample_rate = 0.0;
};

// Throws std::runtime_error for a missing file, truncated header, non-PCM16
// encoding or more than one channel.
WavAudio read_wav(const std::filesystem::path& path);

// Samples are scaled by 32768, rounded and clamped to int16.
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               double sample_rate);

// Rounds to the int16 grid write_wav uses, so in-memory audio equals what a
// write/read round trip returns.
double quantize_pcm16(double sample);

// ---------------------------------------------------------------------------
// Manifest CSV: utterance_id,dialog_id,speaker_id,wav_path,transcript,label
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string utterance_id;
  std::string dialog_id;
  std::string speaker_id;
  std::string wav_path;
  std::string transcript;
  int label = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline constexpr std::string_view kManifestHeader =
    "utterance_id,dialog_id,speaker_id,wav_path,transcript,label";

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    std::span<const ManifestEntry> entries);

// Reads the manifest and every referenced WAV (paths relative to the manifest
// directory) and tokenizes transcripts.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes <dir>/manifest.csv plus <dir>/wav/<utterance_id>.wav.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

inline constexpr std::size_t kVocabBuckets = 4096;

// 64-bit FNV-1a: offset 0xcbf29ce484222325, prime 0x100000001b3, over bytes.
std::uint64_t fnv1a64(std::string_view bytes);

// ASCII-lowercase, split on non-alphanumerics, word -> 1 + fnv1a64(word) % 4095.
// Token 0 is reserved and returned alone for text without any word.
std::vector<int> tokenize(std::string_view transcript);

// ---------------------------------------------------------------------------
// Synthetic band-limited corpus
// ---------------------------------------------------------------------------

inline constexpr std::array<double, 4> kDefaultClassPriors = {
    0.295 / 0.997, 0.308 / 0.997, 0.199 / 0.997, 0.195 / 0.997};

struct SynthSpec {
  std::array<std::pair<double, double>, 4> class_bands = {
      {{500.0, 1000.0}, {1500.0, 2100.0}, {2600.0, 3400.0}, {4200.0, 5200.0}}};
  // Corpus class ratios 29.5/30.8/19.9/19.5 %, renormalized (they sum to 99.7 %).
  std::array<double, 4> class_priors = kDefaultClassPriors;
  double sample_rate = 16000.0;
  double utterance_ms = 750.0;
  double signal_rms = 0.1;
  double gain_jitter = 0.3;  // per-utterance gain drawn from 1 +- jitter
  // Fraction of the utterance carrying the class signal, drawn uniformly from
  // [min_active_fraction, 1]; the rest is background noise only.
  double min_active_fraction = 0.6;
  double noise_rms = 0.3;
  std::pair<int, int> dialog_length_range = {10, 10};
  double label_autocorrelation = 0.5;
  // Probability that an utterance's audio uses another class's band while
  // its label and words stay correct.
  double acoustic_confusion = 0.0;
  std::size_t vocab_per_class = 25;
  std::size_t shared_vocab = 200;
  double token_informativeness = 0.3;  // chance each word is a class word
  std::pair<int, int> words_range = {4, 10};
  std::size_t band_kernel_length = 257;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on the first violated constraint.
  void validate() const;
};

// Seeded; labels follow a first-order Markov chain that keeps the previous
// label with probability label_autocorrelation and otherwise redraws from
// class_priors (so class_priors is stationary).
Dataset generate_synthetic(const SynthSpec& spec, std::size_t num_dialogs);

// Word strings used for a class (class_index 0..3) or the shared pool (-1).
std::string synth_word(int class_index, std::size_t word);

}  // namespace sincser::data

#endif  // SINCSER_DATA_IO_HPP_
