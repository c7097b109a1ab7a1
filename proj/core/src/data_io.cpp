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

#include "sincser/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sincser/dsp.hpp"

namespace sincser::data {
namespace {

// ---- little-endian helpers --------------------------------------------------

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

std::int16_t to_pcm16(double sample) {
  const double scaled = std::round(sample * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

// ---- CSV --------------------------------------------------------------------

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  char ch;
  const auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  const auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  while (in.get(ch)) {
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\n') {
      end_row();
    } else if (ch == '\r') {
      // tolerate CRLF
    } else {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (in_quotes) throw std::runtime_error("unterminated quoted CSV field");
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

int parse_label(std::string_view name) {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i) {
    if (kLabelNames[i] == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown label '" + std::string(name) +
                              "' (valid labels: happy, neutral, angry, sad)");
}

std::string_view label_name(int label) {
  if (label < 0 || label >= static_cast<int>(kLabelNames.size())) {
    throw std::out_of_range("label index " + std::to_string(label));
  }
  return kLabelNames[static_cast<std::size_t>(label)];
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> group_by_dialog(
    const Dataset& dataset) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto [it, inserted] = where.emplace(dataset[i].dialog_id, groups.size());
    if (inserted) groups.push_back({dataset[i].dialog_id, {}});
    groups[it->second].second.push_back(i);
  }
  return groups;
}

// ---------------------------------------------------------------------------

WavAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav file not found: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  const std::string where = path.string() + ": ";
  if (n < 12) throw std::runtime_error(where + "truncated WAV header");
  if (bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    throw std::runtime_error(where + "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t size = read_u32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16 || body + 16 > n) {
        throw std::runtime_error(where + "truncated fmt chunk");
      }
      format = read_u16(p + body);
      channels = read_u16(p + body + 2);
      rate = read_u32(p + body + 4);
      bits = read_u16(p + body + 14);
      have_fmt = true;
      if (format != 1 || bits != 16) {
        throw std::runtime_error(where + "unsupported WAV encoding: format tag " +
                                 std::to_string(format) + ", " +
                                 std::to_string(bits) +
                                 "-bit (expected PCM 16-bit)");
      }
      if (channels != 1) {
        throw std::runtime_error(where + "expected mono, found " +
                                 std::to_string(channels) + " channels");
      }
    } else if (id == "data") {
      if (!have_fmt) throw std::runtime_error(where + "data chunk before fmt chunk");
      if (body + size > n) throw std::runtime_error(where + "truncated data chunk");
      WavAudio audio;
      audio.sample_rate = rate;
      audio.samples.resize(size / 2);
      for (std::size_t i = 0; i < audio.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(p + body + 2 * i));
        audio.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return audio;
    }
    pos = body + size + (size & 1U);
  }
  throw std::runtime_error(where + (have_fmt ? "missing data chunk"
                                             : "truncated WAV header (no fmt chunk)"));
}

double quantize_pcm16(double sample) {
  return static_cast<double>(to_pcm16(sample)) / 32768.0;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               double sample_rate) {
  const auto rate = static_cast<std::uint32_t>(std::lround(sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : samples) put_u16(out, static_cast<std::uint16_t>(to_pcm16(s)));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// ---------------------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest not found: " + path.string());
  const auto rows = parse_csv(in);
  if (rows.empty()) throw std::runtime_error(path.string() + ": empty manifest");

  const std::vector<std::string> expected = {"utterance_id", "dialog_id",
                                             "speaker_id",   "wav_path",
                                             "transcript",   "label"};
  const auto& header = rows.front();
  for (const auto& col : expected) {
    if (std::find(header.begin(), header.end(), col) == header.end()) {
      throw std::runtime_error(path.string() + ": missing column '" + col + "'");
    }
  }
  if (header != expected) {
    throw std::runtime_error(path.string() + ": header must be exactly " +
                             std::string(kManifestHeader));
  }

  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != expected.size()) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(r + 1) +
                               " has " + std::to_string(row.size()) +
                               " fields, expected 6");
    }
    if (!seen.insert(row[0]).second) {
      throw std::runtime_error(path.string() + ": duplicate utterance_id '" +
                               row[0] + "'");
    }
    ManifestEntry e{row[0], row[1], row[2], row[3], row[4], 0};
    try {
      e.label = parse_label(row[5]);
    } catch (const std::invalid_argument& err) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(r + 1) +
                               ": " + err.what());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path,
                    std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << kManifestHeader << '\n';
  for (const auto& e : entries) {
    out << csv_field(e.utterance_id) << ',' << csv_field(e.dialog_id) << ','
        << csv_field(e.speaker_id) << ',' << csv_field(e.wav_path) << ','
        << csv_field(e.transcript) << ',' << label_name(e.label) << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  Dataset dataset;
  dataset.reserve(entries.size());
  for (const auto& e : entries) {
    std::filesystem::path wav = e.wav_path;
    if (wav.is_relative()) wav = base / wav;
    WavAudio audio = read_wav(wav);
    if (audio.samples.empty()) {
      throw std::runtime_error(wav.string() + ": no samples");
    }
    Utterance u;
    u.utterance_id = e.utterance_id;
    u.dialog_id = e.dialog_id;
    u.speaker_id = e.speaker_id;
    u.samples = std::move(audio.samples);
    u.sample_rate = audio.sample_rate;
    u.transcript = e.transcript;
    u.tokens = tokenize(e.transcript);
    u.label = e.label;
    dataset.push_back(std::move(u));
  }
  return dataset;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "wav");
  std::vector<ManifestEntry> entries;
  entries.reserve(dataset.size());
  for (const auto& u : dataset) {
    const std::string rel = "wav/" + u.utterance_id + ".wav";
    write_wav(dir / rel, u.samples, u.sample_rate);
    entries.push_back({u.utterance_id, u.dialog_id, u.speaker_id, rel,
                       u.transcript, u.label});
  }
  write_manifest(dir / "manifest.csv", entries);
}

// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<int> tokenize(std::string_view transcript) {
  std::vector<int> tokens;
  std::string word;
  const auto flush = [&] {
    if (word.empty()) return;
    tokens.push_back(static_cast<int>(1 + fnv1a64(word) % (kVocabBuckets - 1)));
    word.clear();
  };
  for (char ch : transcript) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalnum(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  if (tokens.empty()) tokens.push_back(0);
  return tokens;
}

// ---------------------------------------------------------------------------

void SynthSpec::validate() const {
  const auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  double sum = 0.0;
  for (double p : class_priors) {
    if (!(p >= 0.0)) fail("class priors must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail("class priors must sum to 1");
  const double nyquist = sample_rate / 2.0;
  for (std::size_t i = 0; i < class_bands.size(); ++i) {
    const auto [lo, hi] = class_bands[i];
    if (!(lo > 0.0 && lo < hi && hi < nyquist)) {
      fail("class band " + std::to_string(i) + " must satisfy 0 < low < high < Nyquist");
    }
    for (std::size_t j = 0; j < i; ++j) {
      const auto [lo2, hi2] = class_bands[j];
      if (lo < hi2 && lo2 < hi) fail("class bands must be pairwise disjoint");
    }
  }
  if (!(utterance_ms > 0.0)) fail("utterance_ms must be positive");
  if (!(signal_rms > 0.0) || noise_rms < 0.0) fail("signal/noise rms invalid");
  if (gain_jitter < 0.0 || gain_jitter >= 1.0) fail("gain_jitter must be in [0, 1)");
  if (!(min_active_fraction > 0.0 && min_active_fraction <= 1.0)) {
    fail("min_active_fraction must be in (0, 1]");
  }
  if (dialog_length_range.first < 1 ||
      dialog_length_range.second < dialog_length_range.first) {
    fail("dialog_length_range must satisfy 1 <= min <= max");
  }
  if (!(label_autocorrelation >= 0.0 && label_autocorrelation < 1.0)) {
    fail("label_autocorrelation must be in [0, 1)");
  }
  if (!(acoustic_confusion >= 0.0 && acoustic_confusion <= 1.0)) {
    fail("acoustic_confusion must be in [0, 1]");
  }
  if (!(token_informativeness >= 0.0 && token_informativeness <= 1.0)) {
    fail("token_informativeness must be in [0, 1]");
  }
  if (vocab_per_class == 0 || shared_vocab == 0) fail("vocabularies must be non-empty");
  if (words_range.first < 1 || words_range.second < words_range.first) {
    fail("words_range must satisfy 1 <= min <= max");
  }
  if (band_kernel_length % 2 == 0) fail("band_kernel_length must be odd");
}

std::string synth_word(int class_index, std::size_t word) {
  if (class_index < 0) return "s" + std::to_string(word);
  return "c" + std::to_string(class_index) + "w" + std::to_string(word);
}

Dataset generate_synthetic(const SynthSpec& spec, std::size_t num_dialogs) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::discrete_distribution<int> prior(spec.class_priors.begin(),
                                        spec.class_priors.end());
  std::uniform_int_distribution<int> dialog_len(spec.dialog_length_range.first,
                                                spec.dialog_length_range.second);
  std::uniform_int_distribution<int> word_count(spec.words_range.first,
                                                spec.words_range.second);
  std::uniform_int_distribution<std::size_t> class_word(0, spec.vocab_per_class - 1);
  std::uniform_int_distribution<std::size_t> shared_word(0, spec.shared_vocab - 1);
  std::uniform_int_distribution<int> other_class(1, 3);

  const auto window = dsp::hamming_window(spec.band_kernel_length);
  std::array<std::vector<double>, 4> band_kernels;
  for (std::size_t k = 0; k < 4; ++k) {
    band_kernels[k] = dsp::kernel_from_cutoffs(spec.class_bands[k].first,
                                               spec.class_bands[k].second,
                                               spec.sample_rate, window)
                          .coeffs;
  }
  const auto n = static_cast<std::size_t>(
      std::lround(spec.utterance_ms * spec.sample_rate / 1000.0));
  const std::size_t taps = spec.band_kernel_length;

  Dataset dataset;
  for (std::size_t d = 0; d < num_dialogs; ++d) {
    const std::string dialog_id = "dlg" + std::to_string(d);
    const int length = dialog_len(rng);
    int label = prior(rng);
    for (int t = 0; t < length; ++t) {
      if (t > 0 && unit(rng) >= spec.label_autocorrelation) label = prior(rng);

      Utterance u;
      u.utterance_id = dialog_id + "_u" + std::to_string(t);
      u.dialog_id = dialog_id;
      u.speaker_id = dialog_id + (t % 2 == 0 ? "_A" : "_B");
      u.sample_rate = spec.sample_rate;
      u.label = label;

      int audio_class = label;
      if (unit(rng) < spec.acoustic_confusion) {
        audio_class = (label + other_class(rng)) % 4;
      }
      const double active = spec.min_active_fraction +
                            (1.0 - spec.min_active_fraction) * unit(rng);
      const auto active_len = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(active * static_cast<double>(n))));
      const auto start = static_cast<std::size_t>(
          std::floor(unit(rng) * static_cast<double>(n - active_len + 1)));
      const double gain =
          spec.signal_rms * (1.0 + spec.gain_jitter * (2.0 * unit(rng) - 1.0));

      // Band-limited noise: white noise through the class band-pass kernel,
      // scaled to the target RMS over the active region.
      std::vector<double> white(active_len + taps - 1);
      for (double& v : white) v = gauss(rng);
      const auto& h = band_kernels[static_cast<std::size_t>(audio_class)];
      std::vector<double> band(active_len, 0.0);
      double energy = 0.0;
      for (std::size_t i = 0; i < active_len; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < taps; ++k) acc += white[i + k] * h[k];
        band[i] = acc;
        energy += acc * acc;
      }
      const double scale =
          energy > 0.0 ? gain / std::sqrt(energy / static_cast<double>(active_len)) : 0.0;

      u.samples.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        double v = spec.noise_rms * gauss(rng);
        if (i >= start && i < start + active_len) v += scale * band[i - start];
        u.samples[i] = quantize_pcm16(std::clamp(v, -1.0, 1.0));
      }

      const int words = word_count(rng);
      for (int w = 0; w < words; ++w) {
        if (w > 0) u.transcript.push_back(' ');
        if (unit(rng) < spec.token_informativeness) {
          u.transcript += synth_word(label, class_word(rng));
        } else {
          u.transcript += synth_word(-1, shared_word(rng));
        }
      }
      u.tokens = tokenize(u.transcript);
      dataset.push_back(std::move(u));
    }
  }
  return dataset;
}

}  // namespace sincser::data
