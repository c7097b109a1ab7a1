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

#include "run_config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sincser/checkpoint.hpp"

namespace sincser::cli {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

ojson band_pairs(const std::array<std::pair<double, double>, 4>& bands) {
  ojson out = ojson::array();
  for (const auto& [lo, hi] : bands) out.push_back({lo, hi});
  return out;
}

ojson synth_to_json(const data::SynthSpec& s, std::size_t dialogs) {
  return ojson{
      {"num_dialogs", dialogs},
      {"class_bands", band_pairs(s.class_bands)},
      {"class_priors", s.class_priors},
      {"sample_rate", s.sample_rate},
      {"utterance_ms", s.utterance_ms},
      {"signal_rms", s.signal_rms},
      {"gain_jitter", s.gain_jitter},
      {"min_active_fraction", s.min_active_fraction},
      {"noise_rms", s.noise_rms},
      {"dialog_length_range", {s.dialog_length_range.first, s.dialog_length_range.second}},
      {"label_autocorrelation", s.label_autocorrelation},
      {"acoustic_confusion", s.acoustic_confusion},
      {"vocab_per_class", s.vocab_per_class},
      {"shared_vocab", s.shared_vocab},
      {"token_informativeness", s.token_informativeness},
      {"words_range", {s.words_range.first, s.words_range.second}},
      {"band_kernel_length", s.band_kernel_length},
  };
}

ojson model_to_json(const models::ModelConfig& m) {
  // Checkpoint key order, minus the seed (taken from the top level).
  const json full = model_config_to_json(m);
  ojson out;
  for (const char* key :
       {"acoustic_variant", "modality", "num_filters", "kernel_length", "stride",
        "pool_window", "sample_rate", "chunk_samples", "cutoff_f_min",
        "cutoff_band_min", "acoustic_hidden", "acoustic_vec_dim", "vocab_size",
        "embedding_dim", "linguistic_hidden", "attention_dim",
        "linguistic_vec_dim", "max_seq_len", "num_classes"}) {
    out[key] = full.at(key);
  }
  return out;
}

// Overlays patch onto base; every patch key must already exist in base.
void merge_strict(ojson& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) {
    throw CliError("config", "'" + (prefix.empty() ? std::string("<root>") : prefix) +
                                 "' must be an object");
  }
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw CliError("config", "unknown key '" + path + "'");
    ojson& slot = base[key];
    if (slot.is_object()) {
      merge_strict(slot, value, path);
    } else {
      if (value.is_object()) {
        throw CliError("config", "'" + path + "' must not be an object");
      }
      slot = value;
    }
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    const std::string path = std::string(section).empty()
                                 ? std::string(key)
                                 : std::string(section) + "." + key;
    throw CliError("config", "bad value for '" + path + "': " + j.at(key).dump());
  }
}

std::pair<int, int> get_range(const json& j, const char* section, const char* key) {
  const auto v = get<std::vector<int>>(j, section, key);
  if (v.size() != 2) {
    throw CliError("config", std::string("'") + section + "." + key +
                                 "' must be [min, max]");
  }
  return {v[0], v[1]};
}

template <typename F>
void validated(const char* section, F&& check) {
  try {
    check();
  } catch (const std::invalid_argument& e) {
    throw CliError("config", std::string(section) + ": " + e.what());
  }
}

}  // namespace

training::TrainConfig RunConfig::train_config() const {
  training::TrainConfig tc;
  tc.optimizer = optimizer;
  tc.chunk = chunk;
  tc.epochs = epochs;
  tc.eval_chunks = eval_chunks;
  tc.seed = seed;
  return tc;
}

std::string RunConfig::checkpoint_path() const {
  return path_or(paths.checkpoint, "model.ckpt");
}

std::string RunConfig::posteriors_path() const {
  return path_or(paths.posteriors, "posteriors.jsonl");
}

std::string RunConfig::path_or(const std::string& explicit_path,
                                          const char* file) const {
  if (!explicit_path.empty()) return explicit_path;
  return (std::filesystem::path(paths.out_dir) / file).string();
}

ojson to_json(const RunConfig& c) {
  return ojson{
      {"seed", c.seed},
      {"epochs", c.epochs},
      {"eval_chunks", c.eval_chunks},
      {"val_fraction", c.val_fraction},
      {"eval_split", c.eval_split},
      {"model", model_to_json(c.model)},
      {"chunk",
       {{"chunk_ms", c.chunk.chunk_ms},
        {"energy_filter", c.chunk.energy_filter},
        {"energy_quantile", c.chunk.energy_quantile},
        {"subwindow_ms", c.chunk.subwindow_ms},
        {"max_draws", c.chunk.max_draws}}},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon},
        {"batch_size", c.optimizer.batch_size},
        {"cutoff_lr_scale", c.optimizer.cutoff_lr_scale}}},
      {"ded",
       {{"lambda_history", c.ded.lambda_history},
        {"shift_penalty", c.ded.shift_penalty},
        {"history_smoothing", c.ded.history_smoothing},
        {"beam_width", c.ded.beam_width}}},
      {"synth", synth_to_json(c.synth, c.synth_dialogs)},
      {"paths",
       {{"data_dir", c.paths.data_dir},
        {"out_dir", c.paths.out_dir},
        {"checkpoint", c.paths.checkpoint},
        {"posteriors", c.paths.posteriors}}},
  };
}

RunConfig from_json(const json& in) {
  // Round through the defaults so unknown keys are caught and missing keys
  // keep their default values.
  ojson full = to_json(RunConfig{});
  merge_strict(full, in, "");
  const json j = json::parse(full.dump());

  RunConfig c;
  c.seed = get<std::uint64_t>(j, "", "seed");
  c.epochs = get<std::size_t>(j, "", "epochs");
  c.eval_chunks = get<std::size_t>(j, "", "eval_chunks");
  c.val_fraction = get<double>(j, "", "val_fraction");
  c.eval_split = get<std::string>(j, "", "eval_split");
  if (c.epochs == 0) throw CliError("config", "epochs must be >= 1");
  if (c.eval_chunks == 0) throw CliError("config", "eval_chunks must be >= 1");
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) {
    throw CliError("config", "val_fraction must be in (0, 1)");
  }
  if (c.eval_split != "val" && c.eval_split != "all") {
    throw CliError("config", "eval_split must be 'val' or 'all'");
  }

  json model = j.at("model");
  model["seed"] = c.seed;
  validated("model", [&] { c.model = model_config_from_json(model); });
  validated("model", [&] { c.model.validate(); });

  const json& ch = j.at("chunk");
  c.chunk.chunk_ms = get<double>(ch, "chunk", "chunk_ms");
  c.chunk.energy_filter = get<bool>(ch, "chunk", "energy_filter");
  c.chunk.energy_quantile = get<double>(ch, "chunk", "energy_quantile");
  c.chunk.subwindow_ms = get<double>(ch, "chunk", "subwindow_ms");
  c.chunk.max_draws = get<int>(ch, "chunk", "max_draws");
  c.chunk.seed = c.seed;
  validated("chunk", [&] { c.chunk.validate(); });
  if (c.chunk.chunk_samples(c.model.sample_rate) != c.model.chunk_samples) {
    throw CliError("config", "chunk.chunk_ms gives " +
                                 std::to_string(c.chunk.chunk_samples(c.model.sample_rate)) +
                                 " samples but model.chunk_samples is " +
                                 std::to_string(c.model.chunk_samples));
  }

  const json& op = j.at("optimizer");
  c.optimizer.lr = get<double>(op, "optimizer", "lr");
  c.optimizer.beta1 = get<double>(op, "optimizer", "beta1");
  c.optimizer.beta2 = get<double>(op, "optimizer", "beta2");
  c.optimizer.epsilon = get<double>(op, "optimizer", "epsilon");
  c.optimizer.batch_size = get<std::size_t>(op, "optimizer", "batch_size");
  c.optimizer.cutoff_lr_scale = get<double>(op, "optimizer", "cutoff_lr_scale");
  validated("optimizer", [&] { c.optimizer.validate(); });

  const json& dd = j.at("ded");
  c.ded.lambda_history = get<double>(dd, "ded", "lambda_history");
  c.ded.shift_penalty = get<double>(dd, "ded", "shift_penalty");
  c.ded.history_smoothing = get<double>(dd, "ded", "history_smoothing");
  c.ded.beam_width = get<std::size_t>(dd, "ded", "beam_width");
  validated("ded", [&] { c.ded.validate(); });

  const json& sy = j.at("synth");
  c.synth_dialogs = get<std::size_t>(sy, "synth", "num_dialogs");
  if (c.synth_dialogs == 0) throw CliError("config", "synth.num_dialogs must be >= 1");
  const auto bands = get<std::vector<std::vector<double>>>(sy, "synth", "class_bands");
  if (bands.size() != 4) throw CliError("config", "synth.class_bands needs 4 [low, high] pairs");
  for (std::size_t k = 0; k < 4; ++k) {
    if (bands[k].size() != 2) {
      throw CliError("config", "synth.class_bands needs 4 [low, high] pairs");
    }
    c.synth.class_bands[k] = {bands[k][0], bands[k][1]};
  }
  const auto priors = get<std::vector<double>>(sy, "synth", "class_priors");
  if (priors.size() != 4) throw CliError("config", "synth.class_priors needs 4 values");
  std::copy(priors.begin(), priors.end(), c.synth.class_priors.begin());
  c.synth.sample_rate = get<double>(sy, "synth", "sample_rate");
  c.synth.utterance_ms = get<double>(sy, "synth", "utterance_ms");
  c.synth.signal_rms = get<double>(sy, "synth", "signal_rms");
  c.synth.gain_jitter = get<double>(sy, "synth", "gain_jitter");
  c.synth.min_active_fraction = get<double>(sy, "synth", "min_active_fraction");
  c.synth.noise_rms = get<double>(sy, "synth", "noise_rms");
  c.synth.dialog_length_range = get_range(sy, "synth", "dialog_length_range");
  c.synth.label_autocorrelation = get<double>(sy, "synth", "label_autocorrelation");
  c.synth.acoustic_confusion = get<double>(sy, "synth", "acoustic_confusion");
  c.synth.vocab_per_class = get<std::size_t>(sy, "synth", "vocab_per_class");
  c.synth.shared_vocab = get<std::size_t>(sy, "synth", "shared_vocab");
  c.synth.token_informativeness = get<double>(sy, "synth", "token_informativeness");
  c.synth.words_range = get_range(sy, "synth", "words_range");
  c.synth.band_kernel_length = get<std::size_t>(sy, "synth", "band_kernel_length");
  c.synth.seed = c.seed;
  validated("synth", [&] { c.synth.validate(); });

  const json& pa = j.at("paths");
  c.paths.data_dir = get<std::string>(pa, "paths", "data_dir");
  c.paths.out_dir = get<std::string>(pa, "paths", "out_dir");
  c.paths.checkpoint = get<std::string>(pa, "paths", "checkpoint");
  c.paths.posteriors = get<std::string>(pa, "paths", "posteriors");
  return c;
}

RunConfig resolve_config(const std::optional<std::string>& config_path,
                         const std::vector<std::string>& overrides,
                         std::optional<std::uint64_t> seed) {
  json doc = json::object();
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw CliError("io", "cannot open config " + *config_path);
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw CliError("config", *config_path + ": " + e.what());
    }
    if (!doc.is_object()) throw CliError("config", *config_path + ": expected an object");
  }
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw CliError("usage", "--set expects key=value, got '" + item + "'");
    }
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::stringstream parts(key);
    std::string part;
    std::vector<std::string> names;
    while (std::getline(parts, part, '.')) names.push_back(part);
    for (std::size_t i = 0; i + 1 < names.size(); ++i) {
      json& next = (*node)[names[i]];
      if (!next.is_object()) next = json::object();
      node = &next;
    }
    (*node)[names.back()] = value;
  }
  if (seed) doc["seed"] = *seed;
  return from_json(doc);
}

std::string config_hash(const RunConfig& config) {
  ojson canonical = to_json(config);
  canonical.erase("paths");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(data::fnv1a64(canonical.dump())));
  return buf;
}

}  // namespace sincser::cli
