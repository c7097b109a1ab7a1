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

#include "sincser/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace sincser {
namespace {

using nlohmann::json;
using models::ModelConfig;

constexpr std::array<char, 8> kMagic = {'S', 'I', 'N', 'C', 'S', 'E', 'R', '\0'};
constexpr const char* kRunningMean = "acoustic.bn.running_mean";
constexpr const char* kRunningVar = "acoustic.bn.running_var";

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("checkpoint truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(bytes[i]) << (8 * i);
  }
  return value;
}

void write_doubles(std::ostream& out, std::span<const double> values) {
  for (double v : values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

std::vector<double> read_doubles(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  for (double& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return values;
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return json{
      {"acoustic_variant", models::to_string(c.acoustic_variant)},
      {"modality", models::to_string(c.modality)},
      {"num_filters", c.num_filters},
      {"kernel_length", c.kernel_length},
      {"stride", c.stride},
      {"pool_window", c.pool_window},
      {"sample_rate", c.sample_rate},
      {"chunk_samples", c.chunk_samples},
      {"cutoff_f_min", c.cutoff_f_min},
      {"cutoff_band_min", c.cutoff_band_min},
      {"acoustic_hidden", c.acoustic_hidden},
      {"acoustic_vec_dim", c.acoustic_vec_dim},
      {"vocab_size", c.vocab_size},
      {"embedding_dim", c.embedding_dim},
      {"linguistic_hidden", c.linguistic_hidden},
      {"attention_dim", c.attention_dim},
      {"linguistic_vec_dim", c.linguistic_vec_dim},
      {"max_seq_len", c.max_seq_len},
      {"num_classes", c.num_classes},
      {"seed", c.seed},
  };
}

ModelConfig model_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("model config must be an object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "acoustic_variant") {
      c.acoustic_variant = models::parse_acoustic_variant(value.get<std::string>());
    } else if (key == "modality") {
      c.modality = models::parse_modality(value.get<std::string>());
    } else if (key == "num_filters") {
      c.num_filters = value.get<std::size_t>();
    } else if (key == "kernel_length") {
      c.kernel_length = value.get<std::size_t>();
    } else if (key == "stride") {
      c.stride = value.get<std::size_t>();
    } else if (key == "pool_window") {
      c.pool_window = value.get<std::size_t>();
    } else if (key == "sample_rate") {
      c.sample_rate = value.get<double>();
    } else if (key == "chunk_samples") {
      c.chunk_samples = value.get<std::size_t>();
    } else if (key == "cutoff_f_min") {
      c.cutoff_f_min = value.get<double>();
    } else if (key == "cutoff_band_min") {
      c.cutoff_band_min = value.get<double>();
    } else if (key == "acoustic_hidden") {
      c.acoustic_hidden = value.get<std::size_t>();
    } else if (key == "acoustic_vec_dim") {
      c.acoustic_vec_dim = value.get<std::size_t>();
    } else if (key == "vocab_size") {
      c.vocab_size = value.get<std::size_t>();
    } else if (key == "embedding_dim") {
      c.embedding_dim = value.get<std::size_t>();
    } else if (key == "linguistic_hidden") {
      c.linguistic_hidden = value.get<std::size_t>();
    } else if (key == "attention_dim") {
      c.attention_dim = value.get<std::size_t>();
    } else if (key == "linguistic_vec_dim") {
      c.linguistic_vec_dim = value.get<std::size_t>();
    } else if (key == "max_seq_len") {
      c.max_seq_len = value.get<std::size_t>();
    } else if (key == "num_classes") {
      c.num_classes = value.get<std::size_t>();
    } else if (key == "seed") {
      c.seed = value.get<std::uint64_t>();
    } else {
      throw std::invalid_argument("unknown model config key '" + key + "'");
    }
  }
  return c;
}

void save_checkpoint(const models::Model& model,
                     const std::filesystem::path& path,
                     const json& provenance) {
  json tensors = json::array();
  for (const auto& p : model.parameters()) {
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  }
  const auto& stats = model.bn_stats();
  tensors.push_back({{"name", kRunningMean}, {"shape", Shape{stats.mean.size()}}});
  tensors.push_back({{"name", kRunningVar}, {"shape", Shape{stats.var.size()}}});

  const json manifest{{"config", model_config_to_json(model.config())},
                      {"tensors", tensors},
                      {"provenance", provenance}};
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.parameters()) write_doubles(out, p.value.span());
  write_doubles(out, stats.mean);
  write_doubles(out, stats.var);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

models::Model load_checkpoint(const std::filesystem::path& path,
                              json* provenance) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint not found: " + path.string());

  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    throw std::runtime_error(path.string() + " is not a sincser checkpoint");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }
  const auto length = get_le<std::uint64_t>(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw std::runtime_error("checkpoint truncated in manifest");

  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint manifest: ") + e.what());
  }
  const ModelConfig config = model_config_from_json(manifest.at("config"));

  models::ParameterSet params;
  layers::RunningStats stats;
  for (const auto& entry : manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    std::vector<double> values = read_doubles(in, shape_product(shape));
    if (name == kRunningMean) {
      stats.mean = std::move(values);
    } else if (name == kRunningVar) {
      stats.var = std::move(values);
    } else {
      params.add(name, Tensor(shape, std::move(values)));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("checkpoint has trailing bytes");
  }
  if (provenance != nullptr) *provenance = manifest.value("provenance", json::object());
  return models::model_from_parameters(config, std::move(params), std::move(stats));
}

}  // namespace sincser
