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

#ifndef SINCSER_TOOLS_RUN_CONFIG_HPP_
#define SINCSER_TOOLS_RUN_CONFIG_HPP_

// One JSON document drives every command. Sections: model, chunk, optimizer,
// ded, synth, paths, plus top-level seed/epochs/eval settings. The single seed
// feeds the model init, chunk sampling, batching, the split and synthesis.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sincser/data_io.hpp"
#include "sincser/ded.hpp"
#include "sincser/models.hpp"
#include "sincser/training.hpp"

namespace sincser::cli {

// Error with a short machine-readable kind ("usage", "config", "io",
// "schema", "runtime").
class CliError : public std::runtime_error {
 public:
  CliError(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct Paths {
  std::string data_dir = "data";  // holds manifest.csv
  std::string out_dir = "out";
  std::string checkpoint;         // empty: <out_dir>/model.ckpt
  std::string posteriors;         // decode input; empty: <out_dir>/posteriors.jsonl
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 15;
  std::size_t eval_chunks = 1;
  double val_fraction = 0.2;
  std::string eval_split = "val";  // "val" or "all"
  models::ModelConfig model;
  training::ChunkPolicy chunk;
  training::OptimizerConfig optimizer;
  ded::DedConfig ded;
  data::SynthSpec synth;
  std::size_t synth_dialogs = 200;
  Paths paths;

  training::TrainConfig train_config() const;
  std::string checkpoint_path() const;
  std::string posteriors_path() const;

 private:
  std::string path_or(const std::string& explicit_path,
                                 const char* file) const;
};

nlohmann::ordered_json to_json(const RunConfig& config);

// Strict: unknown keys and wrong types throw CliError("config").
RunConfig from_json(const nlohmann::json& j);

// Defaults, then the config file (if any), then each "a.b=value" override
// (value parsed as JSON, falling back to a bare string), then --seed.
RunConfig resolve_config(const std::optional<std::string>& config_path,
                         const std::vector<std::string>& overrides,
                         std::optional<std::uint64_t> seed);

// 16 hex digits of FNV-1a over the canonical dump. The paths section is left
// out so that the same experiment run into two directories hashes equally.
std::string config_hash(const RunConfig& config);

}  // namespace sincser::cli

#endif  // SINCSER_TOOLS_RUN_CONFIG_HPP_
