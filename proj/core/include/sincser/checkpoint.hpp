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

#ifndef SINCSER_CHECKPOINT_HPP_
#define SINCSER_CHECKPOINT_HPP_

// Versioned binary model checkpoints.
//
// Layout (all integers little-endian):
//   8 bytes   magic "SINCSER\0"
//   u32       format version (1)
//   u64       manifest length N
//   N bytes   UTF-8 JSON manifest: {"config": {...}, "tensors": [{"name",
//             "shape"}...], "provenance": {...}}
//   payload   every tensor in manifest order as raw IEEE-754 binary64
//
// Batch-norm running statistics are stored as the tensors
// "acoustic.bn.running_mean" / "acoustic.bn.running_var". Values round-trip
// bit-exact.

#include <filesystem>

#include <nlohmann/json.hpp>

#include "sincser/models.hpp"

namespace sincser {

inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json model_config_to_json(const models::ModelConfig& config);
// Missing keys keep their defaults; unknown keys throw std::invalid_argument.
models::ModelConfig model_config_from_json(const nlohmann::json& j);

void save_checkpoint(const models::Model& model,
                     const std::filesystem::path& path,
                     const nlohmann::json& provenance = nlohmann::json::object());

// Throws std::runtime_error on a missing, truncated or malformed file.
models::Model load_checkpoint(const std::filesystem::path& path,
                              nlohmann::json* provenance = nullptr);

}  // namespace sincser

#endif  // SINCSER_CHECKPOINT_HPP_
