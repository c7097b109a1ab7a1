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

#ifndef SINCSER_TOOLS_COMMANDS_HPP_
#define SINCSER_TOOLS_COMMANDS_HPP_

#include <iosfwd>

#include "run_config.hpp"

namespace sincser::cli {

// Writes <out_dir>/manifest.csv, <out_dir>/wav/ and provenance.json.
void cmd_synth(const RunConfig& config);

// Trains on the non-validation part of <data_dir>; writes model.ckpt,
// train_log.jsonl and provenance.json into out_dir.
void cmd_train(const RunConfig& config);

// Writes metrics.json and posteriors.jsonl for the eval_split subset.
void cmd_eval(const RunConfig& config);

// DED over the posterior stream; writes decoded.jsonl and, when gold labels
// are present, decode_metrics.json.
void cmd_decode(const RunConfig& config);

// Cutoff table filters.csv plus filter_NN.csv magnitude responses.
void cmd_inspect_filters(const RunConfig& config);

// Full command-line entry point. Errors are reported on `err` as one JSON
// line {"error": kind, "message": ...}; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sincser::cli

#endif  // SINCSER_TOOLS_COMMANDS_HPP_
