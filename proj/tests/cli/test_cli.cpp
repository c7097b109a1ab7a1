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

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "doctest.h"
#include "run_config.hpp"
#include "sincser/checkpoint.hpp"
#include "sincser/dsp.hpp"
#include "support/tempdir.hpp"

namespace cli = sincser::cli;
namespace st = sincser::testing;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "sincser");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Small but complete: 100 ms chunks, 4 short filters.
const std::vector<std::string> kSmall = {
    "--set", "synth.num_dialogs=3",      "--set", "synth.utterance_ms=300",
    "--set", "chunk.chunk_ms=100",       "--set", "model.chunk_samples=1600",
    "--set", "model.num_filters=4",      "--set", "model.kernel_length=31",
    "--set", "model.acoustic_hidden=6",  "--set", "model.acoustic_vec_dim=8",
    "--set", "epochs=1",                 "--set", "optimizer.batch_size=8"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

std::string last_line(const std::string& text) {
  auto end = text.find_last_not_of('\n');
  auto start = text.rfind('\n', end);
  return text.substr(start == std::string::npos ? 0 : start + 1, end - start);
}

}  // namespace

TEST_CASE("pipeline smoke: synth, train, eval, decode") {
  st::TempDir dir;
  const std::string data = (dir / "data").string();
  const std::string out = (dir / "run").string();
  REQUIRE(run(with_small({"synth", "--out", data})).code == 0);
  REQUIRE(run(with_small({"train", "--data", data, "--out", out})).code == 0);
  REQUIRE(run(with_small({"eval", "--data", data, "--out", out})).code == 0);
  const auto metrics = nlohmann::json::parse(st::read_text(dir / "run" / "metrics.json"));
  CHECK(metrics["wa"].get<double>() >= 0.0);
  CHECK(metrics["wa"].get<double>() <= 1.0);
  CHECK(metrics["confusion"].size() == 4);
  CHECK(metrics.contains("config_hash"));
  REQUIRE(run(with_small({"decode", "--out", out})).code == 0);
  const std::string decoded = st::read_text(dir / "run" / "decoded.jsonl");
  CHECK(decoded.find("decoded_label") != std::string::npos);
  CHECK(decoded.find(metrics["config_hash"].get<std::string>()) != std::string::npos);
  const auto provenance = nlohmann::json::parse(st::read_text(dir / "run" / "provenance.json"));
  CHECK(provenance["command"] == "decode");
  CHECK(provenance["config_hash"] == metrics["config_hash"]);
  const std::string log = st::read_text(dir / "run" / "train_log.jsonl");
  CHECK(log.find("\"config_hash\"") != std::string::npos);
}

TEST_CASE("decode without context terms returns the argmax") {
  st::TempDir dir;
  st::write_text(dir / "post.jsonl",
                 "{\"dialog_id\":\"a\",\"utterance_id\":\"1\",\"posterior\":[0.1,0.6,0.2,0.1]}\n"
                 "{\"dialog_id\":\"a\",\"utterance_id\":\"2\",\"posterior\":[0.1,0.2,0.3,0.4]}\n"
                 "{\"dialog_id\":\"a\",\"utterance_id\":\"3\",\"posterior\":[0.7,0.1,0.1,0.1]}\n");
  const auto r = run({"decode", "--in", (dir / "post.jsonl").string(), "--out",
                      dir.path().string(), "--set", "ded.lambda_history=0", "--set",
                      "ded.shift_penalty=0"});
  REQUIRE(r.code == 0);
  std::istringstream lines(st::read_text(dir / "decoded.jsonl"));
  std::vector<std::string> labels;
  for (std::string line; std::getline(lines, line);) {
    labels.push_back(nlohmann::json::parse(line)["decoded_label"].get<std::string>());
  }
  CHECK(labels == std::vector<std::string>{"neutral", "sad", "happy"});
}

TEST_CASE("inspect-filters on a fresh model reports the mel grid") {
  st::TempDir dir;
  sincser::models::ModelConfig mc;
  mc.num_filters = 8;
  sincser::save_checkpoint(sincser::models::build_model(mc), dir / "fresh.ckpt");
  const auto r = run({"inspect-filters", "--checkpoint", (dir / "fresh.ckpt").string(),
                      "--out", (dir / "filters").string()});
  REQUIRE(r.code == 0);
  const auto grid = sincser::dsp::mel_spaced_init(8, 16000.0, 251);
  std::istringstream table(st::read_text(dir / "filters" / "filters.csv"));
  std::string line;
  std::getline(table, line);
  CHECK(line == "filter_index,f1_hz,f2_hz");
  for (std::size_t f = 0; f < grid.size(); ++f) {
    REQUIRE(std::getline(table, line));
    std::istringstream row(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
    const auto expected = sincser::dsp::constrain_cutoffs(grid[f]);
    CHECK(v[0] == static_cast<double>(f));
    CHECK(std::abs(v[1] - expected.f1) < 1e-6);
    CHECK(std::abs(v[2] - expected.f2) < 1e-6);
  }
  // 1024 response bins plus the header line.
  const std::string response = st::read_text(dir / "filters" / "filter_07.csv");
  CHECK(response.rfind("freq_hz,magnitude\n", 0) == 0);
  CHECK(std::count(response.begin(), response.end(), '\n') == 1025);
  const auto provenance =
      nlohmann::json::parse(st::read_text(dir / "filters" / "provenance.json"));
  CHECK(provenance["class_band_energy"].size() == 8);
  CHECK(provenance.contains("config_hash"));
}

TEST_CASE("errors are one machine-readable line") {
  st::TempDir dir;
  auto r = run({"train", "--set", "model.bogus=1"});
  CHECK(r.code == 2);
  auto err = nlohmann::json::parse(last_line(r.err));
  CHECK(err["error"] == "config");
  CHECK(err["message"].get<std::string>().find("model.bogus") != std::string::npos);

  r = run({"eval", "--checkpoint", (dir / "missing.ckpt").string(), "--out",
           dir.path().string()});
  CHECK(r.code == 1);
  CHECK(nlohmann::json::parse(last_line(r.err))["error"] == "io");

  st::write_text(dir / "junk.ckpt", "not a checkpoint");
  r = run({"inspect-filters", "--checkpoint", (dir / "junk.ckpt").string(), "--out",
           dir.path().string()});
  CHECK(r.code == 1);
  CHECK(nlohmann::json::parse(last_line(r.err))["error"] == "schema");

  st::write_text(dir / "bad.jsonl", "{\"dialog_id\":1}\n");
  r = run({"decode", "--in", (dir / "bad.jsonl").string(), "--out", dir.path().string()});
  CHECK(nlohmann::json::parse(last_line(r.err))["error"] == "schema");

  r = run({"train", "--set", "optimizer.lr=\"fast\""});
  CHECK(r.code == 2);
  r = run({"train", "--set", "noequals"});
  CHECK(nlohmann::json::parse(last_line(r.err))["error"] == "usage");
  r = run({});
  CHECK(r.code == 2);
  r = run({"synth", "--config", (dir / "nope.json").string()});
  CHECK(nlohmann::json::parse(last_line(r.err))["error"] == "io");
}

TEST_CASE("config resolution order and hashing") {
  st::TempDir dir;
  st::write_text(dir / "cfg.json",
                 R"({"epochs": 3, "model": {"acoustic_variant": "cnn"}, "seed": 5})");
  const auto c = cli::resolve_config((dir / "cfg.json").string(),
                                     {"epochs=4", "paths.out_dir=elsewhere"}, 9);
  CHECK(c.epochs == 4);
  CHECK(c.seed == 9);
  CHECK(c.model.seed == 9);
  CHECK(c.synth.seed == 9);
  CHECK(c.model.acoustic_variant == sincser::models::AcousticVariant::kCnn);
  CHECK(c.paths.out_dir == "elsewhere");

  auto moved = c;
  moved.paths.out_dir = "another";
  CHECK(cli::config_hash(moved) == cli::config_hash(c));
  moved.ded.beam_width = 3;
  CHECK(cli::config_hash(moved) != cli::config_hash(c));

  // The canonical dump reloads to the same config.
  const auto again = cli::from_json(nlohmann::json::parse(cli::to_json(c).dump()));
  CHECK(cli::to_json(again).dump() == cli::to_json(c).dump());

  CHECK_THROWS_AS(cli::resolve_config(std::nullopt, {"model.seed=3"}, std::nullopt),
                  cli::CliError);
  CHECK_THROWS_AS(cli::resolve_config(std::nullopt, {"chunk.chunk_ms=100"}, std::nullopt),
                  cli::CliError);
}

TEST_CASE("identical runs give byte-identical outputs") {
  st::TempDir dir;
  const std::string data = (dir / "data").string();
  REQUIRE(run(with_small({"synth", "--out", data})).code == 0);
  for (const char* name : {"a", "b"}) {
    const std::string out = (dir / name).string();
    REQUIRE(run(with_small({"train", "--data", data, "--out", out})).code == 0);
    REQUIRE(run(with_small({"eval", "--data", data, "--out", out})).code == 0);
  }
  for (const char* file : {"metrics.json", "train_log.jsonl", "posteriors.jsonl", "model.ckpt"}) {
    CHECK(st::read_text(dir / "a" / file) == st::read_text(dir / "b" / file));
  }
}
