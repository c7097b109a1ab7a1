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

#include "commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "sincser/checkpoint.hpp"
#include "sincser/dsp.hpp"

namespace sincser::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::size_t kResponseBins = 1024;

std::shared_ptr<spdlog::logger>& logger() {
  static std::shared_ptr<spdlog::logger> instance;
  return instance;
}

void setup_logging(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  sink->set_pattern("[%l] %v");
  logger() = std::make_shared<spdlog::logger>("sincser", sink);
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv("SINCSER_LOG")) {
    level = spdlog::level::from_str(env);
  }
  logger()->set_level(level);
}

spdlog::logger& log() {
  if (!logger()) setup_logging(std::cerr);
  return *logger();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError("io", "cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CliError("io", "cannot open " + path.string() + " for writing");
  return out;
}

void write_json(const fs::path& path, const ojson& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void log_resolved(const RunConfig& config, const char* command) {
  log().info("{}: resolved config {}", command, to_json(config).dump());
  log().info("{}: config_hash {}", command, config_hash(config));
}

void write_provenance(const RunConfig& config, const char* command) {
  write_json(fs::path(config.paths.out_dir) / "provenance.json",
             ojson{{"command", command},
                   {"config_hash", config_hash(config)},
                   {"config", to_json(config)}});
}

data::Dataset load_data(const RunConfig& config) {
  const fs::path manifest = fs::path(config.paths.data_dir) / "manifest.csv";
  try {
    return data::load_dataset(manifest);
  } catch (const std::exception& e) {
    throw CliError("io", e.what());
  }
}

models::Model load_model(const RunConfig& config) {
  const std::string path = config.checkpoint_path();
  if (!fs::exists(path)) throw CliError("io", "missing checkpoint " + path);
  try {
    return load_checkpoint(path);
  } catch (const std::exception& e) {
    throw CliError("schema", e.what());
  }
}

// Validation subset in original dataset order, so that dialogs stay
// chronological for decoding.
data::Dataset eval_subset(const RunConfig& config, const data::Dataset& all) {
  if (config.eval_split == "all") return all;
  const auto split = training::stratified_split(all, config.val_fraction, config.seed);
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < all.size(); ++i) position[all[i].utterance_id] = i;
  data::Dataset val = split.val;
  std::sort(val.begin(), val.end(), [&](const data::Utterance& a, const data::Utterance& b) {
    return position.at(a.utterance_id) < position.at(b.utterance_id);
  });
  return val;
}

ojson metrics_json(const training::ConfusionMatrix& cm) {
  const auto ua = training::unweighted_accuracy(cm);
  ojson confusion = ojson::array();
  for (const auto& row : cm.counts) confusion.push_back(row);
  return ojson{{"wa", training::weighted_accuracy(cm)},
               {"ua", ua.value},
               {"ser", training::sentence_error_rate(cm)},
               {"confusion", confusion},
               {"ua_warnings", ua.warnings}};
}

}  // namespace

void cmd_synth(const RunConfig& config) {
  log_resolved(config, "synth");
  data::Dataset ds;
  try {
    ds = data::generate_synthetic(config.synth, config.synth_dialogs);
  } catch (const std::invalid_argument& e) {
    throw CliError("config", e.what());
  }
  ensure_dir(config.paths.out_dir);
  try {
    data::write_dataset(ds, config.paths.out_dir);
  } catch (const std::exception& e) {
    throw CliError("io", e.what());
  }
  write_provenance(config, "synth");
  log().info("synth: wrote {} utterances to {}", ds.size(), config.paths.out_dir);
}

void cmd_train(const RunConfig& config) {
  log_resolved(config, "train");
  const data::Dataset all = load_data(config);
  const auto split = training::stratified_split(all, config.val_fraction, config.seed);
  log().info("train: {} train / {} val utterances", split.train.size(), split.val.size());

  models::Model model = models::build_model(config.model);
  const auto log_epoch = [](const training::EpochRecord& tr, const training::EpochRecord& va) {
    log().info("epoch {:3d}  train loss {:.4f} wa {:.4f}  val loss {:.4f} wa {:.4f} ua {:.4f}",
               tr.epoch, tr.loss, tr.wa, va.loss, va.wa, va.ua);
    return true;
  };
  training::TrainingLog history;
  try {
    history = training::train(model, split.train, split.val, config.train_config(), log_epoch);
  } catch (const std::invalid_argument& e) {
    throw CliError("config", e.what());
  } catch (const std::runtime_error& e) {
    throw CliError("runtime", e.what());
  }

  const std::string hash = config_hash(config);
  ensure_dir(config.paths.out_dir);
  // Paths are left out so that reruns into another directory are identical.
  nlohmann::json settings = nlohmann::json::parse(to_json(config).dump());
  settings.erase("paths");
  const nlohmann::json provenance{{"config_hash", hash}, {"config", settings}};
  const fs::path ckpt = fs::path(config.paths.out_dir) / "model.ckpt";
  save_checkpoint(model, ckpt, provenance);
  open_out(fs::path(config.paths.out_dir) / "train_log.jsonl") << history.to_jsonl(hash);
  write_provenance(config, "train");
  log().info("train: wrote {}", ckpt.string());
}

void cmd_eval(const RunConfig& config) {
  log_resolved(config, "eval");
  const models::Model model = load_model(config);
  const data::Dataset subset = eval_subset(config, load_data(config));
  training::TrainConfig tc = config.train_config();
  training::Evaluation result;
  try {
    result = training::evaluate(model, subset, tc);
  } catch (const std::invalid_argument& e) {
    throw CliError("schema", e.what());
  }

  const std::string hash = config_hash(config);
  ojson metrics = metrics_json(result.confusion);
  metrics["loss"] = result.loss;
  metrics["num_utterances"] = subset.size();
  metrics["split"] = config.eval_split;
  metrics["config_hash"] = hash;
  for (const auto& w : metrics["ua_warnings"]) log().warn("eval: {}", w.get<std::string>());

  std::vector<ded::DialogPosteriors> dialogs;
  for (const auto& [dialog_id, indices] : data::group_by_dialog(subset)) {
    ded::DialogPosteriors dp;
    dp.dialog_id = dialog_id;
    for (std::size_t i : indices) {
      dp.utterance_ids.push_back(subset[i].utterance_id);
      dp.rows.push_back(result.posteriors[i]);
      dp.gold.push_back(subset[i].label);
    }
    dialogs.push_back(std::move(dp));
  }

  ensure_dir(config.paths.out_dir);
  write_json(fs::path(config.paths.out_dir) / "metrics.json", metrics);
  auto post = open_out(fs::path(config.paths.out_dir) / "posteriors.jsonl");
  ded::write_posteriors_jsonl(post, dialogs, hash);
  write_provenance(config, "eval");
  log().info("eval: wa {:.4f} ua {:.4f} ser {:.4f} on {} utterances",
             metrics["wa"].get<double>(), metrics["ua"].get<double>(),
             metrics["ser"].get<double>(), subset.size());
}

void cmd_decode(const RunConfig& config) {
  log_resolved(config, "decode");
  const std::string in_path = config.posteriors_path();
  std::ifstream in(in_path);
  if (!in) throw CliError("io", "cannot open posteriors " + in_path);
  std::vector<ded::DialogPosteriors> dialogs;
  try {
    dialogs = ded::read_posteriors_jsonl(in);
  } catch (const std::invalid_argument& e) {
    throw CliError("schema", in_path + ": " + e.what());
  }

  std::vector<ded::DecodedDialog> decoded;
  decoded.reserve(dialogs.size());
  training::ConfusionMatrix raw, after;
  bool have_gold = !dialogs.empty();
  for (const auto& dp : dialogs) {
    decoded.push_back(ded::decode(dp, config.ded));
    if (dp.gold.empty()) {
      have_gold = false;
      continue;
    }
    for (std::size_t t = 0; t < dp.rows.size(); ++t) {
      raw.add(dp.gold[t], models::predict(dp.rows[t]));
      after.add(dp.gold[t], decoded.back().labels[t]);
    }
  }

  const std::string hash = config_hash(config);
  ensure_dir(config.paths.out_dir);
  auto out = open_out(fs::path(config.paths.out_dir) / "decoded.jsonl");
  ded::write_decoded_jsonl(out, dialogs, decoded, hash);
  write_provenance(config, "decode");
  if (have_gold) {
    const ojson metrics{{"raw", metrics_json(raw)},
                        {"ded", metrics_json(after)},
                        {"num_dialogs", dialogs.size()},
                        {"config_hash", hash}};
    write_json(fs::path(config.paths.out_dir) / "decode_metrics.json", metrics);
    log().info("decode: wa {:.4f} -> {:.4f}", metrics["raw"]["wa"].get<double>(),
               metrics["ded"]["wa"].get<double>());
  }
  log().info("decode: {} dialogs", dialogs.size());
}

void cmd_inspect_filters(const RunConfig& config) {
  log_resolved(config, "inspect-filters");
  const models::Model model = load_model(config);
  if (!model.config().is_sinc()) {
    throw CliError("schema", "inspect-filters needs a sinc checkpoint, got " +
                                 models::to_string(model.config().acoustic_variant));
  }
  const layers::SincBank bank = model.sinc_bank();
  const layers::ConvKernelBank kernels = model.frontend_kernels();
  const std::string hash = config_hash(config);
  const fs::path dir = config.paths.out_dir;
  ensure_dir(dir);

  // Headers are fixed; the config hash and band energies go to the sidecar
  // provenance.json.
  auto table = open_out(dir / "filters.csv");
  table << "filter_index,f1_hz,f2_hz\n";
  table.precision(17);
  const std::size_t length = kernels.length();
  const double fs_hz = model.config().sample_rate;
  std::vector<double> band_energy;
  for (std::size_t f = 0; f < bank.num_filters(); ++f) {
    const auto cut = dsp::constrain_cutoffs(bank.filters[f], bank.limits);
    const auto coeffs = kernels.weights.span().subspan(f * length, length);
    const auto mag = dsp::magnitude_response(coeffs, kResponseBins);
    band_energy.push_back(dsp::band_energy_fraction(mag, fs_hz, config.synth.class_bands));
    table << f << ',' << cut.f1 << ',' << cut.f2 << '\n';

    char name[32];
    std::snprintf(name, sizeof name, "filter_%02zu.csv", f);
    auto response = open_out(dir / name);
    response.precision(17);
    response << "freq_hz,magnitude\n";
    for (std::size_t b = 0; b < mag.size(); ++b) {
      response << fs_hz / 2.0 * static_cast<double>(b) / kResponseBins << ',' << mag[b] << '\n';
    }
  }
  write_json(dir / "provenance.json",
             ojson{{"command", "inspect-filters"},
                   {"config_hash", hash},
                   {"checkpoint", config.checkpoint_path()},
                   {"class_band_energy", band_energy},
                   {"config", to_json(config)}});
  log().info("inspect-filters: {} filters written to {}", bank.num_filters(), dir.string());
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  setup_logging(err);
  CLI::App app{"Sinc-convolution speech emotion recognition toolkit", "sincser"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir, checkpoint, in_path, data_dir;
  app.add_option("--config", config_path, "JSON run config");
  app.add_option("--seed", seed, "Seed for every random stream");
  app.add_option("--set", overrides, "Override a config key: section.key=value")
      ->take_all()
      ->allow_extra_args(false);
  app.add_option("--out", out_dir, "Output directory (paths.out_dir)");
  app.add_option("--data", data_dir, "Dataset directory (paths.data_dir)");
  app.add_option("--checkpoint", checkpoint, "Checkpoint file (paths.checkpoint)");
  app.add_option("--in", in_path, "Posterior JSON-lines input (paths.posteriors)");
  app.fallthrough();

  using Command = void (*)(const RunConfig&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands = {
      {"synth", "Generate the synthetic dataset", cmd_synth},
      {"train", "Train a model", cmd_train},
      {"eval", "Evaluate a checkpoint", cmd_eval},
      {"decode", "Dialog emotion decoding over posteriors", cmd_decode},
      {"inspect-filters", "Export learned sinc cutoffs and responses", cmd_inspect_filters},
  };
  std::map<CLI::App*, Command> dispatch;
  for (const auto& [name, help, fn] : commands) dispatch[app.add_subcommand(name, help)] = fn;

  const auto fail = [&](const std::string& kind, const std::string& message) {
    err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
    return kind == "usage" || kind == "config" ? 2 : 1;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (out_dir) overrides.push_back("paths.out_dir=\"" + *out_dir + "\"");
    if (data_dir) overrides.push_back("paths.data_dir=\"" + *data_dir + "\"");
    if (checkpoint) overrides.push_back("paths.checkpoint=\"" + *checkpoint + "\"");
    if (in_path) overrides.push_back("paths.posteriors=\"" + *in_path + "\"");
    const RunConfig config = resolve_config(config_path, overrides, seed);
    for (auto* sub : app.get_subcommands()) dispatch.at(sub)(config);
  } catch (const CliError& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
  return 0;
}

}  // namespace sincser::cli
