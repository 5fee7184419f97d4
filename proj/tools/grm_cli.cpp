/* Copyright 2026 The GRM Authors. All Rights Reserved.

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

// grm: data generation, training, evaluation and spectrum diagnostics for
// gradient-rectified metric learning.
//
//   grm gen-data --out data.grmd [--places 200 --per-place 20 --dim 32 ...]
//   grm train    --data data.grmd --out-dir run/ [--grm on --s 1 ...]
//   grm eval     --checkpoint run/model.grmm --data data.grmd [--n 1,5,10]
//   grm diagnose --checkpoint-a A --checkpoint-b B --data D --out-dir out/
//   grm diagnose --log-dir run/ --out-dir out/ [--epoch-a 1 --epoch-b 50]
//
// Every subcommand accepts --config FILE with key=value lines named after its
// long flags; flags given on the command line win over the file. Keys with a
// "meta." prefix are ignored, so a training manifest can be fed back as a
// config file.
//
// Exit codes: 0 success, 2 invalid arguments, 3 runtime or numerical failure.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "grm/grm.hpp"

#ifndef GRM_VERSION
#define GRM_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::size_t> parse_size_list(const std::string& s, bool allow_empty) {
  std::vector<std::size_t> out;
  if (s.empty() || s == "none") {
    if (!allow_empty) throw UsageError("empty list");
    return out;
  }
  for (auto part : grm::io::split(s, ',')) {
    const double v = grm::io::parse_double(part);
    if (!(v >= 1.0) || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw UsageError("expected positive integers, got '" + std::string(part) + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// Splices `--key=value` tokens from the --config file into argv for every
// key the command line does not already set.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string config_path;
  std::set<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    const std::string key = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    given.insert(key);
    if (key == "config") config_path = eq != std::string::npos ? a.substr(eq + 1) : (i + 1 < args.size() ? args[i + 1] : "");
  }
  if (config_path.empty()) return args;

  for (const auto& [key, value] : grm::io::load_key_values(config_path)) {
    if (key.rfind("meta.", 0) == 0 || key == "config" || given.count(key)) continue;
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

// ---------------------------------------------------------------------------

struct GenDataOptions {
  std::uint32_t places = 200, per_place = 20, dim = 32;
  double anisotropy = 100.0, noise = grm::kDefaultPlaceNoise;
  std::uint64_t seed = 7;
  std::string out;
};

int run_gen_data(const GenDataOptions& o) {
  const auto ds = grm::gen_synthetic_retrieval(o.places, o.per_place, o.dim, o.anisotropy, o.seed, o.noise);
  grm::io::save_dataset(o.out, ds);
  std::cout << "wrote " << ds.size() << " samples (" << ds.query_indices().size() << " queries) to " << o.out << "\n";
  return kExitOk;
}

struct TrainOptions {
  std::string data, out_dir, grm = "on", estimator = "queue", loss = "contrastive", optimizer = "adam";
  std::string hidden = "64";
  double s = 1.0, jitter = grm::kDefaultJitter, lr = 1e-4, momentum = 0.9, margin = 1.0, temperature = 1.0;
  double decay_factor = 1.0;
  std::size_t queue_size = grm::kDefaultQueueCapacity, refresh = 1, epochs = 50, descriptor_dim = 32;
  std::size_t queries_per_batch = 16, negatives = 5, steps_per_epoch = 0, decay_every = 0;
  std::uint64_t seed = 7;
  bool normalize = false;
};

grm::TrainConfig to_train_config(const TrainOptions& o) {
  grm::TrainConfig c;
  c.hidden_sizes = parse_size_list(o.hidden, true);
  c.descriptor_dim = o.descriptor_dim;
  c.loss = grm::parse_loss(o.loss);
  c.margin = o.margin;
  c.temperature = o.temperature;
  c.normalize_descriptors = o.normalize;
  c.grm_enabled = o.grm == "on";
  c.grm.rectification_rate = o.s;
  c.grm.jitter = o.jitter;
  c.grm.queue_capacity = o.queue_size;
  c.grm.estimator = grm::parse_estimator(o.estimator);
  c.grm.refresh_period = o.refresh;
  c.optimizer.kind = grm::parse_optimizer(o.optimizer);
  c.optimizer.learning_rate = o.lr;
  c.optimizer.momentum = o.momentum;
  c.optimizer.decay_factor = o.decay_factor;
  c.optimizer.decay_every = o.decay_every;
  c.epochs = o.epochs;
  c.queries_per_batch = o.queries_per_batch;
  c.negatives_per_query = o.negatives;
  c.steps_per_epoch = o.steps_per_epoch;
  c.seed = o.seed;
  c.validate();
  return c;
}

std::vector<std::pair<std::string, std::string>> manifest_of(const TrainOptions& o) {
  using grm::io::format_double;
  return {{"data", o.data},
          {"out-dir", o.out_dir},
          {"grm", o.grm},
          {"s", format_double(o.s)},
          {"jitter", format_double(o.jitter)},
          {"queue-size", std::to_string(o.queue_size)},
          {"estimator", o.estimator},
          {"refresh", std::to_string(o.refresh)},
          {"loss", o.loss},
          {"margin", format_double(o.margin)},
          {"temperature", format_double(o.temperature)},
          {"normalize", o.normalize ? "true" : "false"},
          {"hidden", o.hidden},
          {"descriptor-dim", std::to_string(o.descriptor_dim)},
          {"optimizer", o.optimizer},
          {"lr", format_double(o.lr)},
          {"momentum", format_double(o.momentum)},
          {"decay-factor", format_double(o.decay_factor)},
          {"decay-every", std::to_string(o.decay_every)},
          {"epochs", std::to_string(o.epochs)},
          {"queries-per-batch", std::to_string(o.queries_per_batch)},
          {"negatives", std::to_string(o.negatives)},
          {"steps-per-epoch", std::to_string(o.steps_per_epoch)},
          {"seed", std::to_string(o.seed)}};
}

std::string epoch_stem(std::size_t epoch) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", epoch);
  return buf;
}

void save_snapshots(const fs::path& dir, const std::vector<grm::EpochRecord>& log) {
  fs::create_directories(dir);
  for (const auto& r : log) {
    const std::string stem = (dir / epoch_stem(r.epoch)).string();
    grm::io::save_vector(stem + "_desc_eigs.csv", r.descriptors.eigenvalues);
    grm::io::save_matrix(stem + "_desc_basis.csv", r.descriptors.basis);
    grm::io::save_vector(stem + "_grad_eigs.csv", r.gradients.eigenvalues);
    grm::io::save_matrix(stem + "_grad_basis.csv", r.gradients.basis);
  }
}

int run_train(const TrainOptions& o) {
  const grm::TrainConfig config = to_train_config(o);
  const auto data = grm::io::load_dataset(o.data);
  const fs::path out(o.out_dir);
  fs::create_directories(out);
  const std::string manifest_path = (out / "manifest.txt").string();
  const std::string checkpoint_path = (out / "model.grmm").string();
  const std::string log_path = (out / "log.csv").string();

  auto manifest = manifest_of(o);
  manifest.emplace_back("meta.version", GRM_VERSION);
  manifest.emplace_back("meta.start", utc_now());
  manifest.emplace_back("meta.status", "running");
  grm::io::save_key_values(manifest_path, manifest);

  grm::TrainResult result;
  try {
    result = grm::train(config, data);
  } catch (const grm::TrainingAborted& e) {
    grm::io::save_checkpoint(checkpoint_path, e.last_good());
    manifest.back().second = "aborted";
    manifest.emplace_back("meta.end", utc_now());
    manifest.emplace_back("meta.last-good-epoch", std::to_string(e.epoch()));
    manifest.emplace_back("meta.checkpoint", checkpoint_path);
    grm::io::save_key_values(manifest_path, manifest);
    throw;
  }

  grm::io::save_checkpoint(checkpoint_path, result.encoder);
  grm::io::save_log(log_path, result.log);
  save_snapshots(out / "epochs", result.log);
  manifest.back().second = "complete";
  manifest.emplace_back("meta.end", utc_now());
  manifest.emplace_back("meta.checkpoint", checkpoint_path);
  manifest.emplace_back("meta.log", log_path);
  manifest.emplace_back("meta.snapshots", (out / "epochs").string());
  manifest.emplace_back("meta.projection-rebuilds", std::to_string(result.projection_rebuilds));
  grm::io::save_key_values(manifest_path, manifest);

  const auto& last = result.log.back();
  std::cout << "epoch " << last.epoch << " loss " << last.loss << " desc_cond " << last.desc_cond << " recall@1 "
            << last.recall1 << "\n";
  return kExitOk;
}

struct EvalOptions {
  std::string checkpoint, data, n = "1,5,10", out;
  bool normalize = false;
};

int run_eval(const EvalOptions& o) {
  const auto n_values = parse_size_list(o.n, false);
  const auto enc = grm::io::load_checkpoint(o.checkpoint);
  const auto data = grm::io::load_dataset(o.data);
  if (enc.input_dim() != data.dim) throw UsageError("checkpoint input dimension differs from dataset dimension");
  const auto report = grm::evaluate_retrieval(enc, data, n_values, o.normalize);

  std::string csv = "n,recall\n";
  for (auto n : n_values) csv += std::to_string(n) + "," + grm::io::format_double(report.recall_at.at(n)) + "\n";
  std::cout << csv << "desc_cond " << report.condition_number << "\n";
  if (!o.out.empty()) grm::io::detail::spill(o.out, csv);
  return kExitOk;
}

struct DiagnoseOptions {
  std::string checkpoint_a, checkpoint_b, data, log_dir, out_dir, loss = "contrastive";
  std::size_t epoch_a = 1, epoch_b = 0, top_k = 8;
  double margin = 1.0;
  std::uint64_t seed = 7;
};

void emit_diagnostics(const fs::path& out, const grm::SpectrumReport& desc_a, const grm::SpectrumReport& desc_b,
                      const grm::SpectrumReport& grad_b, std::size_t top_k) {
  fs::create_directories(out);
  const auto dd = grm::alignment_matrix(desc_a.basis, desc_b.basis);
  const auto dg = grm::alignment_matrix(desc_b.basis, grad_b.basis);
  grm::io::save_vector((out / "desc_eigs_a.csv").string(), desc_a.eigenvalues);
  grm::io::save_vector((out / "desc_eigs_b.csv").string(), desc_b.eigenvalues);
  grm::io::save_vector((out / "grad_eigs_b.csv").string(), grad_b.eigenvalues);
  grm::io::save_matrix((out / "align_desc_a_b.csv").string(), dd.entries);
  grm::io::save_matrix((out / "align_desc_grad_b.csv").string(), dg.entries);
  const std::size_t k = std::min(top_k, dd.dim());
  std::cout << "diagonal_mass desc(a,b) " << grm::diagonal_mass(dd, k) << "\n"
            << "diagonal_mass desc-grad(b) " << grm::diagonal_mass(dg, k) << "\n";
}

grm::SpectrumReport load_snapshot(const fs::path& dir, std::size_t epoch, const std::string& kind) {
  const std::string stem = (dir / "epochs" / epoch_stem(epoch)).string() + "_" + kind;
  if (!fs::exists(stem + "_eigs.csv") || !fs::exists(stem + "_basis.csv"))
    throw grm::IoError("missing snapshot for epoch " + std::to_string(epoch) + " in " + dir.string());
  grm::SpectrumReport r;
  r.eigenvalues = grm::io::load_vector(stem + "_eigs.csv");
  r.basis = grm::io::load_matrix(stem + "_basis.csv");
  r.condition_number = r.eigenvalues.front() / std::max(r.eigenvalues.back(), 1e-300);
  return r;
}

int run_diagnose(const DiagnoseOptions& o) {
  const bool from_log = !o.log_dir.empty();
  const bool from_checkpoints = !o.checkpoint_a.empty() || !o.checkpoint_b.empty();
  if (from_log == from_checkpoints) throw UsageError("give either --log-dir or --checkpoint-a/--checkpoint-b");

  if (from_log) {
    std::size_t epoch_b = o.epoch_b;
    if (epoch_b == 0) epoch_b = grm::io::load_log((fs::path(o.log_dir) / "log.csv").string()).size();
    if (epoch_b == 0) throw grm::IoError("empty training log in " + o.log_dir);
    emit_diagnostics(o.out_dir, load_snapshot(o.log_dir, o.epoch_a, "desc"), load_snapshot(o.log_dir, epoch_b, "desc"),
                     load_snapshot(o.log_dir, epoch_b, "grad"), o.top_k);
    return kExitOk;
  }

  if (o.checkpoint_a.empty() || o.checkpoint_b.empty() || o.data.empty())
    throw UsageError("--checkpoint-a, --checkpoint-b and --data are required together");
  const auto a = grm::io::load_checkpoint(o.checkpoint_a);
  const auto b = grm::io::load_checkpoint(o.checkpoint_b);
  const auto data = grm::io::load_dataset(o.data);
  if (a.input_dim() != data.dim || b.input_dim() != data.dim || a.output_dim() != b.output_dim())
    throw UsageError("checkpoint and dataset dimensions do not match");
  const auto db = data.rows(data.database_indices());
  grm::TrainConfig probe;
  probe.loss = grm::parse_loss(o.loss);
  probe.margin = o.margin;
  probe.seed = o.seed;
  probe.descriptor_dim = b.output_dim();
  emit_diagnostics(o.out_dir, grm::spectrum_report(grm::mlp_encode(a, db)), grm::spectrum_report(grm::mlp_encode(b, db)),
                   grm::spectrum_report(grm::sample_descriptor_gradients(b, data, probe)), o.top_k);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-rectified metric learning at desk scale"};
  app.set_version_flag("--version", GRM_VERSION);
  app.require_subcommand(1);
  std::string config_file;

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic place-recognition dataset");
  gen_cmd->add_option("--config", config_file, "key=value defaults");
  gen_cmd->add_option("--places", gen.places, "Number of places")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--per-place", gen.per_place, "Samples per place")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--dim", gen.dim, "Input dimension")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--anisotropy", gen.anisotropy, "Largest/smallest center-spread variance ratio")
      ->check(CLI::Range(1.0, 1e12));
  gen_cmd->add_option("--noise", gen.noise, "Within-place spread relative to the center spread")
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", gen.seed, "RNG seed");
  gen_cmd->add_option("--out", gen.out, "Output dataset file")->required();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train an encoder, optionally with gradient rectification");
  train_cmd->add_option("--config", config_file, "key=value defaults (a previous manifest works)");
  train_cmd->add_option("--data", tr.data, "Dataset file")->required();
  train_cmd->add_option("--out-dir", tr.out_dir, "Directory for checkpoint, log, manifest, snapshots")->required();
  train_cmd->add_option("--grm", tr.grm, "Gradient rectification")->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--s", tr.s, "Rectification rate")->check(CLI::Range(0.0, 2.0));
  train_cmd->add_option("--jitter", tr.jitter, "Diagonal jitter")->check(CLI::PositiveNumber);
  train_cmd->add_option("--queue-size", tr.queue_size, "Memory queue capacity K")->check(CLI::Range(2, 1 << 26));
  train_cmd->add_option("--estimator", tr.estimator, "Covariance estimator")
      ->check(CLI::IsMember({"queue", "avg"}));
  train_cmd->add_option("--refresh", tr.refresh, "Steps between projection rebuilds")->check(CLI::PositiveNumber);
  train_cmd->add_option("--loss", tr.loss, "Training loss")
      ->check(CLI::IsMember({"contrastive", "triplet", "prototype"}));
  train_cmd->add_option("--margin", tr.margin, "Contrastive/triplet margin")->check(CLI::PositiveNumber);
  train_cmd->add_option("--temperature", tr.temperature, "Prototype loss temperature")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--normalize", tr.normalize, "L2-normalize descriptors before the loss");
  train_cmd->add_option("--hidden", tr.hidden, "Hidden layer sizes, comma separated, or 'none'");
  train_cmd->add_option("--descriptor-dim", tr.descriptor_dim, "Descriptor dimension C")->check(CLI::PositiveNumber);
  train_cmd->add_option("--optimizer", tr.optimizer, "Optimizer")->check(CLI::IsMember({"sgd", "momentum", "adam"}));
  train_cmd->add_option("--lr", tr.lr, "Learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--momentum", tr.momentum, "Momentum / Adam beta1")->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--decay-factor", tr.decay_factor, "Step-decay multiplier")->check(CLI::PositiveNumber);
  train_cmd->add_option("--decay-every", tr.decay_every, "Epochs between decays (0: none)");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--queries-per-batch", tr.queries_per_batch, "Queries per batch")->check(CLI::PositiveNumber);
  train_cmd->add_option("--negatives", tr.negatives, "Negatives per query")->check(CLI::PositiveNumber);
  train_cmd->add_option("--steps-per-epoch", tr.steps_per_epoch, "Steps per epoch (0: one pass)");
  train_cmd->add_option("--seed", tr.seed, "Training seed");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Recall@N of a checkpoint on the query split");
  eval_cmd->add_option("--config", config_file, "key=value defaults");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset file")->required();
  eval_cmd->add_option("--n", ev.n, "Comma-separated N values");
  eval_cmd->add_option("--out", ev.out, "Write the recall CSV here");
  eval_cmd->add_flag("--normalize", ev.normalize, "L2-normalize descriptors");

  DiagnoseOptions dg;
  auto* diag_cmd = app.add_subcommand("diagnose", "Spectra and eigenbasis alignment matrices");
  diag_cmd->add_option("--config", config_file, "key=value defaults");
  diag_cmd->add_option("--checkpoint-a", dg.checkpoint_a, "Earlier checkpoint");
  diag_cmd->add_option("--checkpoint-b", dg.checkpoint_b, "Later checkpoint");
  diag_cmd->add_option("--data", dg.data, "Dataset file (checkpoint mode)");
  diag_cmd->add_option("--log-dir", dg.log_dir, "Training output directory (snapshot mode)");
  diag_cmd->add_option("--epoch-a", dg.epoch_a, "Snapshot epoch a")->check(CLI::PositiveNumber);
  diag_cmd->add_option("--epoch-b", dg.epoch_b, "Snapshot epoch b (0: last)");
  diag_cmd->add_option("--out-dir", dg.out_dir, "Output directory")->required();
  diag_cmd->add_option("--top-k", dg.top_k, "Directions in the diagonal-mass summary")->check(CLI::PositiveNumber);
  diag_cmd->add_option("--loss", dg.loss, "Loss for the gradient probe")
      ->check(CLI::IsMember({"contrastive", "triplet", "prototype"}));
  diag_cmd->add_option("--margin", dg.margin, "Margin for the gradient probe")->check(CLI::PositiveNumber);
  diag_cmd->add_option("--seed", dg.seed, "Seed for the gradient probe batches");

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*diag_cmd) return run_diagnose(dg);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const grm::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const grm::DimensionMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
