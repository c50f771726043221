//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// The train, eval, sweep and dump-samples commands. Every file is written
// through write_file_atomic.

#pragma once

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molfedgan/checkpoint.hpp"
#include "molfedgan/config.hpp"
#include "molfedgan/federation.hpp"
#include "molfedgan/io.hpp"
#include "molfedgan/report.hpp"
#include "molfedgan/smiles.hpp"

namespace molfedgan {

inline constexpr const char *kOutputRootEnv = "MOLFEDGAN_OUT";
inline constexpr const char *kDefaultOutputRoot = "runs";

/// Loads a config file. A relative dataset.path is taken relative to the
/// directory holding the config and stored as an absolute path, so the
/// effective.cfg of a run can be reloaded from anywhere.
inline ExperimentConfig load_experiment(const std::filesystem::path &config_path) {
  ExperimentConfig cfg = load_config(config_path);
  if (!cfg.dataset_path.empty() && cfg.dataset_path.is_relative()) {
    cfg.dataset_path = std::filesystem::absolute(config_path.parent_path() / cfg.dataset_path)
                           .lexically_normal();
  }
  return cfg;
}

/// --out, then output_dir from the config, then <root>/<dataset>-seed<N>
/// where root is $MOLFEDGAN_OUT or "runs".
inline std::filesystem::path resolve_run_dir(const ExperimentConfig &cfg,
                                             const std::optional<std::filesystem::path> &out) {
  if (out) return *out;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  const char *env = std::getenv(kOutputRootEnv);
  const std::filesystem::path root = env && *env ? env : kDefaultOutputRoot;
  return root / (cfg.dataset_name + "-seed" + std::to_string(cfg.fed.seed));
}

inline Dataset load_experiment_dataset(const ExperimentConfig &cfg) {
  if (cfg.dataset_path.empty()) throw ConfigError("dataset.path is not set");
  LoadOptions opts;
  if (!cfg.dataset_column.empty()) opts.column = cfg.dataset_column;
  opts.n_max = cfg.fed.model.n_max;
  return load_dataset(cfg.dataset_path, opts);
}

inline RunMetadata run_metadata(const ExperimentConfig &cfg, std::size_t round) {
  const auto &m = cfg.fed.model;
  return {cfg.dataset_name, m.generator_dims, m.discriminator_dims, cfg.fed.num_clients,
          m.dropout_gen,    m.dropout_disc,   cfg.fed.seed,          round};
}

inline std::string round_tag(std::size_t round) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "round_%04zu", round);
  return buf;
}

inline nlohmann::ordered_json round_log_json(const RoundLog &log) {
  nlohmann::ordered_json j;
  j["round"] = log.round;
  j["generator_loss"] = log.generator_loss;
  j["discriminator_loss"] = log.discriminator_loss;
  auto clients = nlohmann::ordered_json::array();
  for (const auto &c : log.client_losses) {
    nlohmann::ordered_json cj;
    cj["client"] = c.client;
    cj["skipped"] = c.skipped;
    cj["generator_loss"] = c.generator;
    cj["discriminator_loss"] = c.discriminator;
    clients.push_back(std::move(cj));
  }
  j["clients"] = std::move(clients);
  j["warnings"] = log.warnings;
  j["wall_ms"] = log.wall_ms;
  return j;
}

/// Two-column series, one "round<TAB>loss" line per round.
inline std::string loss_series(const std::vector<double> &curve) {
  std::string out = "round\tloss\n";
  char buf[64];
  for (std::size_t r = 0; r < curve.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\n", r + 1, curve[r]);
    out += buf;
  }
  return out;
}

struct TrainSummary {
  std::filesystem::path run_dir;
  RunMetadata meta;
  MetricsReport report;
  std::vector<double> generator_curve;
  std::vector<double> discriminator_curve;
  std::optional<std::size_t> plateau_round;
};

/// Runs one training experiment and fills `run_dir` with:
/// effective.cfg, skipped.tsv, round_log.jsonl, gen_loss.tsv, disc_loss.tsv,
/// reports/round_NNNN.json, checkpoints/, final_report.json, final_table.txt.
inline TrainSummary cmd_train(const ExperimentConfig &cfg, const std::filesystem::path &run_dir,
                              std::ostream &log) {
  namespace fs = std::filesystem;
  const Dataset data = load_experiment_dataset(cfg);
  write_file_atomic(run_dir / "effective.cfg", serialize_config(cfg));
  {
    std::ostringstream skips;
    write_skip_log(data.skipped, skips);
    write_file_atomic(run_dir / "skipped.tsv", skips.str());
  }
  log << "dataset " << cfg.dataset_path.string() << ": " << data.graphs.size() << " molecules ("
      << data.skipped.size() << " skipped of " << data.records_scanned << ")\n";

  std::string round_log;
  const RoundCallback<float> on_round = [&](const FederationState<float> &state,
                                             const RoundLog &rl, const MetricsReport *report) {
    round_log += round_log_json(rl).dump() + "\n";
    write_file_atomic(run_dir / "round_log.jsonl", round_log);
    write_file_atomic(run_dir / "gen_loss.tsv", loss_series(state.generator_curve()));
    write_file_atomic(run_dir / "disc_loss.tsv", loss_series(state.discriminator_curve()));
    if (report) {
      write_file_atomic(run_dir / "reports" / (round_tag(rl.round) + ".json"),
                        report_json(*report, run_metadata(cfg, rl.round)).dump(2) + "\n");
    }
    if (cfg.checkpoint_interval > 0 && rl.round % cfg.checkpoint_interval == 0) {
      save_checkpoint(run_dir / "checkpoints" / (round_tag(rl.round) + ".ckpt"), state.gen,
                      state.disc);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "round %zu/%zu  G %.5f  D %.5f  (%.0f ms)\n", rl.round,
                  cfg.fed.rounds, rl.generator_loss, rl.discriminator_loss, rl.wall_ms);
    log << buf;
    for (const auto &w : rl.warnings) log << "  warning: " << w << "\n";
    log.flush();
  };

  auto result = run_training<float>(cfg.fed, data.graphs, on_round);

  TrainSummary s;
  s.run_dir = run_dir;
  s.meta = run_metadata(cfg, result.state.round);
  if (!result.evaluations.empty()) {
    s.report = result.evaluations.back().report;
  } else {
    // zero rounds: evaluate the initial models
    const auto prepared = prepare_data(data.graphs, cfg.fed);
    Rng rng = derive_rng(cfg.fed.seed, kEvalStream, 0);
    s.report = evaluate_generator(result.state.gen, make_reference(prepared.train, cfg.fed.metrics),
                                  cfg.fed.eval_samples, cfg.fed.train.temperature,
                                  cfg.fed.metrics, rng);
  }
  s.generator_curve = result.state.generator_curve();
  s.discriminator_curve = result.state.discriminator_curve();
  s.plateau_round = result.plateau_round;
  if (round_log.empty()) write_file_atomic(run_dir / "round_log.jsonl", "");

  save_checkpoint(run_dir / "checkpoints" / "final.ckpt", result.state.gen, result.state.disc);
  auto final_json = report_json(s.report, s.meta);
  final_json["plateau_round"] =
      s.plateau_round ? nlohmann::ordered_json(*s.plateau_round) : nlohmann::ordered_json(nullptr);
  write_file_atomic(run_dir / "final_report.json", final_json.dump(2) + "\n");
  write_file_atomic(run_dir / "final_table.txt",
                    render_table({TableRow{cfg.dataset_name, cfg.fed.model.generator_dims,
                                           cfg.fed.model.discriminator_dims, cfg.fed.num_clients,
                                           s.report}}));
  for (const auto &w : s.report.warnings) log << "warning: " << w << "\n";
  log << "run directory: " << fs::path(run_dir).string() << "\n";
  return s;
}

struct EvalResult {
  RunMetadata meta;
  MetricsReport report;
  std::string table;
};

inline Checkpoint load_checkpoint_file(const std::filesystem::path &path) {
  try {
    return load_checkpoint(path);
  } catch (const FileNotFound &) {
    throw Error("checkpoint file not found: " + path.string());
  }
}

/// Hard samples from the checkpointed generator, scored against the
/// training split of the configured dataset.
inline EvalResult cmd_eval(const std::filesystem::path &checkpoint, const ExperimentConfig &cfg,
                           std::size_t n_samples, std::uint64_t seed) {
  const auto [gen, disc] = models_from_checkpoint<float>(load_checkpoint_file(checkpoint));
  const Dataset data = load_experiment_dataset(cfg);
  const PreparedData prepared = prepare_data(data.graphs, cfg.fed);
  Rng rng = derive_rng(seed, kEvalStream, 0);
  EvalResult r;
  r.report = evaluate_generator(gen, make_reference(prepared.train, cfg.fed.metrics), n_samples,
                                cfg.fed.train.temperature, cfg.fed.metrics, rng);
  r.meta = run_metadata(cfg, 0);
  r.meta.generator_dims = gen.hidden_dims;
  r.meta.discriminator_dims = disc.dims;
  r.meta.seed = seed;
  r.table = render_table({TableRow{cfg.dataset_name, gen.hidden_dims, disc.dims,
                                   cfg.fed.num_clients, r.report}});
  return r;
}

/// One SMILES per line; graphs that fail validation get a " # invalid" suffix.
inline std::string cmd_dump_samples(const std::filesystem::path &checkpoint, std::size_t n,
                                    std::uint64_t seed, double temperature) {
  const auto models = models_from_checkpoint<float>(load_checkpoint_file(checkpoint));
  Rng rng = derive_rng(seed, kEvalStream, 0);
  std::string out;
  for (const auto &g : sample_graphs(models.first, n, temperature, rng)) {
    if (is_valid(strip_padding(g))) {
      out += write_smiles(g) + "\n";
    } else {
      out += write_smiles_unchecked(g) + " # invalid\n";
    }
  }
  return out;
}

namespace detail {

inline std::string path_label(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.';
    if (keep) {
      out += c;
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

}  // namespace detail

struct SweepPoint {
  std::string label;
  TableRow row;
  RunMetadata meta;
  std::filesystem::path run_dir;
};

/// One training run per sweep value, all with the same seed, plus a
/// combined sweep_table.txt and sweep.json in `run_dir`.
inline std::vector<SweepPoint> cmd_sweep(const ExperimentConfig &cfg,
                                         const std::filesystem::path &run_dir, std::ostream &log) {
  const SweepAxis axis = sweep_axis(cfg);
  const auto points = expand_sweep(cfg);
  std::vector<SweepPoint> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const ExperimentConfig &p = points[i];
    std::string label, dataset_cell = p.dataset_name;
    if (axis == SweepAxis::DiscriminatorDims) {
      label = "disc-" + format_discriminator_dims(p.fed.model.discriminator_dims);
    } else if (axis == SweepAxis::Clients) {
      label = "k" + std::to_string(p.fed.num_clients);
    } else {
      label = "dropout=" + detail::format_double(p.fed.model.dropout_gen);
      dataset_cell += " " + label;
    }
    char prefix[24];
    std::snprintf(prefix, sizeof prefix, "%02zu-", i + 1);
    const auto dir = run_dir / (prefix + detail::path_label(label));
    log << "sweep point " << i + 1 << "/" << points.size() << ": " << label << "\n";
    ExperimentConfig point = p;
    point.output_dir = dir;
    const TrainSummary s = cmd_train(point, dir, log);
    out.push_back({label,
                   TableRow{dataset_cell, p.fed.model.generator_dims,
                            p.fed.model.discriminator_dims, p.fed.num_clients, s.report},
                   s.meta, dir});
  }
  std::vector<TableRow> rows;
  auto summary = nlohmann::ordered_json::array();
  for (const auto &pt : out) {
    rows.push_back(pt.row);
    auto j = report_json(pt.row.report, pt.meta);
    j["label"] = pt.label;
    summary.push_back(std::move(j));
  }
  write_file_atomic(run_dir / "sweep_table.txt", render_table(rows));
  write_file_atomic(run_dir / "sweep.json", summary.dump(2) + "\n");
  return out;
}

}  // namespace molfedgan
