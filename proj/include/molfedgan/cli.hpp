//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// Command-line front end. Exit codes: 0 success, 1 runtime error,
// 2 configuration or usage error, 3 dataset error.

#pragma once

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "molfedgan/commands.hpp"

namespace molfedgan {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDataset = 3;

namespace detail {

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<std::string> out;
};

inline ExperimentConfig flagged_config(const RunFlags &f) {
  ExperimentConfig cfg = load_experiment(f.config);
  if (f.seed) cfg.fed.seed = *f.seed;
  if (f.deterministic) cfg.fed.deterministic = true;
  return cfg;
}

inline std::optional<std::filesystem::path> out_path(const RunFlags &f) {
  if (!f.out) return std::nullopt;
  return std::filesystem::path(*f.out);
}

inline void add_run_flags(CLI::App *cmd, RunFlags &f) {
  cmd->add_option("--config", f.config, "experiment config file")->required();
  cmd->add_option("--seed", f.seed, "override the config seed");
  cmd->add_flag("--deterministic", f.deterministic, "train clients sequentially");
  cmd->add_option("--out", f.out, "run directory");
}

}  // namespace detail

inline int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"molfedgan: federated molecular GAN simulator"};
  app.require_subcommand(1);

  detail::RunFlags train_flags, sweep_flags;
  auto *train = app.add_subcommand("train", "train one configuration");
  detail::add_run_flags(train, train_flags);
  auto *sweep = app.add_subcommand("sweep", "train once per value of the sweep axis");
  detail::add_run_flags(sweep, sweep_flags);

  std::string eval_ckpt, eval_config;
  std::size_t eval_samples = 256;
  std::uint64_t eval_seed = 0;
  std::optional<std::string> eval_out;
  auto *eval = app.add_subcommand("eval", "score a checkpoint against a dataset");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--config", eval_config, "config naming the dataset")->required();
  eval->add_option("--samples", eval_samples, "number of generated molecules");
  eval->add_option("--seed", eval_seed, "sampling seed");
  eval->add_option("--out", eval_out, "also write the JSON report here");

  std::string dump_ckpt;
  std::optional<std::string> dump_config, dump_out;
  std::size_t dump_n = 10;
  std::uint64_t dump_seed = 0;
  auto *dump = app.add_subcommand("dump-samples", "write generated molecules as SMILES");
  dump->add_option("--checkpoint", dump_ckpt, "checkpoint file")->required();
  dump->add_option("--n", dump_n, "number of molecules");
  dump->add_option("--seed", dump_seed, "sampling seed");
  dump->add_option("--config", dump_config, "config supplying the sampling temperature");
  dump->add_option("--out", dump_out, "output file (default: stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) {
      const auto cfg = detail::flagged_config(train_flags);
      cmd_train(cfg, resolve_run_dir(cfg, detail::out_path(train_flags)), err);
    } else if (*sweep) {
      const auto cfg = detail::flagged_config(sweep_flags);
      sweep_axis(cfg);
      const auto points = cmd_sweep(cfg, resolve_run_dir(cfg, detail::out_path(sweep_flags)), err);
      std::vector<TableRow> rows;
      for (const auto &p : points) rows.push_back(p.row);
      out << render_table(rows);
    } else if (*eval) {
      const auto cfg = load_experiment(eval_config);
      const auto r = cmd_eval(eval_ckpt, cfg, eval_samples, eval_seed);
      const std::string json = report_json(r.report, r.meta).dump(2) + "\n";
      out << r.table << json;
      if (eval_out) write_file_atomic(*eval_out, json);
      for (const auto &w : r.report.warnings) err << "warning: " << w << "\n";
    } else if (*dump) {
      const double temperature =
          dump_config ? load_experiment(*dump_config).fed.train.temperature : 1.0;
      const std::string text = cmd_dump_samples(dump_ckpt, dump_n, dump_seed, temperature);
      if (dump_out) {
        write_file_atomic(*dump_out, text);
      } else {
        out << text;
      }
    }
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MultipleSweepAxes &e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DatasetError &e) {
    err << "dataset error: " << e.what() << "\n";
    return kExitDataset;
  } catch (const EmptyDataset &e) {
    err << "dataset error: " << e.what() << "\n";
    return kExitDataset;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace molfedgan
