//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "molfedgan/cli.hpp"

using namespace molfedgan;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(const std::vector<std::string> &args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path()
           / ("molfedgan_cli_" + std::string(::testing::UnitTest::GetInstance()
                                                 ->current_test_info()
                                                 ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const std::string &name, const std::string &extra,
                           const std::string &rounds = "3") {
    const std::string text = std::string("config_version = 1\npreset = esol\n")
                             + "dataset.path = " + MOLFEDGAN_DATA_DIR + "/esol.csv\n"
                             + "generator_dims = [16]\n"
                             + "discriminator_dims = [8,8],8,[8,1]\n"
                             + "num_clients = 2\nepochs_per_round = 1\nrounds = " + rounds + "\n"
                             + "eval_samples = 16\nsnn_sample_size = 50\nseed = 5\n" + extra;
    write_file_atomic(dir_ / name, text);
    return (dir_ / name).string();
  }

  static std::size_t count_lines(const std::string &s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
  }

  static bool has_temp_files(const fs::path &root) {
    for (const auto &e : fs::recursive_directory_iterator(root)) {
      if (e.path().extension() == ".tmp") return true;
    }
    return false;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, TrainWritesRunDirectory) {
  const auto cfg = write_config("toy.cfg", "checkpoint_interval = 2\neval_interval = 2\n");
  const auto r = run({"train", "--config", cfg, "--out", (dir_ / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path run_dir = dir_ / "run";
  EXPECT_EQ(count_lines(read_file(run_dir / "round_log.jsonl")), 3u);
  EXPECT_EQ(count_lines(read_file(run_dir / "gen_loss.tsv")), 4u);
  EXPECT_EQ(read_file(run_dir / "disc_loss.tsv").substr(0, 13), "round\tloss\n1\t");
  for (const char *f : {"effective.cfg", "final_report.json", "final_table.txt", "skipped.tsv",
                        "reports/round_0002.json", "reports/round_0003.json",
                        "checkpoints/round_0002.ckpt", "checkpoints/final.ckpt"}) {
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  }
  EXPECT_FALSE(has_temp_files(run_dir));
  const auto report = nlohmann::json::parse(read_file(run_dir / "final_report.json"));
  EXPECT_EQ(report["round"], 3);
  EXPECT_TRUE(report["qed"].is_null());
  EXPECT_EQ(read_file(run_dir / "final_table.txt").substr(0, table_header().size()),
            table_header());
}

TEST_F(CliTest, DeterministicRunsAreByteIdentical) {
  const auto cfg = write_config("toy.cfg", "");
  for (const char *name : {"a", "b"}) {
    const auto r = run({"train", "--config", cfg, "--deterministic", "--seed", "7", "--out",
                        (dir_ / name).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char *f : {"final_report.json", "final_table.txt", "gen_loss.tsv", "disc_loss.tsv",
                        "checkpoints/final.ckpt"}) {
    EXPECT_EQ(read_file(dir_ / "a" / f), read_file(dir_ / "b" / f)) << f;
  }
  EXPECT_EQ(nlohmann::json::parse(read_file(dir_ / "a" / "final_report.json"))["seed"], 7);
}

TEST_F(CliTest, EffectiveConfigReproducesTheRun) {
  const auto cfg = write_config("toy.cfg", "");
  ASSERT_EQ(run({"train", "--config", cfg, "--out", (dir_ / "a").string()}).code, 0);
  fs::copy_file(dir_ / "a" / "effective.cfg", dir_ / "reloaded.cfg");
  ASSERT_EQ(run({"train", "--config", (dir_ / "reloaded.cfg").string(), "--out",
                 (dir_ / "b").string()})
                .code,
            0);
  EXPECT_EQ(read_file(dir_ / "a" / "final_report.json"),
            read_file(dir_ / "b" / "final_report.json"));
  EXPECT_EQ(read_file(dir_ / "a" / "effective.cfg"), read_file(dir_ / "b" / "effective.cfg"));
}

TEST_F(CliTest, ExitCodes) {
  write_file_atomic(dir_ / "missing.cfg",
                    "config_version = 1\ndataset.path = /no/such/file.csv\n");
  auto r = run({"train", "--config", (dir_ / "missing.cfg").string(), "--out",
                (dir_ / "x").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("/no/such/file.csv"), std::string::npos);
  EXPECT_EQ(count_lines(r.err), 1u);

  write_file_atomic(dir_ / "typo.cfg", "config_version = 1\nnum_clints = 2\n");
  r = run({"train", "--config", (dir_ / "typo.cfg").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("num_clints"), std::string::npos);

  EXPECT_EQ(run({"train", "--config", (dir_ / "absent.cfg").string()}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, EvalAndDumpSamples) {
  const auto cfg = write_config("toy.cfg", "");
  ASSERT_EQ(run({"train", "--config", cfg, "--out", (dir_ / "run").string()}).code, 0);
  const std::string ckpt = (dir_ / "run" / "checkpoints" / "final.ckpt").string();

  const auto e1 = run({"eval", "--checkpoint", ckpt, "--config", cfg, "--samples", "20",
                       "--seed", "3"});
  ASSERT_EQ(e1.code, 0) << e1.err;
  EXPECT_EQ(e1.out.substr(0, table_header().size()), table_header());
  const auto e2 = run({"eval", "--checkpoint", ckpt, "--config", cfg, "--samples", "20",
                       "--seed", "3"});
  EXPECT_EQ(e1.out, e2.out);
  const auto json = nlohmann::json::parse(e1.out.substr(e1.out.find('{')));
  EXPECT_EQ(json["generated"], 20);
  EXPECT_EQ(json["generator_dims"], "[16]");

  const auto empty = run({"eval", "--checkpoint", ckpt, "--config", cfg, "--samples", "0"});
  EXPECT_EQ(empty.code, 0);
  EXPECT_NE(empty.err.find("warning"), std::string::npos);

  const std::string bytes = read_file(ckpt);
  write_file_atomic(dir_ / "trunc.ckpt", bytes.substr(0, bytes.size() / 2));
  const auto bad = run({"eval", "--checkpoint", (dir_ / "trunc.ckpt").string(), "--config", cfg});
  EXPECT_EQ(bad.code, 1);
  EXPECT_THROW(cmd_eval(dir_ / "trunc.ckpt", load_experiment(cfg), 4, 0), CorruptCheckpoint);

  const auto d1 = run({"dump-samples", "--checkpoint", ckpt, "--n", "10", "--seed", "4"});
  ASSERT_EQ(d1.code, 0) << d1.err;
  EXPECT_EQ(count_lines(d1.out), 10u);
  ASSERT_EQ(run({"dump-samples", "--checkpoint", ckpt, "--n", "10", "--seed", "4", "--out",
                 (dir_ / "samples.smi").string()})
                .code,
            0);
  EXPECT_EQ(read_file(dir_ / "samples.smi"), d1.out);
  std::istringstream lines(d1.out);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find(" # invalid") != std::string::npos) continue;
    EXPECT_NO_THROW(parse_smiles(line)) << line;
  }
}

TEST(CliDump, ValidLinesReparseToTheSameMolecule) {
  // A generator biased so most samples are valid: check the valid branch.
  const auto dir = fs::temp_directory_path() / "molfedgan_cli_dump_valid";
  fs::remove_all(dir);
  ModelConfig m;
  m.generator_dims = {8};
  m.noise_dim = 4;
  m.n_max = 4;
  m.discriminator_dims = {{4, 4}, 4, 4};
  auto [gen, disc] = init_models<float>(m, 1);
  save_checkpoint(dir / "g.ckpt", gen, disc);
  const std::string text = cmd_dump_samples(dir / "g.ckpt", 200, 9, 1.0);
  std::istringstream lines(text);
  std::string line;
  std::size_t valid = 0, total = 0;
  while (std::getline(lines, line)) {
    ++total;
    if (line.find(" # invalid") != std::string::npos) continue;
    ++valid;
    EXPECT_EQ(write_smiles(parse_smiles(line)), line);
  }
  EXPECT_EQ(total, 200u);
  EXPECT_GT(valid, 0u);
  fs::remove_all(dir);
}

TEST_F(CliTest, SweepProducesOneRowPerValue) {
  const auto cfg = write_config("sweep.cfg", "sweep.dropout = 0.25, 0.5, 0.75\n", "1");
  const auto r = run({"sweep", "--config", cfg, "--out", (dir_ / "sweep").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, table_header().size()), table_header());
  EXPECT_EQ(count_lines(r.out), 2u + 3u);
  EXPECT_NE(r.out.find("esol dropout=0.25"), std::string::npos);
  EXPECT_EQ(read_file(dir_ / "sweep" / "sweep_table.txt"), r.out);
  EXPECT_TRUE(fs::exists(dir_ / "sweep" / "03-dropout-0.75" / "final_report.json"));
  const auto summary = nlohmann::json::parse(read_file(dir_ / "sweep" / "sweep.json"));
  ASSERT_EQ(summary.size(), 3u);
  EXPECT_DOUBLE_EQ(summary[1]["dropout_disc"].get<double>(), 0.5);

  const auto single = write_config("single.cfg", "sweep.clients = 5\n");
  EXPECT_EQ(run({"sweep", "--config", single}).code, 2);
}

TEST_F(CliTest, ClientSweepRows) {
  const auto cfg = write_config("k.cfg", "sweep.clients = 1, 2\n", "1");
  const auto r = run({"sweep", "--config", cfg, "--out", (dir_ / "k").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 4u);
  EXPECT_TRUE(fs::exists(dir_ / "k" / "01-k1"));
  EXPECT_TRUE(fs::exists(dir_ / "k" / "02-k2"));
}

TEST_F(CliTest, OutputRootFromEnvironment) {
  write_file_atomic(dir_ / "e.cfg", "config_version = 1\ndataset.name = demo\nseed = 4\n");
  const auto cfg = load_experiment(dir_ / "e.cfg");
  ::setenv(kOutputRootEnv, (dir_ / "root").c_str(), 1);
  EXPECT_EQ(resolve_run_dir(cfg, std::nullopt), dir_ / "root" / "demo-seed4");
  ::unsetenv(kOutputRootEnv);
  EXPECT_EQ(resolve_run_dir(cfg, std::nullopt), fs::path("runs") / "demo-seed4");
  EXPECT_EQ(resolve_run_dir(cfg, fs::path("/x")), fs::path("/x"));
}
