// Copyright 2026 The promptopt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptopt/binary_io.hpp"
#include "promptopt/checkpoint.hpp"
#include "promptopt/engine.hpp"
#include "promptopt/cli.hpp"
#include "promptopt/inference.hpp"
#include "test_util.hpp"

namespace promptopt {
namespace {

using testing::TempDir;
using json = nlohmann::json;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "promptopt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string slurp(const std::filesystem::path& p) { return io::read_text_file(p.string()); }

// Pretrained checkpoint plus train/test files in a scratch directory.
class CliFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    save_checkpoint(testing::pretrained_small(), dir / "model.ckpt");
    const char* words[] = {"good", "bad", "fine", "poor", "nice", "dull"};
    std::vector<TextExample> data;
    for (int i = 0; i < 6; ++i) data.push_back({std::string(words[i]) + " => ", i % 2 ? "no" : "yes"});
    write(dir / "train.jsonl", dataset_to_jsonl(data));
    write(dir / "test.jsonl", dataset_to_jsonl(data));
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  std::vector<std::string> optimize_args(const std::string& out) const {
    return {"optimize", "--checkpoint", path("model.ckpt"), "--prompt", "label: ",
            "--train", path("train.jsonl"), "--epochs", "3", "--lr", "0.01",
            "--out", path(out)};
  }

  TempDir dir{"cli"};
};

TEST(Cli, NoSubcommandIsUsageError) {
  const Result r = run_cli({});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
}

TEST(Cli, HelpExitsZero) {
  const Result r = run_cli({"optimize", "--help"});
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_NE(r.out.find("--lr"), std::string::npos);
}

TEST_F(CliFixture, OptimizeWritesArtifactsAndEchoesConfig) {
  const Result r = run_cli(optimize_args("run"));
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("epoch 1 train_loss"), std::string::npos);
  for (const char* f : {"prompt.bin", "report.json", "report.txt", "config.json", "log.txt"})
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
  const json cfg = json::parse(slurp(dir / "run" / "config.json"));
  EXPECT_EQ(cfg["command"], "optimize");
  EXPECT_DOUBLE_EQ(cfg["lr"].get<double>(), 0.01);
  EXPECT_EQ(cfg["epochs"].get<int>(), 3);
  EXPECT_EQ(cfg["patience"].get<int>(), TrainConfig{}.patience);
  const json rep = json::parse(slurp(dir / "run" / "report.json"));
  EXPECT_EQ(rep["train_loss"].size(), rep["val_loss"].size());
}

TEST_F(CliFixture, OptimizeIsByteIdenticalOnRerun) {
  ASSERT_EQ(run_cli(optimize_args("a")).code, cli::kExitOk);
  ASSERT_EQ(run_cli(optimize_args("b")).code, cli::kExitOk);
  EXPECT_EQ(slurp(dir / "a" / "prompt.bin"), slurp(dir / "b" / "prompt.bin"));
  EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
}

TEST_F(CliFixture, ExistingOutputNeedsForce) {
  ASSERT_EQ(run_cli(optimize_args("run")).code, cli::kExitOk);
  const Result again = run_cli(optimize_args("run"));
  EXPECT_EQ(again.code, cli::kExitUsage);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
  auto forced = optimize_args("run");
  forced.push_back("--force");
  EXPECT_EQ(run_cli(forced).code, cli::kExitOk);
}

TEST_F(CliFixture, NonPositiveLearningRateIsRejected) {
  for (const char* lr : {"0", "-0.1"}) {
    auto args = optimize_args(std::string("lr") + lr);
    args[10] = lr;
    const Result r = run_cli(args);
    EXPECT_EQ(r.code, cli::kExitUsage) << lr;
    EXPECT_FALSE(std::filesystem::exists(dir / (std::string("lr") + lr) / "prompt.bin"));
  }
}

TEST_F(CliFixture, DivergenceExitsThreeWithoutArtifact) {
  auto args = optimize_args("div");
  args[10] = "1e308";
  const Result r = run_cli(args);
  EXPECT_EQ(r.code, cli::kExitNumerical) << r.err;
  EXPECT_NE(r.err.find("epoch"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir / "div" / "prompt.bin"));
}

TEST_F(CliFixture, OverlongExampleNamesItsLine) {
  std::string text = slurp(dir / "train.jsonl");
  text += json{{"input", std::string(60, 'a')}, {"target", "yes"}}.dump() + "\n";
  write(dir / "long.jsonl", text);
  auto args = optimize_args("long");
  args[6] = path("long.jsonl");
  const Result r = run_cli(args);
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("line 7"), std::string::npos) << r.err;
}

TEST_F(CliFixture, ConfigFileFillsOptionsAndFlagsWin) {
  write(dir / "cfg.json", json{{"epochs", 2}, {"lr", 0.05}, {"patience", 1}}.dump());
  auto args = optimize_args("cfg");  // sets --lr 0.01 and --epochs 3 on the command line
  args.push_back("--config");
  args.push_back(path("cfg.json"));
  ASSERT_EQ(run_cli(args).code, cli::kExitOk);
  const json cfg = json::parse(slurp(dir / "cfg" / "config.json"));
  EXPECT_DOUBLE_EQ(cfg["lr"].get<double>(), 0.01);
  EXPECT_EQ(cfg["epochs"].get<int>(), 3);
  EXPECT_EQ(cfg["patience"].get<int>(), 1);
}

TEST_F(CliFixture, UnknownConfigKeyIsUsageError) {
  write(dir / "cfg.json", R"({"learning_rate": 0.1})");
  auto args = optimize_args("cfg");
  args.push_back("--config");
  args.push_back(path("cfg.json"));
  EXPECT_EQ(run_cli(args).code, cli::kExitUsage);
}

TEST_F(CliFixture, InputInsideOutputDirIsRejected) {
  auto args = optimize_args("");
  args.back() = dir.path().string();
  args.push_back("--force");
  EXPECT_EQ(run_cli(args).code, cli::kExitUsage);
  EXPECT_TRUE(std::filesystem::exists(dir / "model.ckpt"));
}

TEST_F(CliFixture, EnvironmentRootIsDefaultOutput) {
  auto args = optimize_args("x");
  args.resize(args.size() - 2);
  ::setenv(cli::kOutRootEnv, path("root").c_str(), 1);
  const Result r = run_cli(args);
  ::unsetenv(cli::kOutRootEnv);
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "root" / "optimize-seed0" / "prompt.bin"));
}

TEST_F(CliFixture, MissingFileIsUsageError) {
  auto args = optimize_args("m");
  args[2] = path("absent.ckpt");
  EXPECT_EQ(run_cli(args).code, cli::kExitUsage);
}

TEST_F(CliFixture, PretrainIsDeterministic) {
  write(dir / "corpus.txt", "good => yes\nbad => no\nfine => yes\n");
  auto args = [&](const std::string& out) {
    return std::vector<std::string>{"pretrain", "--corpus", path("corpus.txt"), "--steps", "5",
                                    "--d-model", "8", "--layers", "1", "--heads", "1",
                                    "--d-ff", "16", "--max-seq", "32", "--out", path(out)};
  };
  ASSERT_EQ(run_cli(args("p1")).code, cli::kExitOk);
  ASSERT_EQ(run_cli(args("p2")).code, cli::kExitOk);
  EXPECT_EQ(slurp(dir / "p1" / "model.ckpt"), slurp(dir / "p2" / "model.ckpt"));
  EXPECT_EQ(slurp(dir / "p1" / "pretrain.json"), slurp(dir / "p2" / "pretrain.json"));
}

TEST_F(CliFixture, PretrainMissingCorpusIsUsageError) {
  EXPECT_EQ(run_cli({"pretrain", "--corpus", path("none.txt"), "--out", path("p")}).code,
            cli::kExitUsage);
}

TEST_F(CliFixture, InferThenEntropy) {
  const Result inf = run_cli({"infer", "--checkpoint", path("model.ckpt"), "--prompt", "label: ",
                              "--input", "good => ", "--max-tokens", "5", "--out", path("inf")});
  ASSERT_EQ(inf.code, cli::kExitOk) << inf.err;
  const Result ent = run_cli({"diag", "entropy", "--trace", path("inf/trace.json")});
  ASSERT_EQ(ent.code, cli::kExitOk) << ent.err;
  EXPECT_NE(ent.out.find("bits"), std::string::npos) << ent.out;
}

TEST_F(CliFixture, EntropyOfUniformTraceIsThreeBits) {
  GenerationTrace t;
  t.vocab_size = 8;
  t.tokens = {1, 2, 3, 4};
  t.distributions = Tensor2(4, 8);
  for (double& v : t.distributions.data()) v = 0.125;
  t.chosen_probability.assign(4, 0.125);
  const Vocabulary vocab = Vocabulary::from_alphabet("abcdefg");
  ASSERT_EQ(vocab.size(), 8u);
  save_trace(t, vocab, dir / "trace.json");
  const Result r = run_cli({"diag", "entropy", "--trace", path("trace.json"), "--out", path("e")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const json j = json::parse(slurp(dir / "e" / "entropy.json"));
  EXPECT_NEAR(j["trajectory_bits"].get<double>(), 3.0, 1e-12);
}

TEST_F(CliFixture, EvalReportsAccuracy) {
  const Result r = run_cli({"eval", "--checkpoint", path("model.ckpt"), "--prompt", "label: ",
                            "--test", path("test.jsonl"), "--out", path("ev")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const json j = json::parse(slurp(dir / "ev" / "eval.json"));
  EXPECT_EQ(j["items"].size(), 6u);
}

TEST_F(CliFixture, SweepRowsAreInGridOrder) {
  const Result r = run_cli({"sweep", "--checkpoint", path("model.ckpt"), "--prompt", "label: ",
                            "--train", path("train.jsonl"), "--test", path("test.jsonl"),
                            "--lrs", "0.001,0.01,0.1", "--epochs", "1,2", "--jobs", "2",
                            "--max-tokens", "4", "--out", path("sw")});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  std::istringstream csv(slurp(dir / "sw" / "sweep.csv"));
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "lr,epochs,val_loss,test_accuracy");
  const char* prefixes[] = {"0.001,1,", "0.001,2,", "0.01,1,", "0.01,2,", "0.1,1,", "0.1,2,"};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(lines[i + 1].rfind(prefixes[i], 0), 0u) << lines[i + 1];
}

TEST(Cli, GradcheckPasses) {
  const Result r = run_cli({"gradcheck", "--seeds", "2"});
  EXPECT_EQ(r.code, cli::kExitOk) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(Cli, GradcheckFailsOnImpossibleTolerance) {
  const Result r = run_cli({"gradcheck", "--seeds", "1", "--tolerance", "1e-30"});
  EXPECT_EQ(r.code, cli::kExitNumerical);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

}  // namespace
}  // namespace promptopt
