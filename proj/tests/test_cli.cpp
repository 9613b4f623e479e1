#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("wmplanlab_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
    // Desk-size run: every stage finishes in well under a second.
    const json cfg = {
        {"out_dir", dir.string()},
        {"workers", 1},
        {"encoder", {{"latent_dim", 16}}},
        {"data", {{"n_traj", 12}, {"traj_len", 20}}},
        {"model", {{"hidden", {16}}}},
        {"train", {{"epochs", 2}, {"batch_size", 32}}},
        {"finetune_adv", {{"epochs", 1}, {"batch_size", 32}}},
        {"finetune_online",
         {{"iterations", 2}, {"horizon", 5}, {"plan_iterations", 10}, {"steps_per_iteration", 2}, {"batch_size", 8}}},
        {"initnet", {{"horizon", 5}, {"hidden", {8}}}},
        {"planners",
         {{"gbp-adam", {{"iterations", 10}, {"horizon", 5}}},
          {"gbp-gd", {{"iterations", 10}, {"horizon", 5}}},
          {"gbp-initnet", {{"iterations", 10}, {"horizon", 5}}},
          {"cem", {{"population", 20}, {"elites", 4}, {"iterations", 3}, {"horizon", 5}}}}},
        {"eval",
         {{"n_tasks", 6},
          {"horizon_gap", 5},
          {"mpc_steps", 2},
          {"task_pool", 10},
          {"planners", {"gbp-adam", "cem"}},
          {"models", {{"baseline", "models/baseline"}, {"awm", "models/awm"}}}}},
        {"gap", {{"n", 4}, {"plan_iterations", 10}}},
        {"landscape", {{"n_tasks", 2}, {"horizon_gap", 5}, {"resolution", 4}, {"anchor_iterations", 5}}}};
    std::ofstream(dir / "small.json") << cfg.dump(2);
  }

  void TearDown() override { fs::remove_all(dir); }

  Outcome run(const std::string& args, const std::string& env = "") const {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = env + " " + std::string(WMPLANLAB_CLI_PATH) + " " + args + " >" + out.string() + " 2>" +
                            err.string();
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  Outcome stage(const std::string& cmd, const std::string& extra = "") const {
    return run(cmd + " --config " + (dir / "small.json").string() + " " + extra);
  }

  void prepare_models() const {
    ASSERT_EQ(stage("gen-data").code, 0);
    ASSERT_EQ(stage("train").code, 0);
    ASSERT_EQ(stage("finetune-adv").code, 0);
  }
};

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
}

TEST_F(Cli, UnknownKeyIsRejectedWithPath) {
  const auto r = stage("gen-data", "--set train.epochz=3");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("train.epochz"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "data"));
  EXPECT_EQ(stage("gen-data", "--set train.epochs=\\\"three\\\"").code, 2);
  EXPECT_EQ(stage("gen-data", "--preset no-such-preset").code, 2);
  EXPECT_EQ(stage("gen-data", "--set data.policy=\\\"teleport\\\"").code, 2);
  EXPECT_EQ(run("gen-data --config " + (dir / "missing.json").string()).code, 2);
}

TEST_F(Cli, GenDataRefusesToOverwriteWithoutForce) {
  ASSERT_EQ(stage("gen-data").code, 0);
  const auto m = json::parse(slurp(dir / "data" / "manifest.json"));
  EXPECT_EQ(m["n_traj"], 12);
  EXPECT_EQ(m["command"], "gen-data");
  EXPECT_EQ(stage("gen-data").code, 2);
  EXPECT_EQ(stage("gen-data", "--force").code, 0);
  EXPECT_EQ(json::parse(slurp(dir / "data" / "manifest.json"))["outputs"], m["outputs"]);
}

TEST_F(Cli, SeedEnvironmentVariableOverridesConfig) {
  ASSERT_EQ(stage("gen-data").code, 0);
  const auto h0 = json::parse(slurp(dir / "data" / "manifest.json"))["outputs"]["dataset_hash"];
  ASSERT_EQ(run("gen-data --force --config " + (dir / "small.json").string(), "WMPLANLAB_SEED=7").code, 0);
  const auto m = json::parse(slurp(dir / "data" / "manifest.json"));
  EXPECT_EQ(m["seed"], 7);
  EXPECT_NE(m["outputs"]["dataset_hash"], h0);
  EXPECT_EQ(run("gen-data --force --config " + (dir / "small.json").string(), "WMPLANLAB_SEED=abc").code, 2);
}

TEST_F(Cli, EvalReportIsByteIdenticalOnRerun) {
  prepare_models();
  ASSERT_EQ(stage("eval").code, 0);
  const auto first = slurp(dir / "reports" / "eval" / "report.json");
  const auto rep = json::parse(first);
  EXPECT_EQ(rep["cells"].size(), 4u);  // 2 models x 2 planners
  fs::remove_all(dir / "reports");
  ASSERT_EQ(stage("eval", "--workers 3").code, 0);
  EXPECT_EQ(slurp(dir / "reports" / "eval" / "report.json"), first);
  EXPECT_TRUE(fs::exists(dir / "reports" / "eval" / "timing.json"));
  EXPECT_TRUE(fs::exists(dir / "reports" / "eval" / "cells.csv"));
}

TEST_F(Cli, EvalMergesCellsAcrossRuns) {
  prepare_models();
  ASSERT_EQ(stage("eval", "--planners gbp-adam --models baseline").code, 0);
  ASSERT_EQ(stage("eval", "--planners cem --models awm").code, 0);
  const auto rep = json::parse(slurp(dir / "reports" / "eval" / "report.json"));
  ASSERT_EQ(rep["cells"].size(), 2u);
  EXPECT_EQ(rep["cells"][0]["model"], "awm");
  EXPECT_EQ(rep["cells"][1]["model"], "baseline");
  EXPECT_EQ(stage("eval", "--models nope").code, 2);
}

TEST_F(Cli, MissingCheckpointFails) {
  ASSERT_EQ(stage("gen-data").code, 0);
  const auto r = stage("eval");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos) << r.err;
}

TEST_F(Cli, ZeroOnlineIterationsCopiesTheModel) {
  prepare_models();
  ASSERT_EQ(stage("finetune-online", "--set finetune_online.iterations=0").code, 0);
  EXPECT_EQ(slurp(dir / "models" / "owm" / "params.bin"), slurp(dir / "models" / "baseline" / "params.bin"));
  ASSERT_EQ(stage("finetune-online").code, 0);
  EXPECT_NE(slurp(dir / "models" / "owm" / "params.bin"), slurp(dir / "models" / "baseline" / "params.bin"));
  const auto m = json::parse(slurp(dir / "models" / "owm" / "corrected" / "manifest.json"));
  EXPECT_EQ(m["provenance"], "corrected");
  EXPECT_EQ(m["n_traj"], 2);
}

TEST_F(Cli, RemainingStagesProduceReports) {
  prepare_models();
  ASSERT_EQ(stage("train-initnet").code, 0);
  ASSERT_EQ(stage("eval", "--planners gbp-initnet --mode open-loop").code, 0);
  EXPECT_EQ(json::parse(slurp(dir / "reports" / "eval" / "report.json"))["mode"], "open-loop");
  ASSERT_EQ(stage("gap").code, 0);
  const auto gap = json::parse(slurp(dir / "reports" / "gap" / "report.json"));
  EXPECT_EQ(gap["per_task_expert"].size(), 4u);
  ASSERT_EQ(stage("landscape").code, 0);
  const auto land = json::parse(slurp(dir / "reports" / "landscape" / "report.json"));
  EXPECT_EQ(land["tasks"].size(), 2u);
  const auto csv = slurp(dir / "reports" / "landscape" / "task_0_baseline.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 17);
}

TEST_F(Cli, EvalRejectsMismatchedEncoder) {
  prepare_models();
  const auto r = stage("eval", "--set encoder.sigma=2.0");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("encoder"), std::string::npos) << r.err;
}
