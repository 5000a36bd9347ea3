#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "softq/checkpoint.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out;
};

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("softq_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliRun run(const std::string& args, const std::string& env = "") {
    const fs::path log = fs::temp_directory_path() / ("softq_cli_test_stdout_" + std::to_string(getpid()) + ".txt");
    const std::string cmd = env + " \"" + std::string(SOFTQ_CLI_PATH) + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

std::string smoke_config() { return std::string(SOFTQ_CONFIG_DIR) + "/smoke.yaml"; }

}  // namespace

TEST(Cli, MissingConfigIsUsageError) {
    EXPECT_EQ(run("train --config /nonexistent/x.yaml").code, 2);
    EXPECT_EQ(run("train").code, 2);
    EXPECT_EQ(run("").code, 2);
}

TEST(Cli, InvalidConfigReportsLine) {
    const fs::path dir = scratch("badcfg");
    std::ofstream(dir / "bad.yaml") << "version: 1\ntrain:\n  alpha: 1\n  colour: red\n";
    const CliRun r = run("train --config " + (dir / "bad.yaml").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("line 4"), std::string::npos) << r.out;
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help").code, 0); }

TEST(Cli, TrainTwiceGivesIdenticalMetrics) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    ASSERT_EQ(run("train -c " + smoke_config() + " --seed 7 -o " + a.string()).code, 0);
    ASSERT_EQ(run("train -c " + smoke_config() + " --seed 7 -o " + b.string()).code, 0);
    const std::string ma = slurp(a / "metrics.csv");
    EXPECT_EQ(ma, slurp(b / "metrics.csv"));
    EXPECT_EQ(ma.substr(0, ma.find('\n')), "epoch,mean_return,mean_disc_return,q_loss,mean_soft_value,seconds");
    EXPECT_EQ(std::count(ma.begin(), ma.end(), '\n'), 3);
    EXPECT_EQ(slurp(a / "final.ckpt"), slurp(b / "final.ckpt"));
    EXPECT_TRUE(fs::exists(a / "checkpoints" / "epoch_000000.ckpt"));
    EXPECT_TRUE(fs::exists(a / "checkpoints" / "epoch_000002.ckpt"));
    EXPECT_TRUE(fs::exists(a / "trajectories.csv"));
    EXPECT_TRUE(fs::exists(a / "config.yaml"));
}

TEST(Cli, DifferentSeedsDiffer) {
    const fs::path a = scratch("seed_a"), b = scratch("seed_b");
    ASSERT_EQ(run("train -c " + smoke_config() + " --seed 1 -o " + a.string()).code, 0);
    ASSERT_EQ(run("train -c " + smoke_config() + " --seed 2 -o " + b.string()).code, 0);
    EXPECT_NE(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
}

TEST(Cli, EnvironmentVariablesOverrideFileAndFlagsOverrideBoth) {
    const fs::path env_dir = scratch("env_dir"), flag_dir = scratch("flag_dir");
    const std::string env = "SOFTQ_OUTPUT_DIR=" + env_dir.string() + " SOFTQ_SEED=7";
    ASSERT_EQ(run("train -c " + smoke_config() + " --epochs 1", env).code, 0);
    EXPECT_NE(slurp(env_dir / "config.yaml").find("seed: 7"), std::string::npos);
    ASSERT_EQ(run("train -c " + smoke_config() + " --epochs 1 --seed 9 -o " + flag_dir.string(), env).code, 0);
    EXPECT_NE(slurp(flag_dir / "config.yaml").find("seed: 9"), std::string::npos);
    EXPECT_EQ(run("train -c " + smoke_config(), "SOFTQ_SEED=abc").code, 2);
}

TEST(Cli, UntrainedCheckpointSpreadsOverGoals) {
    const fs::path dir = scratch("untrained");
    ASSERT_EQ(run("train -c " + smoke_config() + " --epochs 0 -o " + dir.string()).code, 0);
    const CliRun r = run("eval " + (dir / "final.ckpt").string() + " -n 100 -o " + (dir / "eval").string());
    ASSERT_EQ(r.code, 0) << r.out;
    std::ifstream occ(dir / "eval" / "eval_trajectories_occupancy.csv");
    std::string line;
    std::getline(occ, line);
    EXPECT_EQ(line, "goal,x,y,count,fraction");
    int rows = 0;
    while (std::getline(occ, line)) {
        ++rows;
        const double fraction = std::stod(line.substr(line.rfind(',') + 1));
        EXPECT_LE(fraction, 0.9) << line;
    }
    EXPECT_EQ(rows, 4);
}

TEST(Cli, ZeroRolloutsGivesEmptySummary) {
    const fs::path dir = scratch("zero");
    ASSERT_EQ(run("train -c " + smoke_config() + " --epochs 0 -o " + dir.string()).code, 0);
    ASSERT_EQ(run("eval " + (dir / "final.ckpt").string() + " -n 0 -o " + (dir / "eval").string()).code, 0);
    EXPECT_EQ(slurp(dir / "eval" / "eval_trajectories_occupancy.csv"), "goal,x,y,count,fraction\n");
}

TEST(Cli, EvalRejectsMismatchedCheckpoint) {
    const fs::path dir = scratch("mismatch");
    softq::Rng rng(0);
    softq::Checkpoint ckpt;
    ckpt.nets["policy"] = softq::make_mlp(5, {4}, 3, softq::OutputActivation::Tanh, rng);
    softq::save_checkpoint((dir / "odd.ckpt").string(), ckpt);
    EXPECT_EQ(run("eval " + (dir / "odd.ckpt").string() + " -o " + dir.string()).code, 2);
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
    EXPECT_EQ(run("eval " + (dir / "junk.ckpt").string() + " -o " + dir.string()).code, 2);
}

TEST(Cli, ExportReplaysCheckpoints) {
    const fs::path dir = scratch("export");
    ASSERT_EQ(run("train -c " + smoke_config() + " -o " + dir.string()).code, 0);
    ASSERT_EQ(run("export " + dir.string() + " -n 5").code, 0);
    EXPECT_EQ(slurp(dir / "export" / "metrics.csv"), slurp(dir / "metrics.csv"));
    const std::string summary = slurp(dir / "export" / "occupancy_by_epoch.csv");
    EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 4);
    EXPECT_TRUE(fs::exists(dir / "export" / "epoch_000001.csv"));
}

TEST(Cli, OracleCheck) {
    const CliRun ok = run("oracle-check --seed 3 --sizes 1x1,3x2 --per-size 2");
    EXPECT_EQ(ok.code, 0) << ok.out;
    EXPECT_EQ(run("oracle-check --sizes 3y2").code, 2);
    EXPECT_EQ(run("oracle-check --sizes 0x2").code, 2);
    EXPECT_EQ(run("oracle-check --per-size 0").code, 2);
}
