#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "softq/checkpoint.hpp"
#include "softq/config.hpp"
#include "softq/evaluation.hpp"
#include "softq/multigoal.hpp"
#include "softq/tabular_checks.hpp"
#include "softq/trainer.hpp"

namespace softq::cli {

enum ExitCode : int { kOk = 0, kPropertyFailure = 1, kUsageError = 2, kNumericAbort = 3 };

inline constexpr const char* kOutputDirEnv = "SOFTQ_OUTPUT_DIR";
inline constexpr const char* kSeedEnv = "SOFTQ_SEED";

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<int> n_epochs;
    std::optional<int> epoch_length;
};

inline std::uint64_t parse_seed(const std::string& text, const std::string& where) {
    std::size_t used = 0;
    std::uint64_t value = 0;
    try {
        value = std::stoull(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size() || text.front() == '-')
        throw ConfigError(where + ": seed must be a non-negative integer, got '" + text + "'", 0);
    return value;
}

/// File values, then environment variables, then command-line flags.
inline RunConfig resolve_config(const std::string& path, const Overrides& flags) {
    RunConfig cfg = load_run_config(path);
    if (const char* dir = std::getenv(kOutputDirEnv); dir && *dir) cfg.output_dir = dir;
    if (const char* seed = std::getenv(kSeedEnv); seed && *seed) cfg.train.seed = parse_seed(seed, kSeedEnv);
    if (flags.output_dir) cfg.output_dir = *flags.output_dir;
    if (flags.seed) cfg.train.seed = *flags.seed;
    if (flags.n_epochs) cfg.train.n_epochs = *flags.n_epochs;
    if (flags.epoch_length) cfg.train.epoch_length = *flags.epoch_length;
    cfg.validate();
    return cfg;
}

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline constexpr const char* kMetricsHeader = "epoch,mean_return,mean_disc_return,q_loss,mean_soft_value,seconds";

inline void write_metrics_row(std::ostream& out, const MetricsRow& row) {
    out << row.epoch << ',' << format_double(row.mean_return) << ',' << format_double(row.mean_discounted_return) << ','
        << format_double(row.q_loss) << ',' << format_double(row.mean_soft_value) << ','
        << format_double(row.seconds) << '\n';
}

inline std::string checkpoint_name(std::int64_t epoch) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "epoch_%06lld.ckpt", static_cast<long long>(epoch));
    return buf;
}

inline void write_occupancy(std::ostream& out, const GoalOccupancy& occ, const MultiGoalEnv& env) {
    out << "goal,x,y,count,fraction\n";
    if (occ.rollouts == 0) return;
    for (int g = 0; g < 4; ++g) {
        const auto& p = env.goals()[static_cast<std::size_t>(g)];
        out << g << ',' << format_double(p.x()) << ',' << format_double(p.y()) << ','
            << occ.counts[static_cast<std::size_t>(g)] << ',' << format_double(occ.fraction(g)) << '\n';
    }
}

inline SamplerNetwork policy_from_checkpoint(const Checkpoint& ckpt) {
    const MlpParams& params = ckpt.at("policy");
    if (params.output != OutputActivation::Tanh) throw InvalidInput("checkpoint policy must have a tanh output");
    if (params.input_dim() != MultiGoalEnv::kStateDim + MultiGoalEnv::kActionDim ||
        params.output_dim() != MultiGoalEnv::kActionDim)
        throw InvalidInput("checkpoint policy does not match the multi-goal environment (expects 4 inputs, 2 outputs)");
    return SamplerNetwork::from_params(params, MultiGoalEnv::kStateDim);
}

/// Evaluates `policy` and writes `<stem>.csv` trajectories plus `<stem>_occupancy.csv`.
inline GoalOccupancy write_evaluation(const std::filesystem::path& dir, const std::string& stem,
                                      const SamplerNetwork& policy, const MultiGoalEnv& env, int rollouts,
                                      std::uint64_t seed) {
    Rng rng = substream(seed, "eval");
    const EvaluationResult eval = evaluate_multigoal(policy, env, rollouts, rng);
    std::ofstream traj(dir / (stem + ".csv"));
    write_trajectory_csv(traj, eval.trajectory);
    std::ofstream occ(dir / (stem + "_occupancy.csv"));
    write_occupancy(occ, eval.occupancy, env);
    return eval.occupancy;
}

inline void print_occupancy(std::ostream& out, const GoalOccupancy& occ) {
    out << "occupancy over " << occ.rollouts << " rollouts:";
    for (int g = 0; g < 4; ++g) out << ' ' << occ.counts[static_cast<std::size_t>(g)];
    out << '\n';
}

inline int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.output_dir);
    const fs::path ckpt_dir = dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    {
        std::ofstream echo(dir / "config.yaml");
        echo << serialize_run_config(cfg);
    }
    std::ofstream metrics(dir / "metrics.csv");
    metrics << kMetricsHeader << '\n';

    MultiGoalEnv env(cfg.multigoal);
    auto observer = [&](const MetricsRow* row, const Checkpoint* ckpt) {
        if (row) {
            write_metrics_row(metrics, *row);
            metrics.flush();
            out << "epoch " << row->epoch << " return " << row->mean_return << " q_loss " << row->q_loss << '\n';
        }
        if (ckpt) save_checkpoint((ckpt_dir / checkpoint_name(ckpt->epoch)).string(), *ckpt);
    };

    TrainResult result;
    try {
        result = train(cfg.train, env, observer);
    } catch (const TrainingDiverged& e) {
        const fs::path dump = dir / "diverged_last_good.ckpt";
        save_checkpoint(dump.string(), e.last_good_state);
        err << "numeric abort: " << e.what() << "\nlast finite state written to " << dump.string() << '\n';
        return kNumericAbort;
    }

    const Checkpoint& final_ckpt = result.checkpoints.back();
    save_checkpoint((dir / "final.ckpt").string(), final_ckpt);
    const GoalOccupancy occ = write_evaluation(dir, "trajectories", policy_from_checkpoint(final_ckpt), env,
                                               cfg.eval_rollouts, cfg.train.seed);
    print_occupancy(out, occ);
    return kOk;
}

inline int cmd_eval(const std::string& checkpoint_path, const RunConfig& cfg, int n_rollouts,
                    const std::string& output_dir, std::ostream& out) {
    require(n_rollouts >= 0, "rollout count must be non-negative");
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const SamplerNetwork policy = policy_from_checkpoint(ckpt);
    std::filesystem::create_directories(output_dir);
    const GoalOccupancy occ =
        write_evaluation(output_dir, "eval_trajectories", policy, MultiGoalEnv(cfg.multigoal), n_rollouts, cfg.train.seed);
    print_occupancy(out, occ);
    return kOk;
}

/// Re-evaluates every checkpoint of a finished run into `<run>/export/`.
inline int cmd_export(const std::string& run_dir, std::optional<int> n_rollouts, std::ostream& out) {
    namespace fs = std::filesystem;
    const fs::path dir(run_dir);
    const RunConfig cfg = load_run_config((dir / "config.yaml").string());
    const int rollouts = n_rollouts.value_or(cfg.eval_rollouts);
    require(rollouts >= 0, "rollout count must be non-negative");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir / "checkpoints"))
        if (entry.path().extension() == ".ckpt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    const fs::path export_dir = dir / "export";
    fs::create_directories(export_dir);
    const MultiGoalEnv env(cfg.multigoal);
    std::ofstream summary(export_dir / "occupancy_by_epoch.csv");
    summary << "epoch,goal0,goal1,goal2,goal3\n";
    for (const auto& file : files) {
        const Checkpoint ckpt = load_checkpoint(file.string());
        const GoalOccupancy occ = write_evaluation(export_dir, file.stem().string(), policy_from_checkpoint(ckpt), env,
                                                   rollouts, cfg.train.seed);
        summary << ckpt.epoch;
        for (int c : occ.counts) summary << ',' << c;
        summary << '\n';
        out << file.filename().string() << ": ";
        print_occupancy(out, occ);
    }
    fs::copy_file(dir / "metrics.csv", export_dir / "metrics.csv", fs::copy_options::overwrite_existing);
    return kOk;
}

inline int cmd_oracle_check(const tabular::OracleOptions& opts, bool verbose, std::ostream& out) {
    const tabular::OracleReport report = tabular::run_oracle_battery(opts);
    tabular::print_report(out, report, verbose);
    return report.all_passed() ? kOk : kPropertyFailure;
}

/// Parses "SxA" pairs separated by commas, e.g. "1x1,3x2".
inline std::vector<std::pair<int, int>> parse_sizes(const std::string& text) {
    std::vector<std::pair<int, int>> sizes;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, comma - pos);
        int s = 0, a = 0;
        char x = 0, extra = 0;
        if (std::sscanf(item.c_str(), "%d%c%d%c", &s, &x, &a, &extra) != 3 || x != 'x' || s < 1 || a < 1)
            throw InvalidInput("bad size '" + item + "', expected SxA with positive S and A");
        sizes.emplace_back(s, a);
        pos = comma + 1;
    }
    return sizes;
}

}  // namespace softq::cli
