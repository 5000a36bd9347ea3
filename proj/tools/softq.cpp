#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "softq/cli.hpp"

namespace {

int run(int argc, char** argv) {
    using namespace softq;
    CLI::App app{"Soft Q-learning with energy-based policies"};
    app.require_subcommand(1);

    cli::Overrides train_flags;
    std::string train_config;
    std::uint64_t seed = 0;
    std::string output_dir;
    int n_epochs = 0, epoch_length = 0;
    auto* train = app.add_subcommand("train", "train on the configured environment");
    train->add_option("-c,--config", train_config, "run config (YAML)")->required();
    auto* seed_opt = train->add_option("--seed", seed, "root seed (overrides file and SOFTQ_SEED)");
    auto* out_opt = train->add_option("-o,--output-dir", output_dir, "output directory (overrides file and SOFTQ_OUTPUT_DIR)");
    auto* epochs_opt = train->add_option("--epochs", n_epochs, "number of epochs");
    auto* length_opt = train->add_option("--epoch-length", epoch_length, "environment steps per epoch");

    std::string eval_ckpt, eval_config, eval_out = "eval";
    std::optional<int> eval_rollouts;
    auto* eval = app.add_subcommand("eval", "roll out a checkpointed sampler and summarize goal occupancy");
    eval->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("-c,--config", eval_config, "run config supplying environment parameters");
    eval->add_option("-n,--rollouts", eval_rollouts, "number of rollouts (default: config value)");
    eval->add_option("-o,--output-dir", eval_out, "where to write trajectories and occupancy");

    std::string export_dir;
    std::optional<int> export_rollouts;
    auto* exp = app.add_subcommand("export", "re-emit trajectories and metrics from a run's checkpoints");
    exp->add_option("run_dir", export_dir, "output directory of a train run")->required();
    exp->add_option("-n,--rollouts", export_rollouts, "rollouts per checkpoint (default: config value)");

    tabular::OracleOptions oracle;
    std::string sizes;
    bool verbose = false;
    auto* check = app.add_subcommand("oracle-check", "run the tabular property battery on seeded random MDPs");
    check->add_option("--seed", oracle.seed, "root seed for the generated MDPs");
    check->add_option("--sizes", sizes, "comma-separated SxA sizes, e.g. 1x1,3x2,6x4");
    check->add_option("--per-size", oracle.mdps_per_size, "MDPs per size")->check(CLI::PositiveNumber);
    check->add_flag("-v,--verbose", verbose, "print passing checks too");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::kUsageError;
    }

    if (*train) {
        if (*seed_opt) train_flags.seed = seed;
        if (*out_opt) train_flags.output_dir = output_dir;
        if (*epochs_opt) train_flags.n_epochs = n_epochs;
        if (*length_opt) train_flags.epoch_length = epoch_length;
        const RunConfig cfg = cli::resolve_config(train_config, train_flags);
        return cli::cmd_train(cfg, std::cout, std::cerr);
    }
    if (*eval) {
        RunConfig cfg;
        if (!eval_config.empty()) cfg = load_run_config(eval_config);
        return cli::cmd_eval(eval_ckpt, cfg, eval_rollouts.value_or(cfg.eval_rollouts), eval_out, std::cout);
    }
    if (*exp) return cli::cmd_export(export_dir, export_rollouts, std::cout);
    if (!sizes.empty()) oracle.sizes = cli::parse_sizes(sizes);
    return cli::cmd_oracle_check(oracle, verbose, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const softq::NumericAbort& e) {
        std::cerr << "numeric abort: " << e.what() << '\n';
        return softq::cli::kNumericAbort;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return softq::cli::kUsageError;
    }
}
