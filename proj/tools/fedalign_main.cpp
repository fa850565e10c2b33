// ---------------------------------------------------------------------------
// fedalign command line: train / compare / gradcheck / boundcheck / partition.
// The JSON config file is the source of truth; --set overrides individual
// keys by dotted path, and FEDALIGN_SEED / FEDALIGN_OUTPUT_DIR override the
// seed and output directory from the environment.
// ---------------------------------------------------------------------------
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedalign/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"fedalign: a federated-learning simulator with a pluggable backward pass"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto add_config_options = [&](CLI::App* cmd, bool mandatory) {
        auto* opt = cmd->add_option("-c,--config", config_path, "JSON run configuration file");
        if (mandatory) opt->required()->check(CLI::ExistingFile);
        cmd->add_option("--set", overrides,
                        "Override a config key by dotted path, e.g. --set train.rounds=3")
            ->take_all();
    };

    CLI::App* train = app.add_subcommand(
        "train", "Run one federated training job (rounds.jsonl, metrics.csv, model.json)");
    add_config_options(train, true);

    CLI::App* compare = app.add_subcommand(
        "compare",
        "Paired runs per seed: backprop vs feedback alignment (compare.csv, summary.json)");
    add_config_options(compare, true);

    CLI::App* boundcheck = app.add_subcommand(
        "boundcheck",
        "Verify the per-layer update-divergence bounds on recorded traces (bound_report.csv)");
    add_config_options(boundcheck, true);

    CLI::App* partition = app.add_subcommand(
        "partition", "Build the client partition and dump shard membership (partition.json)");
    add_config_options(partition, false);

    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "Finite-difference gradient oracle on random small networks");
    fedalign::GradCheckOptions gradcheck_options;
    gradcheck->add_option("--cases", gradcheck_options.cases, "Number of random networks")
        ->capture_default_str();
    gradcheck->add_option("--step", gradcheck_options.step, "Central-difference half-step")
        ->capture_default_str();
    gradcheck->add_option("--seed", gradcheck_options.seed, "Root seed")->capture_default_str();
    // Negative control for the harness itself; deliberately undocumented.
    gradcheck->add_flag("--corrupt", gradcheck_options.corrupt_backward)->group("");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gradcheck->parsed()) {
            return fedalign::cmd_gradcheck(gradcheck_options, std::cout, std::cerr);
        }
        const fedalign::RunConfig cfg = fedalign::load_run_config(config_path, overrides);
        if (train->parsed()) return fedalign::cmd_train(cfg, std::cout, std::cerr);
        if (compare->parsed()) return fedalign::cmd_compare(cfg, std::cout, std::cerr);
        if (boundcheck->parsed()) return fedalign::cmd_boundcheck(cfg, std::cout, std::cerr);
        if (partition->parsed()) return fedalign::cmd_partition(cfg, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
