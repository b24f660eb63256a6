#include <string>

#include <CLI11.hpp>

#include "dra/io.hpp"

int main(int argc, char** argv) {
    CLI::App app{"dra: dose-response estimation with exposure-derived control variables"};
    app.require_subcommand(1);

    dra::CliOptions options;
    std::uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--seed", seed, "override scenario/bootstrap seed")
        ->each([&seed_set](const std::string&) { seed_set = true; });
    app.add_option("--threads", options.threads, "simulation worker threads")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", options.out_dir, "output directory (default .)");

    std::string dataset_path, config_path, scenario_path;

    auto* analyze = app.add_subcommand("analyze", "estimate dose means from a dataset");
    analyze->add_option("dataset", dataset_path, "dataset CSV")->required();
    analyze->add_option("--config", config_path, "analysis config JSON")->required();

    auto* diagnose = app.add_subcommand("diagnose", "control-variable balance diagnostics");
    diagnose->add_option("dataset", dataset_path, "dataset CSV")->required();
    diagnose->add_option("--config", config_path, "analysis config JSON")->required();

    auto* simulate = app.add_subcommand("simulate", "run Monte Carlo scenarios");
    simulate->add_option("scenario", scenario_path, "scenario JSON")->required();

    auto* truemeans = app.add_subcommand("true-means", "Monte Carlo truth for a scenario");
    truemeans->add_option("scenario", scenario_path, "scenario JSON")->required();

    CLI11_PARSE(app, argc, argv);
    if (seed_set) options.seed = seed;

    if (analyze->parsed()) return dra::cmd_analyze(dataset_path, config_path, options);
    if (diagnose->parsed()) return dra::cmd_diagnose(dataset_path, config_path, options);
    if (simulate->parsed()) return dra::cmd_simulate(scenario_path, options);
    if (truemeans->parsed()) return dra::cmd_true_means(scenario_path, options);
    return 1;
}
