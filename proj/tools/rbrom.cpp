// rbrom: command-line driver for the reduced-order pipeline.

#include "rbrom/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>

namespace {

int exit_code(const std::exception& e) {
    using namespace rbrom;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
        dynamic_cast<const MeshError*>(&e)) {
        return 2;
    }
    if (dynamic_cast<const CompatibilityError*>(&e)) {
        return 6;
    }
    if (dynamic_cast<const ArchiveError*>(&e)) {
        return 4;
    }
    if (dynamic_cast<const TrainingError*>(&e)) {
        return 5;
    }
    if (dynamic_cast<const SolverError*>(&e) || dynamic_cast<const SingularMatrix*>(&e) ||
        dynamic_cast<const NotPositiveDefinite*>(&e) || dynamic_cast<const ConvergenceError*>(&e) ||
        dynamic_cast<const NumericalError*>(&e)) {
        return 3;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reduced-basis ROM with a residual-network time stepper"};
    app.require_subcommand(1, 1);

    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    bool svg = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", out, "Output directory (overrides the config)");
        cmd->add_option("--seed", seed, "Training seed (overrides the config)");
        cmd->add_option("--threads", threads, "Worker threads; results do not depend on it")
            ->check(CLI::Range(std::size_t{1}, std::size_t{1024}));
        cmd->add_flag("--svg", svg, "Also write SVG plots");
    };
    auto* fom = app.add_subcommand("fom", "Solve the full-order model on the training set");
    auto* pod = app.add_subcommand("pod", "Two-stage POD and projected training coefficients");
    auto* train = app.add_subcommand("train", "Train the time-stepping network");
    auto* eval = app.add_subcommand("eval", "Evaluate the network on the test set");
    auto* baseline = app.add_subcommand("baseline", "Evaluate Galerkin-POD on the test set");
    for (auto* cmd : {fom, pod, train, eval, baseline}) {
        add_common(cmd);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        auto cfg = rbrom::pipeline::load_config(config);
        if (out) {
            cfg.output = *out;
        }
        if (seed) {
            cfg.train.seed = *seed;
        }
        const rbrom::pipeline::RunOptions opt{threads, svg, &std::cout};
        if (fom->parsed()) {
            rbrom::pipeline::cmd_fom(cfg, opt);
        } else if (pod->parsed()) {
            rbrom::pipeline::cmd_pod(cfg, opt);
        } else if (train->parsed()) {
            rbrom::pipeline::cmd_train(cfg, opt);
        } else if (eval->parsed()) {
            rbrom::pipeline::cmd_eval(cfg, opt);
        } else {
            rbrom::pipeline::cmd_baseline(cfg, opt);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    }
    return 0;
}
