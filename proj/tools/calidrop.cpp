#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include <Eigen/Core>
#include "CLI11.hpp"

#include "calidrop/commands.hpp"

namespace {

void configure_threads() {
    if (const char* env = std::getenv("CALIDROP_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n < 1) throw std::invalid_argument("non-positive");
            Eigen::setNbThreads(n);
        } catch (...) {
            throw calidrop::ConfigError(std::string("CALIDROP_THREADS must be a positive "
                                                    "integer, got '") +
                                        env + "'");
        }
    }
}

void add_common(CLI::App* cmd, calidrop::CommandOptions& opt) {
    cmd->add_option("--config", opt.config_path, "Run configuration file");
    cmd->add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
    cmd->add_option("--seed", opt.seed_override, "Override the configured master seed");
    cmd->add_option("--profile", opt.profile, "Preset scale: mini or paper");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structured-dropout Monte-Carlo uncertainty toolkit"};
    app.require_subcommand(1);

    calidrop::CommandOptions opt;

    CLI::App* train = app.add_subcommand("train", "Train a model and write a checkpoint");
    add_common(train, opt);

    CLI::App* mc_eval = app.add_subcommand(
        "mc-eval", "Evaluate a checkpoint with MC sampling (or several as a deep ensemble)");
    add_common(mc_eval, opt);
    mc_eval->add_option("--checkpoint", opt.checkpoint_paths, "Checkpoint file(s)")
        ->required();

    CLI::App* diversity =
        app.add_subcommand("diversity", "Diversity and agreement analysis of an ensemble");
    add_common(diversity, opt);
    diversity->add_option("--checkpoint", opt.checkpoint_paths, "Checkpoint file(s)");
    diversity->add_option("--ensemble", opt.ensemble_path, "Precomputed ensemble file");

    CLI::App* sweep = app.add_subcommand("sweep", "Grid-search the dropout rate");
    add_common(sweep, opt);
    sweep->add_option("--rates", opt.sweep_rates, "Dropout rates to try")
        ->capture_default_str();

    CLI::App* al = app.add_subcommand("active-learn", "Pool-based active-learning loop");
    add_common(al, opt);

    CLI11_PARSE(app, argc, argv);

    try {
        configure_threads();
        if (train->parsed()) return calidrop::cmd_train(opt);
        if (mc_eval->parsed()) return calidrop::cmd_mc_eval(opt);
        if (diversity->parsed()) return calidrop::cmd_diversity(opt);
        if (sweep->parsed()) return calidrop::cmd_sweep(opt);
        if (al->parsed()) return calidrop::cmd_active_learn(opt);
    } catch (const calidrop::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const calidrop::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const calidrop::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
