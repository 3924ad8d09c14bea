#include "subflow/commands.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Gradient-flow solver for penalized sub-Riemannian energy problems"};
    std::string command;
    std::string config;
    subflow::CommandOptions opts;
    app.add_option("command", command, "simulate | flow | sweep | hessian | verify")->required();
    app.add_option("--config", config, "JSON experiment config")->required()->check(CLI::ExistingFile);
    app.add_option("--out", opts.out_dir, "output directory (overrides output_dir in the config)");
    app.add_option("--jobs", opts.jobs, "worker threads for cold-started sweeps")->check(CLI::PositiveNumber);
    app.footer("Set SUBFLOW_LOG=trace|debug|info|warn|error|off for verbosity.");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return subflow::exit_config;
    }
    return subflow::run_command_file(command, config, opts);
}
