#pragma once

#include "subflow/config.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace subflow {

enum ExitCode : int { exit_ok = 0, exit_domain = 1, exit_config = 2 };

struct CommandOptions {
    std::string out_dir;  ///< overrides RunConfig::output_dir when nonempty
    std::size_t jobs = 1;
};

const std::vector<std::string>& command_names();

/// Runs one subcommand and writes its files. Errors are logged, never thrown:
/// the return value is the process exit code.
int run_command(const std::string& cmd, const RunConfig& cfg, const CommandOptions& opts = {});

/// Reads the config file and dispatches; config problems map to exit_config.
int run_command_file(const std::string& cmd, const std::string& config_path, const CommandOptions& opts = {});

} // namespace subflow
