#pragma once

#include "run_config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace counterlens::cli {

struct CommandResult {
    std::filesystem::path run_dir;
    std::vector<std::string> warnings;
};

// Each command writes <out>/<command>-<hash12>/ with reports and manifest.json.
// On failure the directory keeps an "incomplete" manifest and the error is
// rethrown.
CommandResult cmd_correlate(const RunConfig& config);
CommandResult cmd_model(const RunConfig& config);
CommandResult cmd_select(const RunConfig& config);
CommandResult cmd_mvtb(const RunConfig& config, std::ostream* progress = nullptr);
CommandResult cmd_synth(const RunConfig& config);

/// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace counterlens::cli
