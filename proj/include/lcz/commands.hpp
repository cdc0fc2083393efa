#pragma once

#include "lcz/config.hpp"

namespace lcz {

// Subcommand bodies; each returns the process exit code.
int cmd_train(const RunConfig& config);
int cmd_evaluate(const RunConfig& config);
int cmd_map(const RunConfig& config);
int cmd_gradcheck(const RunConfig& config);
int cmd_params(const RunConfig& config);
int cmd_synth(const RunConfig& config);

// Parses argv (subcommand, --config PATH, --key value overrides), dispatches,
// and maps thrown errors to exit codes: 2 configuration, 3 data, 4 failed
// verification.
int run_cli(int argc, char** argv);

}  // namespace lcz
