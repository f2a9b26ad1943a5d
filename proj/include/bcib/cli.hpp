#pragma once

namespace bcib {

// Entry point behind the bcib binary. Parses a subcommand plus flags
// (optionally merged with a TOML config file; flags win), echoes the
// resolved effective configuration, and dispatches.
//
// Exit codes: 0 success, 2 usage or validation failure, 3 numerical abort.
int run_cli(int argc, const char* const* argv);

}  // namespace bcib
