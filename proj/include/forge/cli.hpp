#pragma once

namespace forge::cli {

// Parses argv, runs one subcommand, maps errors to exit codes:
// 0 success, 1 usage, 2 data, 3 transport.
int run_cli(int argc, const char* const* argv);

}  // namespace forge::cli
