#pragma once

#include <ostream>

namespace mmfuse::cli {

enum ExitCode { kOk = 0, kUsage = 2, kSchema = 3, kCheckpoint = 4 };

/// Parses argv (argv[0] is the program name) and runs one subcommand.
/// Human-readable output goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace mmfuse::cli
