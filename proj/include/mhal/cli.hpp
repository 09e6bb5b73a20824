#pragma once

#include <ostream>

namespace mhal {

/// Exit codes of the `mhal` tool.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// Subcommands gen-data, run and report. The results root defaults to
/// $MHAL_RESULTS_DIR, then ./results.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mhal
