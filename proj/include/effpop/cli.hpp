#pragma once

#include <iosfwd>

namespace effpop {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitGateFailure = 4,
};

/// Entry point of the `effpop` tool. Output goes to `out` unless --out names a
/// directory; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace effpop
