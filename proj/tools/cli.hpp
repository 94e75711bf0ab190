#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace avalign::cli {

enum ExitCode : int {
  kOk = 0,
  kIoError = 1,
  kClipFailures = 2,
  kSelftestFailed = 3,
  kUsage = 64,
  kDataFormat = 65,
};

/// Runs one subcommand. `args` excludes the program name. Normal output goes
/// to `out`, diagnostics to `err`; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace avalign::cli
