#pragma once

#include <iosfwd>

namespace linkdiff::cli {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kDomainFailure = 3,
  kUsageError = 64,
};

/// Parses `argv` and runs the selected subcommand. Normal output goes to `out`,
/// the resolved config echo and diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace linkdiff::cli
