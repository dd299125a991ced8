#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dwell {

inline constexpr const char* kToolVersion = "1.0.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitInputError = 1, kExitNegative = 2 };

/// Runs the command line `args` (program name first). The JSON report goes
/// to `out`, the human summary and errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dwell
