#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crow::cli {

enum ExitCode : int {
    kOk = 0,
    kValidationError = 1,
    kPartialFailure = 2,
    kUsage = 64,
};

/// Parses argv (including the program name) and runs the selected
/// subcommand. Primary output goes to `out`, usage text and errors to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crow::cli
