#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dinoprobe::cli {

/// Runs the command-line tool on `args` (without the program name).
/// Returns the process exit code: 0 on success, the ErrorCategory value of
/// a failure (config 2, data 3, numeric 4, io 5), 1 for anything else.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dinoprobe::cli
