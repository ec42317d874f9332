#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace occpose::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericalError = 3 };

/// Parses and dispatches one invocation. argv[0] is the program name.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace occpose::cli
