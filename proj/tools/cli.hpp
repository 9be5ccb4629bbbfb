#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fde::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,         // I/O, parse, validation or mismatch
  kLambdaTooSmall = 2,
  kMaxIterations = 3,
};

/// Runs one command line (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fde::cli
