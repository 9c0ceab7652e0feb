#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lidarseg::cli {

enum ExitCode : int {
  kOk = 0,
  kFailedRuns = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericAbort = 4,
};

/// Entry point of the lidarseg tool; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lidarseg::cli
