#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pbgan {

enum ExitCode : int {
  kExitOk = 0,
  kExitFail = 1,   // verification failed
  kExitUsage = 2,  // bad flags or arguments
  kExitIo = 3,     // unreadable, unwritable or malformed files
};

/// Entry point for the `pbgan` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pbgan
