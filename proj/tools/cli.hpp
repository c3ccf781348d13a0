#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cascal::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kMissingInput = 4,
  kInvalidData = 5,
  kClassMismatch = 6,
  kIo = 7,
};

// Runs one subcommand. Output paths go to `out`, one per line; failures
// print a single `error code=<name> exit=<n> message=<text>` line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cascal::cli
