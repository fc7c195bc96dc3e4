#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace otsforge::cli {

/// Exit status: 0 success, 1 domain error, 2 usage error.
enum Status : int { kOk = 0, kDomainError = 1, kUsageError = 2 };

/// Runs one invocation; `args` excludes the program name. Results and help
/// go to `out`, error JSON to `err`; logging goes to stderr.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace otsforge::cli
