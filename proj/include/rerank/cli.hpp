#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rerank::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kBackendError = 3 };

/// Environment variable holding the bearer token for http backends.
inline constexpr const char* kApiKeyEnv = "RERANK_API_KEY";

/// Runs the command line `args` (args[0] is the program name) and returns the
/// process exit code. Subcommands: index, retrieve, rerank, eval, analyze,
/// dump-traces.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rerank::cli
