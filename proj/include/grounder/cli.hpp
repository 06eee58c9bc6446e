#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace grounder {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;     // bad flags
inline constexpr int kExitInput = 2;     // config, IO or validation error
inline constexpr int kExitPartial = 3;   // some queries hit a pipeline (transport) error
inline constexpr int kExitFailed = 4;    // benchmark: no request completed

/// Entry point of the `grounder` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version_string();

}  // namespace grounder
