#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace snapper {

// Exit codes: 0 success, 1 usage or validation error, 2 processing failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

// Entry point of the `snapper` tool. `args` excludes the program name.
// Results go to `out` (JSON with --json), diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace snapper
