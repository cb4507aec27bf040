#pragma once

#include <iosfwd>

namespace lgi {

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1; // a check failed or training diverged
inline constexpr int kExitUsage = 2;  // bad arguments, config, or input files

// Entry point of the `lgi` tool. With --json only the JSON document is written to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace lgi
