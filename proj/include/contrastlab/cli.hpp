#pragma once

#include <ostream>

namespace contrastlab {

// Exit codes of the clab tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;  // I/O, malformed data, aborted training
inline constexpr int kExitUsage = 2;    // bad arguments, unknown keys, invalid config

// Entry point of the clab tool with injectable streams; see tools/clab.cpp.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace contrastlab
