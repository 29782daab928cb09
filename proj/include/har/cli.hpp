#pragma once

#include <iosfwd>

namespace har::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Runs one `har` command. Returns 0 on success, 1 for runtime or data
// errors, 2 for usage errors; diagnostics go to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace har::cli
