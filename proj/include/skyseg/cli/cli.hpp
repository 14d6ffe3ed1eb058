#pragma once

#include <iosfwd>
#include <optional>
#include <string_view>

namespace skyseg::cli {

/// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kUsage = 1,        // bad flags, missing required options, invalid configuration values
    kDataError = 2,    // unreadable or inconsistent input files
    kModelError = 3,   // training or inference failed (convergence, singular systems)
};

/// Entry point of the `skyseg` tool. Never throws; errors are reported on
/// `err` and mapped to an ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Thread count from --threads, then SKYSEG_THREADS, then `fallback`.
/// Malformed or non-positive environment values are ignored.
int resolve_threads(std::optional<int> flag, const char* env_value, int fallback);

}  // namespace skyseg::cli
