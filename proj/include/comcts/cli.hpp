#pragma once

#include <iosfwd>

namespace comcts::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,       // invalid config or command line
  kExitIo = 3,          // unreadable input / unwritable output
  kExitAllFailed = 4,   // every question failed
  kExitInterrupted = 130,
};

/// Entry point behind the `comcts` binary: search, build-dataset, analyze,
/// bench. Global flags: --config, --seed, --workers, --format text|machine.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Async-signal-safe: asks a running search to stop after in-flight questions.
void request_interrupt() noexcept;
void clear_interrupt() noexcept;

}  // namespace comcts::cli
