#pragma once

#include <ostream>

namespace deskctl::cli {

/// Runs one `deskctl` invocation. Exit status: 0 success, 1 domain error,
/// 2 usage error. Errors go to `err` as a single `error: <code>` line.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Makes a running `serve` or `listen` return. Async-signal-safe.
void request_stop() noexcept;

}  // namespace deskctl::cli
