#pragma once

#include <iosfwd>

namespace eot::cli {

/// Runs one command line. Returns the process exit code: 0 on success,
/// 1 on usage, input or numeric errors, 2 when a solve did not converge.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace eot::cli
