#pragma once

#include <iosfwd>

namespace npmean::cli {

/// Parses `argv` and runs one subcommand (estimate, simulate, cv-lambda).
/// Returns 0 on success, 1 on invalid input or configuration, 2 on a
/// numerical failure or an invalid Monte-Carlo aggregate.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace npmean::cli
