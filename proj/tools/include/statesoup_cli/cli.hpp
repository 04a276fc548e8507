#pragma once

#include <iosfwd>

namespace statesoup::cli {

/// Exit codes: 0 success, 1 runtime error (one JSON line on `err`), 2 usage
/// error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace statesoup::cli
