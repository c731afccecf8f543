#pragma once

#include <iosfwd>

namespace vqdm {

// Entry point of the `vqdm` command line. Returns the process exit status:
// 0 success, 2 validation error, 3 capacity/cap error, 4 I/O error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vqdm
