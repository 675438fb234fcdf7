#pragma once

#include <iosfwd>

namespace labplan {

/// Exit codes: 0 success, 1 domain error (no plan, invalid input), 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace labplan
