#pragma once

#include <iosfwd>

namespace so3denoise {

/// Exit codes: 0 success, 1 runtime error, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace so3denoise
