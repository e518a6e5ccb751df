#pragma once

#include <iosfwd>

namespace so3denoise {

/// Runs the invariant suites, one line per check. Returns true iff all pass.
bool run_selftest(bool fast, std::ostream& out);

}  // namespace so3denoise
