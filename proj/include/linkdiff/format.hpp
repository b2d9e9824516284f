#pragma once

#include <string>

namespace linkdiff {

/// Shortest decimal text that parses back to exactly `v` (17 significant digits max).
std::string format_double(double v);

}  // namespace linkdiff
