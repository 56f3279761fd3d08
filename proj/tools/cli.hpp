#pragma once

#include "mrk/types.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mrk::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIntegration = 3;
inline constexpr int kExitNumeric = 4;

/// Sorted 0-based indices as 1-based hyphenated ranges, e.g. "3-7,12".
std::string format_ranges(const IndexList& indices);

/// Inverse of format_ranges for a state of size n; returns sorted, unique
/// 0-based indices. Throws std::invalid_argument on malformed or
/// out-of-range input.
IndexList parse_ranges(std::string_view text, Index n);

/// Round-trip decimal form with 17 significant digits.
std::string format_number(double x);

/// Runs `mrk <command> ...`; args excludes the program name. Artifacts go
/// to the output directory; diagnostics to `log`.
int run(const std::vector<std::string>& args, std::ostream& log);

}  // namespace mrk::cli
