#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace subflow {

/// Shortest-round-trip-safe decimal: 17 significant digits.
std::string format_double(double value);

/// Splits one CSV line on commas (no quoting; the library never emits quotes).
std::vector<std::string> split_csv_line(std::string_view line);

} // namespace subflow
