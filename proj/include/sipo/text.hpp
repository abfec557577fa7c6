#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sipo::text {

/// Shortest decimal that parses back to exactly `value`.
std::string format_double(double value);

/// Fixed-precision rendering, for human-facing output.
std::string format_fixed(double value, int decimals);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

}  // namespace sipo::text
