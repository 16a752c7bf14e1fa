#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tg {

// Locale-independent number formatting backed by std::to_chars/from_chars.
// Shortest round-trip representation: re-parsing reproduces the exact
// double, and identical values always print identical bytes.

std::string format_double(double v);
void append_double(std::string& out, double v);

// Strict full-token parse; throws std::invalid_argument on failure.
double parse_double(std::string_view token);
long parse_long(std::string_view token);

std::vector<std::string_view> split_line(std::string_view line, char sep = ',');

} // namespace tg
