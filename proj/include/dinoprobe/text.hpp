#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dinoprobe::text {

/// Shortest decimal text that parses back to the same value.
std::string shortest(float value);
std::string shortest(double value);
/// Fixed number of decimals, locale independent.
std::string fixed(double value, int decimals);

/// Locale-independent strict parsers; throw std::invalid_argument.
double parse_double(std::string_view s);
float parse_float(std::string_view s);
long long parse_int(std::string_view s);

std::string_view trim(std::string_view s);
/// Plain comma split, no quoting support.
std::vector<std::string> split(std::string_view line, char sep = ',');
/// Splits a whole file into lines, accepting LF or CRLF.
std::vector<std::string> lines(std::string_view content);
std::string read_text(const std::string& path);

/// Rejects text that cannot appear in an unquoted CSV cell.
void require_csv_safe(std::string_view cell);

} // namespace dinoprobe::text
