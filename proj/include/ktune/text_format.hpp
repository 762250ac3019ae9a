#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ktune::text {

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

double parse_double(std::string_view token);
long long parse_int(std::string_view token);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

// Parses the `key=value` fields of a `# name v1 key=value ...` header line.
// Returns false when the line does not start with `# <name> v1`.
bool parse_header(std::string_view line, std::string_view name,
                  std::vector<std::pair<std::string, std::string>>& fields);

}  // namespace ktune::text
