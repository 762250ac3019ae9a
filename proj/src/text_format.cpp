#include "ktune/text_format.hpp"

#include <charconv>
#include <cmath>

#include "ktune/error.hpp"

namespace ktune::text {

std::string format_double(double value) {
  if (value == 0.0) return "0";  // also folds -0 so reruns stay byte-identical
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw InvalidArgument("cannot format double");
  return std::string(buf, end);
}

double parse_double(std::string_view token) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || end != token.data() + token.size())
    throw InvalidArgument("not a number: '" + std::string(token) + "'");
  return value;
}

long long parse_int(std::string_view token) {
  token = trim(token);
  long long value = 0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || end != token.data() + token.size())
    throw InvalidArgument("not an integer: '" + std::string(token) + "'");
  return value;
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

bool parse_header(std::string_view line, std::string_view name,
                  std::vector<std::pair<std::string, std::string>>& fields) {
  fields.clear();
  std::vector<std::string_view> words;
  for (auto w : split(trim(line), ' '))
    if (!w.empty()) words.push_back(w);
  if (words.size() < 3 || words[0] != "#" || words[1] != name || words[2] != "v1")
    return false;
  for (std::size_t i = 3; i < words.size(); ++i) {
    const auto eq = words[i].find('=');
    if (eq == std::string_view::npos) return false;
    fields.emplace_back(std::string(words[i].substr(0, eq)),
                        std::string(words[i].substr(eq + 1)));
  }
  return true;
}

}  // namespace ktune::text
