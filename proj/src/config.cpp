#include "ktune/config.hpp"

#include <fstream>
#include <istream>

#include "ktune/error.hpp"
#include "ktune/text_format.hpp"

namespace ktune {

Config Config::parse(std::istream& is, const std::string& origin) {
  Config cfg;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = text::trim(view);
    if (view.empty()) continue;
    if (view.front() == '[') {
      if (view.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
      section = std::string(text::trim(view.substr(1, view.size() - 2)));
      continue;
    }
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const auto key = text::trim(view.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    const auto full = section.empty() ? std::string(key) : section + "." + std::string(key);
    cfg.values_[full] = std::string(text::trim(view.substr(eq + 1)));
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  return parse(is, path);
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  const auto key = text::trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("override '" + std::string(assignment) + "' has no key");
  values_[std::string(key)] = std::string(text::trim(assignment.substr(eq + 1)));
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return text::parse_double(it->second);
  } catch (const InvalidArgument&) {
    throw ConfigError(key + ": expected a number, got '" + it->second + "'");
  }
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return text::parse_int(it->second);
  } catch (const InvalidArgument&) {
    throw ConfigError(key + ": expected an integer, got '" + it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  try {
    for (auto token : text::split(it->second, ','))
      if (!text::trim(token).empty()) out.push_back(text::parse_double(token));
  } catch (const InvalidArgument&) {
    throw ConfigError(key + ": expected a comma-separated list of numbers");
  }
  return out;
}

std::vector<long long> Config::get_ints(const std::string& key,
                                        const std::vector<long long>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<long long> out;
  try {
    for (auto token : text::split(it->second, ','))
      if (!text::trim(token).empty()) out.push_back(text::parse_int(token));
  } catch (const InvalidArgument&) {
    throw ConfigError(key + ": expected a comma-separated list of integers");
  }
  return out;
}

}  // namespace ktune
