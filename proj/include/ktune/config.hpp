#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ktune {

// Flat `key = value` configuration. `[section]` lines prefix the keys that
// follow with `section.`; `#` starts a comment. Keys are kept sorted so the
// echo in run manifests is stable.
class Config {
 public:
  static Config parse(std::istream& is, const std::string& origin = "<config>");
  static Config load(const std::string& path);

  // `key=value`, key fully qualified (`tune.step_size=0.5`).
  void apply_override(std::string_view assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<long long> get_ints(const std::string& key,
                                  const std::vector<long long>& fallback) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ktune
