#pragma once

#include "wbipm/common.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace wbipm {

// Flat "key = value" configuration. '#' starts a comment; "include = path"
// splices another file (relative to the including file) at that point, later
// keys overriding earlier ones.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::filesystem::path& path);
  static Config from_string(const std::string& text,
                            const std::filesystem::path& base_dir = ".");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  // Throws ValidationError listing every key not in `known`.
  void check_keys(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_string() const;

 private:
  void parse(const std::string& text, const std::filesystem::path& base_dir, int depth);

  std::map<std::string, std::string> values_;
};

}  // namespace wbipm
