#include "wbipm/config.hpp"

#include <fstream>
#include <sstream>

namespace wbipm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size())
    throw ValidationError("config: '" + key + "' expects a number, got '" + text + "'");
  return v;
}

}  // namespace

Config Config::from_file(const std::filesystem::path& path) {
  Config c;
  c.parse(read_file(path), path.parent_path(), 0);
  return c;
}

Config Config::from_string(const std::string& text, const std::filesystem::path& base_dir) {
  Config c;
  c.parse(text, base_dir, 0);
  return c;
}

void Config::parse(const std::string& text, const std::filesystem::path& base_dir, int depth) {
  require(depth < 16, "config: include nesting too deep");
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
    if (key == "include") {
      const std::filesystem::path inc = base_dir / value;
      parse(read_file(inc), inc.parent_path(), depth + 1);
    } else {
      values_[key] = value;
    }
  }
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_double(key, it->second);
}

long Config::get_int(const std::string& key, long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const double v = parse_double(key, it->second);
  if (v != static_cast<double>(static_cast<long>(v)))
    throw ValidationError("config: '" + key + "' expects an integer");
  return static_cast<long>(v);
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(it->second)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : split_list(it->second);
}

void Config::check_keys(const std::set<std::string>& known) const {
  std::string unknown;
  for (const auto& [k, v] : values_)
    if (!known.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  if (!unknown.empty()) throw ValidationError("config: unknown keys: " + unknown);
}

std::string Config::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace wbipm
