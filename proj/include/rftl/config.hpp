#pragma once

// Flat `key = value` configuration files (TOML subset). The CLI reads the same
// files through --config, so every key here mirrors a command-line flag.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rftl::config {

class KeyValues {
 public:
  KeyValues() = default;
  explicit KeyValues(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& raw(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  unsigned long long get_uint(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }
  unsigned long long get_uint(const std::string& key, unsigned long long fallback) const {
    return has(key) ? get_uint(key) : fallback;
  }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Throws rftl::FormatError on unreadable or malformed files.
KeyValues load(const std::filesystem::path& path);

/// Writes `key = value` lines; strings are quoted.
void save(const std::filesystem::path& path, const KeyValues& kv);

}  // namespace rftl::config
