#include "rftl/config.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>

#include "rftl/common.hpp"

namespace rftl::config {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw FormatError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool is_numeric(const std::string& s) {
  if (s.empty()) return false;
  double d{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

const std::string& KeyValues::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw FormatError("config key '" + key + "' is missing");
  return it->second;
}

std::string KeyValues::get_string(const std::string& key) const { return raw(key); }
double KeyValues::get_double(const std::string& key) const { return parse_number<double>(key, raw(key)); }
long long KeyValues::get_int(const std::string& key) const { return parse_number<long long>(key, raw(key)); }
unsigned long long KeyValues::get_uint(const std::string& key) const {
  return parse_number<unsigned long long>(key, raw(key));
}

KeyValues load(const std::filesystem::path& path) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path.string());
  } catch (const CLI::Error& e) {
    throw FormatError("cannot read config '" + path.string() + "': " + e.what());
  }
  KeyValues kv;
  for (const auto& item : items) {
    if (item.inputs.empty()) throw FormatError("config key '" + item.fullname() + "' has no value");
    // Lists come back split; keep them as one comma-separated value.
    std::string value = item.inputs.front();
    for (std::size_t i = 1; i < item.inputs.size(); ++i) value += "," + item.inputs[i];
    kv.set(item.fullname(), value);
  }
  return kv;
}

void save(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write config '" + path.string() + "'");
  for (const auto& [key, value] : kv.values()) {
    out << key << " = ";
    if (is_numeric(value)) out << value;
    else out << '"' << value << '"';
    out << '\n';
  }
  if (!out) throw Error("failed writing config '" + path.string() + "'");
}

}  // namespace rftl::config
