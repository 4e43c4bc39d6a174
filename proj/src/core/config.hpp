#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace freshrec {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key-value config file: one `key = value` per line, '#' comments,
// whitespace around key and value trimmed. Unknown keys are kept (callers
// pick what they need).
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(std::string_view text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(std::string key, std::string value) {
    values_[std::move(key)] = std::move(value);
  }

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace freshrec
