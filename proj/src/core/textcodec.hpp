#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace freshrec {

// Canonical line-record encoding used by every text artifact in this repo
// (event logs, catalog files, slate documents, metrics reports).
//
// One record per line. A record is a space-separated list of `key=value`
// fields. Keys match [A-Za-z0-9_.-]+. Values are percent-escaped: '%',
// ' ', '=' and control bytes are written as %XX (uppercase hex); all other
// bytes pass through. Blank lines and lines starting with '#' are skipped
// by readers. Encoding/decoding round-trips exactly.
class Record {
 public:
  Record() = default;

  void add(std::string key, std::string value);
  std::optional<std::string_view> get(std::string_view key) const;
  std::string_view require(std::string_view key) const;  // throws CodecError
  bool has(std::string_view key) const { return get(key).has_value(); }
  const std::vector<std::pair<std::string, std::string>>& fields() const {
    return fields_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

struct CodecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string encode_value(std::string_view raw);
std::string decode_value(std::string_view escaped);  // throws CodecError

std::string encode_record(const Record& rec);
Record decode_record(std::string_view line);  // throws CodecError

}  // namespace freshrec
