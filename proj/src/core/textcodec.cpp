#include "core/textcodec.hpp"

#include <cctype>

namespace freshrec {

namespace {

bool valid_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' ||
         c == '-';
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!valid_key_char(c)) return false;
  return true;
}

bool needs_escape(unsigned char c) {
  return c == '%' || c == ' ' || c == '=' || c < 0x20 || c == 0x7f;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

void Record::add(std::string key, std::string value) {
  if (!valid_key(key)) throw CodecError("invalid field key: '" + key + "'");
  fields_.emplace_back(std::move(key), std::move(value));
}

std::optional<std::string_view> Record::get(std::string_view key) const {
  for (const auto& [k, v] : fields_)
    if (k == key) return std::string_view(v);
  return std::nullopt;
}

std::string_view Record::require(std::string_view key) const {
  auto v = get(key);
  if (!v) throw CodecError("missing required field '" + std::string(key) + "'");
  return *v;
}

std::string encode_value(std::string_view raw) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  out.reserve(raw.size());
  for (unsigned char c : raw) {
    if (needs_escape(c)) {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 0xf]);
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::string decode_value(std::string_view escaped) {
  std::string out;
  out.reserve(escaped.size());
  for (size_t i = 0; i < escaped.size(); ++i) {
    char c = escaped[i];
    if (c == '%') {
      if (i + 2 >= escaped.size()) throw CodecError("truncated %-escape");
      int hi = hex_digit(escaped[i + 1]);
      int lo = hex_digit(escaped[i + 2]);
      if (hi < 0 || lo < 0) throw CodecError("bad %-escape");
      out.push_back(static_cast<char>((hi << 4) | lo));
      i += 2;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string encode_record(const Record& rec) {
  std::string out;
  bool first = true;
  for (const auto& [k, v] : rec.fields()) {
    if (!first) out.push_back(' ');
    first = false;
    out += k;
    out.push_back('=');
    out += encode_value(v);
  }
  return out;
}

Record decode_record(std::string_view line) {
  Record rec;
  size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    if (pos >= line.size()) break;
    size_t end = line.find(' ', pos);
    if (end == std::string_view::npos) end = line.size();
    std::string_view token = line.substr(pos, end - pos);
    size_t eq = token.find('=');
    if (eq == std::string_view::npos)
      throw CodecError("field without '=': '" + std::string(token) + "'");
    std::string_view key = token.substr(0, eq);
    if (!valid_key(key))
      throw CodecError("invalid field key: '" + std::string(key) + "'");
    rec.add(std::string(key), decode_value(token.substr(eq + 1)));
    pos = end;
  }
  return rec;
}

}  // namespace freshrec
