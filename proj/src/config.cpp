#include "geometre/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "geometre/errors.hpp"

namespace geometre {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

const std::string* find(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  return it == kv.end() ? nullptr : &it->second;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ParseError("config key '" + key + "': expected " + expected +
                   ", got '" + value + "'");
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    bad_value(key, value, "an integer");
  }
  return out;
}

}  // namespace

KeyValues parse_key_values(std::string_view text, std::string_view source) {
  KeyValues out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Inline comments are allowed after a value.
    std::string body = line;
    bool quoted = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '"') quoted = !quoted;
      if (body[i] == '#' && !quoted) {
        body.resize(i);
        break;
      }
    }
    body = trim(body);
    if (body.empty() || body.front() == '[') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ParseError(std::string(source) + ":" + std::to_string(lineno) +
                       ": expected key = value");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) {
      throw ParseError(std::string(source) + ":" + std::to_string(lineno) +
                       ": empty key");
    }
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    out[key] = value;
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str(), path.string());
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
  const std::string* v = find(kv, key);
  if (!v) return fallback;
  double out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    bad_value(key, *v, "a number");
  }
  return out;
}

std::int64_t kv_int(const KeyValues& kv, const std::string& key,
                    std::int64_t fallback) {
  const std::string* v = find(kv, key);
  return v ? parse_integer<std::int64_t>(key, *v) : fallback;
}

std::uint64_t kv_uint(const KeyValues& kv, const std::string& key,
                      std::uint64_t fallback) {
  const std::string* v = find(kv, key);
  return v ? parse_integer<std::uint64_t>(key, *v) : fallback;
}

bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback) {
  const std::string* v = find(kv, key);
  if (!v) return fallback;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  bad_value(key, *v, "a boolean");
}

std::string kv_string(const KeyValues& kv, const std::string& key,
                      const std::string& fallback) {
  const std::string* v = find(kv, key);
  return v ? *v : fallback;
}

}  // namespace geometre
