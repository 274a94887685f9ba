#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace geometre {

// Flat `key = value` settings. Lines starting with '#' and `[section]`
// headers are ignored; values may be double-quoted.
using KeyValues = std::map<std::string, std::string>;

// Throws ParseError naming `source` and the line on malformed input.
KeyValues parse_key_values(std::string_view text, std::string_view source);
KeyValues read_key_values(const std::filesystem::path& path);

// Typed lookups; a missing key yields `fallback`, a malformed value throws
// ParseError naming the key.
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
std::int64_t kv_int(const KeyValues& kv, const std::string& key,
                    std::int64_t fallback);
std::uint64_t kv_uint(const KeyValues& kv, const std::string& key,
                      std::uint64_t fallback);
bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string kv_string(const KeyValues& kv, const std::string& key,
                      const std::string& fallback);

}  // namespace geometre
