#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmc {

/// `key = value` lines with optional `[section]` headers. `#` starts a
/// comment. Keys inside a section are reported as `section.key`.
struct KeyValueEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<KeyValueEntry> parse_key_values(const std::string& text);

/// Formats a double so that it reads back bit-identical.
std::string format_double(double v);

double parse_double(const KeyValueEntry& e);
long long parse_integer(const KeyValueEntry& e);
bool parse_bool(const KeyValueEntry& e);
std::vector<double> parse_doubles(const KeyValueEntry& e);

std::string trim(const std::string& s);

}  // namespace mmc
