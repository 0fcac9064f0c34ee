#include "mmc/keyvalue.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace mmc {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

namespace {

[[noreturn]] void fail(const KeyValueEntry& e, const std::string& what) {
  std::ostringstream msg;
  msg << "line " << e.line << ": " << e.key << ": " << what << " (got '"
      << e.value << "')";
  throw ConfigError(msg.str());
}

}  // namespace

std::vector<KeyValueEntry> parse_key_values(const std::string& text) {
  std::vector<KeyValueEntry> entries;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw
                                                             : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    }
    KeyValueEntry e;
    e.key = trim(line.substr(0, eq));
    e.value = trim(line.substr(eq + 1));
    e.line = line_no;
    if (e.key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    if (!section.empty()) e.key = section + "." + e.key;
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int precision = 6; precision < 17; ++precision) {
    char shorter[64];
    std::snprintf(shorter, sizeof shorter, "%.*g", precision, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

double parse_double(const KeyValueEntry& e) {
  const char* begin = e.value.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE) {
    fail(e, "expected a real number");
  }
  return v;
}

long long parse_integer(const KeyValueEntry& e) {
  long long v = 0;
  const auto* first = e.value.data();
  const auto* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) fail(e, "expected an integer");
  return v;
}

bool parse_bool(const KeyValueEntry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  fail(e, "expected true or false");
}

std::vector<double> parse_doubles(const KeyValueEntry& e) {
  std::vector<double> out;
  std::istringstream in(e.value);
  std::string token;
  while (in >> token) {
    KeyValueEntry single{e.key, token, e.line};
    out.push_back(parse_double(single));
  }
  return out;
}

}  // namespace mmc
