#include "cellcount/config.hpp"

#include <cctype>
#include <charconv>

#include "cellcount/csv.hpp"
#include "cellcount/errors.hpp"

namespace cellcount {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, const std::string& value, const char* kind) {
  throw ParameterError("config: '" + std::string(key) + "' = '" + value + "' is not " + kind);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const auto line = trim(text.substr(start, end - start));
    if (!line.empty() && line.front() != '#') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ParameterError("config: line " + std::to_string(line_no) + " has no '='");
      }
      const auto key = trim(line.substr(0, eq));
      if (key.empty()) throw ParameterError("config: line " + std::to_string(line_no) + " has an empty key");
      cfg.values_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) { return parse(csv::read_file(path)); }

bool KeyValueConfig::has(std::string_view key) const { return values_.find(key) != values_.end(); }

void KeyValueConfig::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

void KeyValueConfig::merge(const KeyValueConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string KeyValueConfig::get_string(std::string_view key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return csv::parse_double(it->second, 0);
  } catch (const ParseError&) {
    bad_value(key, it->second, "a number");
  }
}

long long KeyValueConfig::get_int(std::string_view key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return csv::parse_int(it->second, 0);
  } catch (const ParseError&) {
    bad_value(key, it->second, "an integer");
  }
}

std::size_t KeyValueConfig::get_size(std::string_view key, std::size_t fallback) const {
  const auto v = get_int(key, static_cast<long long>(fallback));
  if (v < 0) bad_value(key, std::to_string(v), "a non-negative integer");
  return static_cast<std::size_t>(v);
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::size_t> KeyValueConfig::get_size_list(
    std::string_view key, const std::vector<std::size_t>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  if (trim(it->second).empty()) return out;
  for (const auto& field : csv::split_line(it->second)) {
    try {
      const auto v = csv::parse_int(field, 0);
      if (v < 0) bad_value(key, it->second, "a list of non-negative integers");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const ParseError&) {
      bad_value(key, it->second, "a list of non-negative integers");
    }
  }
  return out;
}

std::string KeyValueConfig::str() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace cellcount
