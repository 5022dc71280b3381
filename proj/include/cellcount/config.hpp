#pragma once

// `key = value` configuration text. Lines starting with '#' are comments;
// later assignments override earlier ones.

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cellcount {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::string& path);

  bool has(std::string_view key) const;
  void set(const std::string& key, std::string value);
  // Applies every key of `other` on top of this one.
  void merge(const KeyValueConfig& other);

  std::string get_string(std::string_view key, const std::string& fallback) const;
  double get_double(std::string_view key, double fallback) const;
  long long get_int(std::string_view key, long long fallback) const;
  std::size_t get_size(std::string_view key, std::size_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  // Comma-separated non-negative integers; an empty value is an empty list.
  std::vector<std::size_t> get_size_list(std::string_view key,
                                         const std::vector<std::size_t>& fallback) const;

  // Sorted `key = value` lines.
  std::string str() const;
  const std::map<std::string, std::string, std::less<>>& entries() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace cellcount
