#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cdi {

// Ordered `key = value` text file. One entry per line; `#` starts a comment;
// blank lines are ignored; keys and values are whitespace-trimmed. Used for
// component manifests, run configs, and other small metadata files.
class KvFile {
 public:
  KvFile() = default;

  static KvFile parse_text(const std::string& text);
  static KvFile load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_text() const;

  bool has(const std::string& key) const;
  // Throws DataError when the key is missing or the value fails to parse.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key) const;
  int get_int_or(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::uint64_t get_u64_or(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  bool get_bool_or(const std::string& key, bool fallback) const;

  // Replaces the first occurrence or appends.
  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, long long value);
  void set_u64(const std::string& key, std::uint64_t value);
  void set_double(const std::string& key, double value);

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace cdi
