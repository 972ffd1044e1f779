#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace univid {

// Flat key=value text. '#' starts a comment line; keys are dotted paths.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& source = "config");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& raw(const std::string& key) const;
  std::string get_string(const std::string& key) const { return raw(key); }
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& values() const { return values_; }

  // Every key in `required` must be present and nothing else may be.
  void require_exactly(const std::set<std::string>& required) const;

  // Sorted key=value lines; what gets written as config.resolved.
  std::string resolved() const;
  // FNV-1a of resolved(), as 16 hex digits.
  std::string hash() const;

 private:
  std::string source_ = "config";
  std::map<std::string, std::string> values_;
};

}  // namespace univid
