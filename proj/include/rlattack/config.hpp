#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rlattack {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key-value configuration.
///
/// File syntax is one `key = value` pair per line; `#` starts a comment and
/// blank lines are ignored. Keys are dotted (`env.dt`, `method.delta`,
/// `perturb.eps_inf`, `seeds`). Later assignments override earlier ones.
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text, std::string_view origin = "<string>");
  static Config load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  bool contains(std::string_view key) const;
  std::optional<std::string> raw(std::string_view key) const;

  double get_double(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::string get_string(std::string_view key, std::string fallback) const;

  /// Seeds are written either as a comma list (`1,2,7`) or a range (`1..20`).
  std::vector<std::uint64_t> get_seeds(std::string_view key,
                                       std::vector<std::uint64_t> fallback) const;

  /// Entries whose key starts with `prefix`, with the prefix stripped.
  Config subtree(std::string_view prefix) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

std::vector<std::uint64_t> parse_seed_list(std::string_view text);
std::vector<std::uint64_t> default_seeds();

}  // namespace rlattack
