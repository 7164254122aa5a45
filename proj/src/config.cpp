#include "rlattack/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

namespace rlattack {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::uint64_t parse_u64(std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError("invalid seed '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

Config Config::parse(std::string_view text, std::string_view origin) {
  Config cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
    }
    cfg.set(std::string(key), std::string(value));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

bool Config::contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::optional<std::string> Config::raw(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

double Config::get_double(std::string_view key, double fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  if (*v == "inf" || *v == "+inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + std::string(key) + "': expected a number, got '" + *v + "'");
  }
}

std::int64_t Config::get_int(std::string_view key, std::int64_t fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size()) {
    throw ConfigError("key '" + std::string(key) + "': expected an integer, got '" + *v + "'");
  }
  return out;
}

bool Config::get_bool(std::string_view key, bool fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError("key '" + std::string(key) + "': expected a boolean, got '" + *v + "'");
}

std::string Config::get_string(std::string_view key, std::string fallback) const {
  auto v = raw(key);
  return v ? *v : fallback;
}

std::vector<std::uint64_t> Config::get_seeds(std::string_view key,
                                             std::vector<std::uint64_t> fallback) const {
  auto v = raw(key);
  if (!v) return fallback;
  return parse_seed_list(*v);
}

Config Config::subtree(std::string_view prefix) const {
  Config out;
  for (const auto& [k, v] : entries_) {
    if (k.size() > prefix.size() && std::string_view(k).substr(0, prefix.size()) == prefix) {
      out.set(k.substr(prefix.size()), v);
    }
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  text = trim(text);
  std::vector<std::uint64_t> seeds;
  if (auto dots = text.find(".."); dots != std::string_view::npos) {
    auto lo = parse_u64(text.substr(0, dots));
    auto hi = parse_u64(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("empty seed range '" + std::string(text) + "'");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  } else {
    while (!text.empty()) {
      auto comma = text.find(',');
      seeds.push_back(parse_u64(text.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      text = text.substr(comma + 1);
    }
  }
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

std::vector<std::uint64_t> default_seeds() { return parse_seed_list("1..20"); }

}  // namespace rlattack
