#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "seeding.hpp"

#ifndef DPTL_VERSION
#define DPTL_VERSION "0.1.0"
#endif

namespace dptl::cli {

inline constexpr std::string_view kVersion = DPTL_VERSION;

//! Flat key = value configuration. '#' starts a comment; blank lines are
//! ignored; later assignments override earlier ones. Every key must be read
//! by the command that consumes the file, see `check_all_used`.
class Config
{
public:
  static Config parse(std::istream& in, const std::string& origin = "<config>")
  {
    Config c;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (auto hash = line.find('#'); hash != std::string::npos)
        line.erase(hash);
      const auto body = trim(line);
      if (body.empty())
        continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(origin + ":" + std::to_string(no) + ": expected key = value");
      const auto key = trim(body.substr(0, eq));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(no) + ": empty key");
      c.set(std::string(key), std::string(trim(body.substr(eq + 1))));
    }
    return c;
  }

  static Config from_file(const std::string& path)
  {
    std::ifstream in(path);
    if (!in)
      throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const
  {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const
  {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : to_double(key, it->second);
  }

  std::optional<double> get_optional_double(const std::string& key) const
  {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end())
      return std::nullopt;
    return to_double(key, it->second);
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const
  {
    const double v = get_double(key, static_cast<double>(fallback));
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e15)
      throw ConfigError("config key '" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const
  {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end())
      return fallback;
    std::uint64_t v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ConfigError("config key '" + key + "' must be an unsigned integer");
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const
  {
    const auto s = get_string(key, fallback ? "true" : "false");
    if (s == "true" || s == "1" || s == "yes")
      return true;
    if (s == "false" || s == "0" || s == "no")
      return false;
    throw ConfigError("config key '" + key + "' must be true or false");
  }

  //! Comma-separated list, or lin:lo:hi:count / log:lo:hi:count.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const
  {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end())
      return fallback;
    const auto& s = it->second;
    if (s.rfind("lin:", 0) == 0 || s.rfind("log:", 0) == 0) {
      const auto parts = split(s.substr(4), ':');
      if (parts.size() != 3)
        throw ConfigError("config key '" + key + "': range form is lin|log:lo:hi:count");
      const double lo = to_double(key, parts[0]);
      const double hi = to_double(key, parts[1]);
      const double cnt = to_double(key, parts[2]);
      if (!(cnt >= 1.0) || cnt != std::floor(cnt))
        throw ConfigError("config key '" + key + "': count must be a positive integer");
      const bool logs = s[1] == 'o';
      if (logs && !(lo > 0.0 && hi > 0.0))
        throw ConfigError("config key '" + key + "': log range needs positive endpoints");
      const auto n = static_cast<std::size_t>(cnt);
      std::vector<double> out(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        out[i] = logs ? std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))) : lo + t * (hi - lo);
      }
      return out;
    }
    std::vector<double> out;
    for (const auto& p : split(s, ','))
      out.push_back(to_double(key, p));
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const
  {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end())
      return fallback;
    return split(it->second, ',');
  }

  //! Throws on keys that no getter asked for (typos, wrong subcommand).
  void check_all_used() const
  {
    std::string unknown;
    for (const auto& [k, v] : values_)
      if (!used_.count(k))
        unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty())
      throw ConfigError("unknown config keys: " + unknown);
  }

  //! Sorted key = value lines.
  std::string canonical() const
  {
    std::string s;
    for (const auto& [k, v] : values_)
      s += k + " = " + v + "\n";
    return s;
  }

private:
  static std::string_view trim(std::string_view s) noexcept
  {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
      s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
      s.remove_suffix(1);
    return s;
  }

  static std::vector<std::string> split(const std::string& s, char delim)
  {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, delim)) {
      const auto t = trim(cur);
      if (!t.empty())
        out.emplace_back(t);
    }
    return out;
  }

  static double to_double(const std::string& key, const std::string& s)
  {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ConfigError("config key '" + key + "': cannot parse '" + s + "' as a number");
    return v;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

//! Config echo plus version; its hash tags every output file of a run.
struct Manifest
{
  std::string command;
  std::string config;
  std::string version{ kVersion };

  std::string text() const
  {
    return "command = " + command + "\nversion = " + version + "\n" + config;
  }

  std::string hash() const
  {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text())));
    return buf;
  }
};

} // namespace dptl::cli
