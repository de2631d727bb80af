#include "pmdio/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pmdio/error.hpp"

namespace pmdio {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
  return true;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text) {
  KeyValueFile kv;
  std::string section;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(strip_comment(text.substr(pos, end - pos)));
    pos = end + 1;
    ++lineno;
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') fail(Errc::parse_error, where + ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!valid_key(section)) fail(Errc::parse_error, where + ": bad section name");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(Errc::parse_error, where + ": expected key = value");
    auto key = std::string(trim(line.substr(0, eq)));
    auto value = trim(line.substr(eq + 1));
    if (!valid_key(key)) fail(Errc::parse_error, where + ": bad key '" + key + "'");
    if (value.empty()) fail(Errc::parse_error, where + ": missing value for '" + key + "'");
    if (!section.empty()) key = section + "." + key;
    bool quoted = false;
    std::string stored;
    if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') fail(Errc::parse_error, where + ": unterminated string");
      stored = std::string(value.substr(1, value.size() - 2));
      quoted = true;
    } else {
      stored = std::string(value);
    }
    if (kv.values_.count(key)) fail(Errc::parse_error, where + ": duplicate key '" + key + "'");
    kv.values_[key] = stored;
    kv.quoted_[key] = quoted;
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::not_found, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::optional<std::string> KeyValueFile::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::int64_t> KeyValueFile::get_int(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  const auto& s = it->second;
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || quoted_.at(key))
    fail(Errc::invalid_config, "'" + key + "' must be an integer, got '" + s + "'");
  return v;
}

std::optional<double> KeyValueFile::get_double(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  const auto& s = it->second;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || quoted_.at(key))
    fail(Errc::invalid_config, "'" + key + "' must be a number, got '" + s + "'");
  return v;
}

std::optional<bool> KeyValueFile::get_bool(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  if (it->second == "true" && !quoted_.at(key)) return true;
  if (it->second == "false" && !quoted_.at(key)) return false;
  fail(Errc::invalid_config, "'" + key + "' must be true or false, got '" + it->second + "'");
}

EngineConfig engine_config_from(const KeyValueFile& kv, EngineConfig config) {
  if (auto s = kv.get_string("engine.num_aggregators")) {
    if (*s == "per_node") {
      config.num_aggregators = PerNode{};
    } else {
      auto n = kv.get_int("engine.num_aggregators");
      if (*n < 1) fail(Errc::invalid_config, "engine.num_aggregators must be >= 1 or \"per_node\"");
      config.num_aggregators = static_cast<int>(*n);
    }
  }
  if (auto n = kv.get_int("engine.ranks_per_node")) {
    if (*n < 1) fail(Errc::invalid_config, "engine.ranks_per_node must be >= 1");
    config.ranks_per_node = static_cast<int>(*n);
  }
  if (auto b = kv.get_bool("engine.file_per_process"))
    config.file_mode = *b ? FileMode::file_per_process : FileMode::shared_handles;
  if (auto b = kv.get_bool("engine.verify_writes")) config.verify_writes = *b;
  if (auto s = kv.get_string("compression.codec")) {
    auto id = codec_from_name(*s);
    if (!id) fail(Errc::invalid_config, "compression.codec must be none, blosc-like or bzip2-like, got '" + *s + "'");
    config.codec.id = *id;
  }
  if (auto n = kv.get_int("compression.level")) {
    if (*n < 0 || *n > 9) fail(Errc::invalid_config, "compression.level must be in 0..9");
    config.codec.level = static_cast<int>(*n);
  }
  if (auto b = kv.get_bool("compression.shuffle")) config.codec.shuffle = *b;
  if (auto b = kv.get_bool("profiling")) config.profiling = *b;
  apply_profiling_env(config);
  return config;
}

EngineConfig load_engine_config(const std::filesystem::path& path) {
  return engine_config_from(KeyValueFile::load(path));
}

void apply_profiling_env(EngineConfig& config) {
  if (const char* v = std::getenv("PMDIO_PROFILING"); v && std::string_view(v) == "1") config.profiling = true;
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t config_digest(const EngineConfig& c) {
  std::ostringstream ss;
  if (auto* n = std::get_if<int>(&c.num_aggregators)) ss << "agg=" << *n;
  else ss << "agg=per_node";
  ss << ";rpn=" << c.ranks_per_node << ";codec=" << static_cast<int>(c.codec.id) << ";level=" << c.codec.level
     << ";shuffle=" << c.codec.shuffle << ";profiling=" << c.profiling << ";overwrite=" << c.overwrite
     << ";mode=" << static_cast<int>(c.file_mode) << ";verify=" << c.verify_writes;
  return fnv1a(ss.str());
}

}  // namespace pmdio
