#pragma once

// TOML-like key/value files.
//
//   # comment
//   [engine]
//   num_aggregators = "per_node"   # or an integer >= 1
//   ranks_per_node = 4
//   [compression]
//   codec = "blosc-like"
//   level = 5
//   profiling = true               # top-level key (before any section)
//
// Keys may also be written fully dotted (`engine.num_aggregators = 2`).
// Values are integers, floats, booleans or double-quoted strings.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include "pmdio/codecs.hpp"

namespace pmdio {

class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text);
  static KeyValueFile load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& raw() const noexcept { return values_; }

  // Typed getters throw InvalidConfig on a malformed value.
  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<std::int64_t> get_int(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;

 private:
  // Quoted strings are stored unquoted; `quoted_` remembers which.
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> quoted_;
};

struct PerNode {
  bool operator==(const PerNode&) const = default;
};
using AggregationSetting = std::variant<int, PerNode>;

class WriteObserver;

enum class FileMode {
  // Aggregators keep their subfile open for the whole run.
  shared_handles,
  // Every rank owns its own subfile and reopens it on each flush, the
  // per-process baseline the aggregated layout is compared against.
  file_per_process,
};

struct EngineConfig {
  AggregationSetting num_aggregators = PerNode{};
  int ranks_per_node = 4;
  CodecConfig codec;
  bool profiling = true;
  bool overwrite = false;
  FileMode file_mode = FileMode::shared_handles;
  // Read back and re-checksum every appended chunk.
  bool verify_writes = false;
  // When set, each rank saves its monitor log here on close as rank<r>.oplog.
  std::filesystem::path monitor_log_dir;
  std::shared_ptr<WriteObserver> observer;
};

// Applies engine.*, compression.* and profiling keys; other keys are ignored.
// PMDIO_PROFILING=1 in the environment forces profiling on.
EngineConfig engine_config_from(const KeyValueFile& kv, EngineConfig base = {});
EngineConfig load_engine_config(const std::filesystem::path& path);
void apply_profiling_env(EngineConfig& config);

// Stable digest of the fields that all ranks must agree on.
std::uint64_t config_digest(const EngineConfig& config);

// FNV-1a, used for cross-rank agreement digests.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 14695981039346656037ull) noexcept;

}  // namespace pmdio
