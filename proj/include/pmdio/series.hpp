#pragma once

// Parallel writer for one series. Every rank of a RankGroup opens the same
// series; open, flush, close_iteration and close are collective and must be
// called by all ranks in the same order.
//
// store_chunk is deferred: the caller's buffer must stay alive and unchanged
// until the next flush (or pass an owning vector). Attributes are taken from
// rank 0.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmdio/comm.hpp"
#include "pmdio/config.hpp"
#include "pmdio/engine.hpp"
#include "pmdio/format.hpp"
#include "pmdio/monitor.hpp"
#include "pmdio/types.hpp"

namespace pmdio {

enum class Access { create, append };

struct FlushStats {
  std::uint64_t iteration = 0;
  std::uint64_t chunk_count = 0;
  std::uint64_t bytes_raw = 0;
  std::uint64_t bytes_stored = 0;
  // Framed bytes appended to data files, headers and padding included.
  std::uint64_t bytes_framed = 0;
  double elapsed_s = 0;
};

class Series;
class Record;

class RecordComponent {
 public:
  RecordComponent(Series* series, std::uint64_t iteration, std::string record, std::string component)
      : series_(series), iteration_(iteration), record_(std::move(record)), component_(std::move(component)) {}

  // Collective in effect: all ranks must make the same definitions before the
  // next flush. Redefining with a different type or extent is AlreadyDefined.
  RecordComponent& define(Datatype type, const Extent& global_extent);

  template <class T>
  void store_chunk(std::span<const T> data, const Offset& offset, const Extent& extent) {
    static_assert(datatype_of<T>().has_value(), "unsupported element type");
    store_raw(*datatype_of<T>(), std::as_bytes(data), data.size(), offset, extent, nullptr);
  }
  template <class T>
  void store_chunk(std::vector<T>&& data, const Offset& offset, const Extent& extent) {
    static_assert(datatype_of<T>().has_value(), "unsupported element type");
    auto owned = std::make_shared<std::vector<T>>(std::move(data));
    store_raw(*datatype_of<T>(), std::as_bytes(std::span<const T>(*owned)), owned->size(), offset, extent, owned);
  }

  void set_attribute(const std::string& key, format::AttributeValue value);

  void store_raw(Datatype type, std::span<const std::byte> bytes, std::size_t elements, const Offset& offset,
                 const Extent& extent, std::shared_ptr<const void> keep_alive);

 private:
  Series* series_;
  std::uint64_t iteration_;
  std::string record_;
  std::string component_;
};

class Record {
 public:
  Record(Series* series, std::uint64_t iteration, std::string name)
      : series_(series), iteration_(iteration), name_(std::move(name)) {}
  RecordComponent operator[](const std::string& component) const {
    return RecordComponent(series_, iteration_, name_, component);
  }
  void set_attribute(const std::string& key, format::AttributeValue value);

 private:
  Series* series_;
  std::uint64_t iteration_;
  std::string name_;
};

class Iteration {
 public:
  Iteration(Series* series, std::uint64_t index) : series_(series), index_(index) {}
  std::uint64_t index() const noexcept { return index_; }
  Record mesh(const std::string& name);
  Record particles(const std::string& species);
  void set_attribute(const std::string& key, format::AttributeValue value);
  void close();

 private:
  Series* series_;
  std::uint64_t index_;
};

class Series {
 public:
  static std::unique_ptr<Series> open(const std::filesystem::path& path, Access access, RankGroup& group,
                                      EngineConfig config = {});
  ~Series();
  Series(const Series&) = delete;
  Series& operator=(const Series&) = delete;

  // Opens (or returns the already open) iteration. Only one iteration may be
  // open at a time; asking for another one is IterationBusy. Asking again for
  // an iteration that was already closed starts a rewrite of it.
  Iteration create_iteration(std::uint64_t index);
  void set_attribute(const std::string& key, format::AttributeValue value);
  // Takes effect at the next flush; all ranks must make the same change.
  void set_codec(const CodecConfig& codec);

  FlushStats flush();
  FlushStats close_iteration(std::uint64_t index);
  void close();

  const std::filesystem::path& path() const noexcept { return path_; }
  const AggregatorMap& aggregation() const noexcept { return map_; }
  const EngineConfig& config() const noexcept { return config_; }
  MonitorLog& monitor() noexcept { return log_; }
  std::int64_t compress_ns() const noexcept { return compress_ns_; }
  std::optional<std::uint64_t> open_iteration() const noexcept { return open_; }
  // Iterations committed so far, including ones found on open in append mode.
  const std::vector<std::uint64_t>& committed() const noexcept { return committed_; }
  RankGroup& group() noexcept { return group_; }

 private:
  friend class RecordComponent;
  friend class Record;
  friend class Iteration;

  struct PendingChunk {
    Offset offset;
    Extent extent;
    std::span<const std::byte> bytes;
    std::shared_ptr<const void> keep_alive;
  };
  struct ComponentState {
    std::optional<Datatype> datatype;
    Extent extent;
    std::vector<PendingChunk> pending;
  };
  struct RecordState {
    RecordKind kind = RecordKind::mesh;
    std::map<std::string, ComponentState> components;
  };
  struct IterationState {
    std::map<std::string, RecordState> records;
    std::vector<format::AttributeEntry> attributes;  // unflushed
    bool has_block = false;
    std::uint64_t md_offset = 0;
    std::uint64_t md_length = 0;
  };

  Series(const std::filesystem::path& path, RankGroup& group, EngineConfig config);
  IterationState& state(std::uint64_t index);
  RecordState& record_state(std::uint64_t iteration, const std::string& record, RecordKind kind);
  void add_attribute(std::uint64_t iteration, format::AttributeEntry entry);
  std::uint32_t variable_id(const std::string& record, const std::string& component);
  std::uint64_t definition_digest() const;
  AppendFile& data_file(int subfile);
  void fail_iteration();

  std::filesystem::path path_;
  RankGroup& group_;
  EngineConfig config_;
  AggregatorMap map_;
  MonitorLog log_;
  std::int64_t compress_ns_ = 0;

  std::optional<std::uint64_t> open_;
  std::map<std::uint64_t, IterationState> iterations_;
  std::vector<std::uint64_t> committed_;
  std::map<std::string, format::AttributeValue> series_attributes_;
  std::map<std::string, std::uint32_t> variable_ids_;
  bool closed_ = false;

  AppendFile data_;  // shared_handles mode, aggregators only
  AppendFile md0_;   // rank 0
  AppendFile idx_;   // rank 0
};

}  // namespace pmdio
