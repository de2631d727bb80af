#pragma once

// Storage engine: aggregation planning, the instrumented append-only file
// layer, and the series reader.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmdio/config.hpp"
#include "pmdio/format.hpp"
#include "pmdio/monitor.hpp"
#include "pmdio/types.hpp"

namespace pmdio {

// Rank r writes to subfile floor(r * num_agg / n_ranks); subfile k holds ranks
// [ceil(k*n/m), ceil((k+1)*n/m)) and its lowest rank is the aggregator.
struct AggregatorMap {
  int n_ranks = 1;
  int num_agg = 1;
  bool clamped = false;  // requested count exceeded n_ranks

  int subfile_of(int rank) const noexcept;
  int first_rank(int subfile) const noexcept;
  int aggregator_of(int rank) const noexcept { return first_rank(subfile_of(rank)); }
  bool is_aggregator(int rank) const noexcept { return aggregator_of(rank) == rank; }
  std::vector<int> block(int subfile) const;
};

// Throws InvalidConfig for a setting of 0 or less, or ranks_per_node < 1.
AggregatorMap plan_aggregation(int n_ranks, const AggregationSetting& setting, int ranks_per_node);

// data files + md.0 + md.idx (+ profiling.json).
inline std::uint64_t count_output_files(std::uint64_t num_agg, bool profiling_enabled) {
  return num_agg + 2 + (profiling_enabled ? 1 : 0);
}

std::string subfile_name(int subfile);

// Raised when a chunk fails verification on read.
class CorruptChunkError : public Error {
 public:
  CorruptChunkError(std::uint32_t subfile, std::uint64_t offset, const std::string& why)
      : Error(Errc::corrupt_chunk, "subfile " + std::to_string(subfile) + " offset " + std::to_string(offset) +
                                       ": " + why),
        subfile_(subfile),
        offset_(offset) {}
  std::uint32_t subfile() const noexcept { return subfile_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint32_t subfile_;
  std::uint64_t offset_;
};

// Sees every physical append before it is issued and after it completes.
// Called from the writing rank's thread; implementations synchronize.
// Throwing from before_append aborts the write.
class WriteObserver {
 public:
  virtual ~WriteObserver() = default;
  virtual void before_append(const std::filesystem::path& file, std::uint64_t offset,
                             std::span<const std::byte> bytes) = 0;
  virtual void after_append(const std::filesystem::path&, std::uint64_t, std::uint64_t) {}
};

// An append-only file handle whose every operation is recorded in a monitor
// log. Appends always land at the current end of file.
class AppendFile {
 public:
  AppendFile() = default;
  AppendFile(const std::filesystem::path& path, MonitorLog& log, WriteObserver* observer, bool create);
  AppendFile(AppendFile&& other) noexcept;
  AppendFile& operator=(AppendFile&& other) noexcept;
  AppendFile(const AppendFile&) = delete;
  AppendFile& operator=(const AppendFile&) = delete;
  ~AppendFile();

  bool is_open() const noexcept { return fd_ >= 0; }
  std::uint64_t length() const noexcept { return length_; }
  const std::filesystem::path& path() const noexcept { return path_; }

  // Writes the pieces back to back in one append op; returns the offset of
  // the first byte.
  std::uint64_t append(std::span<const std::span<const std::byte>> pieces);
  std::uint64_t append(std::span<const std::byte> bytes);
  void read_at(std::uint64_t offset, std::span<std::byte> out);
  void sync();
  void close();

 private:
  std::filesystem::path path_;
  MonitorLog* log_ = nullptr;
  WriteObserver* observer_ = nullptr;
  int fd_ = -1;
  std::uint64_t length_ = 0;
};

struct ChunkInfo {
  std::uint32_t subfile = 0;
  std::uint64_t file_offset = 0;
  format::ChunkHeader header;
};

struct ComponentInfo {
  std::uint32_t variable_id = 0;
  Datatype datatype = Datatype::float64;
  Extent global_extent;
  std::vector<ChunkInfo> chunks;
  std::map<std::string, format::AttributeValue> attributes;
};

struct RecordInfo {
  RecordKind kind = RecordKind::mesh;
  std::map<std::string, ComponentInfo> components;
  std::map<std::string, format::AttributeValue> attributes;
};

struct IterationInfo {
  std::uint64_t index = 0;
  format::StepIndexRecord step_record;
  std::map<std::string, RecordInfo> records;
  std::map<std::string, format::AttributeValue> attributes;
};

struct FileEntry {
  std::string name;
  std::uint64_t size = 0;
};

struct Inventory {
  std::string path;
  std::vector<IterationInfo> iterations;
  std::vector<FileEntry> files;
  std::map<std::string, format::AttributeValue> series_attributes;
  std::size_t valid_step_records = 0;
};

// Read-only view of a series. Steps become visible only through a complete,
// valid md.idx record; for a step with several records the latest wins.
// Safe for concurrent reads from multiple threads.
class SeriesReader {
 public:
  static SeriesReader open(const std::filesystem::path& path);

  const std::filesystem::path& path() const noexcept { return path_; }
  std::vector<std::uint64_t> iterations() const;
  bool has_iteration(std::uint64_t index) const { return iterations_.count(index) != 0; }
  const IterationInfo& iteration(std::uint64_t index) const;
  const ComponentInfo& component(std::uint64_t iteration, const std::string& record,
                                 const std::string& component) const;
  const std::map<std::string, format::AttributeValue>& series_attributes() const noexcept {
    return series_attributes_;
  }
  // Every valid step record in write order, superseded ones included.
  const std::vector<format::StepIndexRecord>& step_records() const noexcept { return step_records_; }
  std::uint64_t md_length() const noexcept { return md_length_; }

  // Raw little-endian element bytes of a selection (the whole component when
  // absent), row-major. Regions no chunk covers read as zero.
  std::vector<std::byte> read(std::uint64_t iteration, const std::string& record, const std::string& component,
                              const std::optional<Selection>& selection = std::nullopt) const;

  template <class T>
  std::vector<T> read_as(std::uint64_t iteration, const std::string& record, const std::string& component,
                         const std::optional<Selection>& selection = std::nullopt) const;

  Inventory inventory() const;

 private:
  std::filesystem::path path_;
  std::map<std::uint64_t, IterationInfo> iterations_;
  std::map<std::string, format::AttributeValue> series_attributes_;
  std::vector<format::StepIndexRecord> step_records_;
  std::uint64_t md_length_ = 0;
};

// Decodes and verifies one chunk straight from its subfile: the on-disk header
// must match the indexed one byte for byte, padding must be zero and the
// payload checksum must match. Throws CorruptChunk{subfile, offset}.
std::vector<std::byte> read_chunk(const std::filesystem::path& series_path, const ChunkInfo& chunk);

Inventory list_contents(const std::filesystem::path& path);
std::string inventory_json(const Inventory& inv, bool pretty = true);
std::string inventory_text(const Inventory& inv);

template <class T>
std::vector<T> SeriesReader::read_as(std::uint64_t iteration, const std::string& record,
                                     const std::string& component, const std::optional<Selection>& selection) const {
  const auto& info = this->component(iteration, record, component);
  if (datatype_of<T>() != info.datatype)
    fail(Errc::invalid_argument, record + "/" + component + " is " + std::string(datatype_name(info.datatype)));
  auto bytes = read(iteration, record, component, selection);
  std::vector<T> out(bytes.size() / sizeof(T));
  if (!bytes.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace pmdio
