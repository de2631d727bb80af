#pragma once

// I/O cost accounting at the engine's file-operation layer.
//
// Every file operation the engine issues is wrapped by MonitorLog::record,
// which times it on a process-wide monotonic clock and files it under exactly
// one category. Per-rank logs merge into an AggregateReport; merging is
// associative and order-independent because all accumulators are integers.

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "pmdio/error.hpp"

namespace pmdio {

enum class Category : std::uint8_t { read = 0, write = 1, metadata = 2 };
// append: write at end of file; write: positioned write.
enum class OpKind : std::uint8_t { open = 0, close, seek, append, read, stat, fsync, memcpy, write };

inline constexpr std::size_t kOpKindCount = 9;

constexpr Category category_of(OpKind op) noexcept {
  switch (op) {
    case OpKind::append:
    case OpKind::write:
    case OpKind::memcpy: return Category::write;
    case OpKind::read: return Category::read;
    default: return Category::metadata;
  }
}

std::string_view category_name(Category c) noexcept;
std::string_view op_name(OpKind op) noexcept;

// Nanoseconds on the process-wide steady clock.
std::int64_t monotonic_ns() noexcept;

struct OpRecord {
  int rank = 0;
  Category category = Category::metadata;
  OpKind op = OpKind::open;
  std::uint64_t bytes = 0;
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;

  std::int64_t duration_ns() const noexcept { return t_end - t_start; }
  bool operator==(const OpRecord&) const = default;
};

class MonitorLog {
 public:
  using Clock = std::int64_t (*)() noexcept;

  explicit MonitorLog(int rank = 0, Clock clock = &monotonic_ns) : rank_(rank), clock_(clock) {}

  // Runs f() and appends one OpRecord for it. Wraps do not nest.
  template <class F>
  decltype(auto) record(OpKind op, std::uint64_t bytes, F&& f) {
    if (active_) fail(Errc::invalid_argument, "nested monitor record");
    active_ = true;
    const auto start = clock_();
    struct Finish {
      MonitorLog& log;
      OpKind op;
      std::uint64_t bytes;
      std::int64_t start;
      ~Finish() {
        log.records_.push_back({log.rank_, category_of(op), op, bytes, start, log.clock_()});
        log.active_ = false;
      }
    } finish{*this, op, bytes, start};
    return std::forward<F>(f)();
  }

  void add(const OpRecord& r) { records_.push_back(r); }
  int rank() const noexcept { return rank_; }
  const std::vector<OpRecord>& records() const noexcept { return records_; }
  void clear() { records_.clear(); }

  std::uint64_t count(OpKind op) const noexcept;
  std::uint64_t count(Category c) const noexcept;
  std::int64_t total_ns(OpKind op) const noexcept;
  std::int64_t total_ns(Category c) const noexcept;
  std::uint64_t bytes(OpKind op) const noexcept;

  // Text form: a header line then one comma-separated record per line.
  void save(const std::filesystem::path& path) const;
  static MonitorLog load(const std::filesystem::path& path);

 private:
  int rank_;
  Clock clock_;
  bool active_ = false;
  std::vector<OpRecord> records_;
};

// Power-of-two access-size bins from 64 B to 1 GiB: bin 0 holds sizes <= 64 B,
// bin i holds (2^(5+i), 2^(6+i)]; the last bin also takes anything above 1 GiB.
inline constexpr std::size_t kHistogramBins = 25;
std::size_t histogram_bin(std::uint64_t bytes) noexcept;

struct RankTotals {
  std::int64_t read_ns = 0;
  std::int64_t write_ns = 0;
  std::int64_t meta_ns = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::array<std::uint64_t, kOpKindCount> op_counts{};

  std::uint64_t meta_ops() const noexcept;
  bool operator==(const RankTotals&) const = default;
};

struct AggregateReport {
  std::map<int, RankTotals> ranks;
  // Span of write-category ops, and of all ops. Empty spans are 0/0.
  std::int64_t write_t_min = 0;
  std::int64_t write_t_max = 0;
  bool has_writes = false;
  std::int64_t t_min = 0;
  std::int64_t t_max = 0;
  bool has_ops = false;
  std::array<std::uint64_t, kHistogramBins> access_histogram{};

  std::uint64_t total_bytes_written() const noexcept;
  std::uint64_t total_bytes_read() const noexcept;
  std::uint64_t total_meta_ops() const noexcept;
  double wall_span_s() const noexcept;
  double write_span_s() const noexcept;
  // total bytes written / write span, in GiB/s; 0 when nothing was written.
  double write_gibps() const noexcept;

  bool operator==(const AggregateReport&) const = default;
};

AggregateReport merge_logs(std::span<const MonitorLog> logs);
AggregateReport merge_records(std::span<const OpRecord> records);
AggregateReport merge(const AggregateReport& a, const AggregateReport& b);

struct CostBreakdown {
  double avg_read_s = 0;
  double avg_write_s = 0;
  double avg_meta_s = 0;
  double share_read = 0;
  double share_write = 0;
  double share_meta = 0;
};

CostBreakdown io_cost_breakdown(const AggregateReport& report);

// Per-rank engine timers written to profiling.json.
struct EngineTimers {
  int rank = 0;
  std::uint64_t bytes_written = 0;
  double meta_us = 0;
  double write_us = 0;
  double memcpy_us = 0;
  double compress_us = 0;
};

EngineTimers timers_from_log(const MonitorLog& log, std::int64_t compress_ns);
void write_profile_json(const std::filesystem::path& path, std::span<const EngineTimers> timers);
std::vector<EngineTimers> read_profile_json(const std::filesystem::path& path);

enum class ReportFormat { text, csv, json };
std::string render_report(const AggregateReport& report, ReportFormat format);

// Loads every *.oplog file in `dir` and merges them.
AggregateReport load_report_dir(const std::filesystem::path& dir);

}  // namespace pmdio
