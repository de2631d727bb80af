#include "pmdio/bench.hpp"

#include <fcntl.h>
#include <sys/statvfs.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <json.hpp>
#include <sstream>

#include "pmdio/comm.hpp"
#include "pmdio/series.hpp"

namespace pmdio {

namespace fs = std::filesystem;

void validate(const BenchSpec& s) {
  if (s.tasks < 1) fail(Errc::invalid_config, "tasks must be >= 1");
  if (s.repetitions < 1) fail(Errc::invalid_config, "repetitions must be >= 1");
  if (s.transfer_size == 0 || s.transfer_size % 8 != 0)
    fail(Errc::invalid_config, "transfer size must be a positive multiple of 8");
  if (s.block_size == 0 || s.block_size % s.transfer_size != 0)
    fail(Errc::invalid_config, "block size must be a positive multiple of the transfer size");
  if (s.dir.empty()) fail(Errc::invalid_config, "bench directory not set");
}

std::uint64_t bench_pattern(int rank, std::uint64_t word) {
  return (static_cast<std::uint64_t>(rank) + 1) * 0x9E3779B97F4A7C15ull ^ (word * 0xD6E8FEB86659FD93ull);
}

namespace {

void check_space(const fs::path& dir, std::uint64_t needed) {
  struct statvfs st {};
  if (::statvfs(dir.c_str(), &st) != 0) fail(Errc::io_error, "statvfs " + dir.string() + ": " + std::strerror(errno));
  const auto avail = static_cast<std::uint64_t>(st.f_bavail) * st.f_frsize;
  if (avail < needed)
    fail(Errc::io_error, "insufficient disk space in " + dir.string() + ": need " + std::to_string(needed) +
                             " bytes, " + std::to_string(avail) + " available");
}

fs::path bench_file(const BenchSpec& s, int rank) {
  return s.mode == BenchMode::shared ? s.dir / "bench.shared" : s.dir / ("bench." + std::to_string(rank));
}

struct RankOutcome {
  MonitorLog log;
  std::int64_t w0 = 0, w1 = 0, r0 = 0, r1 = 0;
  std::uint64_t verify_errors = 0;
};

int open_or_fail(MonitorLog& log, const fs::path& p, int flags) {
  int fd = log.record(OpKind::open, 0, [&] { return ::open(p.c_str(), flags | O_CLOEXEC, 0644); });
  if (fd < 0) fail(Errc::io_error, "open " + p.string() + ": " + std::strerror(errno));
  return fd;
}

void close_or_fail(MonitorLog& log, int fd, const fs::path& p) {
  if (log.record(OpKind::close, 0, [&] { return ::close(fd); }) != 0)
    fail(Errc::io_error, "close " + p.string() + ": " + std::strerror(errno));
}

RankOutcome bench_rank(const BenchSpec& s, RankGroup& g) {
  RankOutcome out{MonitorLog(g.rank())};
  auto& log = out.log;
  const int rank = g.rank();
  const auto base = s.mode == BenchMode::shared ? static_cast<std::uint64_t>(rank) * s.block_size : 0;
  const auto words_per_transfer = s.transfer_size / 8;
  const auto transfers = s.block_size / s.transfer_size;
  // The whole block is filled up front so the timed loops hold only I/O calls.
  std::vector<std::uint64_t> buf(s.block_size / 8);
  for (std::uint64_t w = 0; w < buf.size(); ++w) buf[w] = bench_pattern(rank, w);

  if (s.mode == BenchMode::file_per_process || rank == 0) {
    std::error_code ec;
    fs::remove(bench_file(s, rank), ec);
  }
  g.barrier();

  const auto path = bench_file(s, rank);
  int fd = open_or_fail(log, path, O_WRONLY | O_CREAT);
  g.barrier();
  out.w0 = monotonic_ns();
  for (std::uint64_t t = 0; t < transfers; ++t) {
    const auto off = base + t * s.transfer_size;
    const auto* p = reinterpret_cast<const char*>(buf.data() + t * words_per_transfer);
    log.record(OpKind::write, s.transfer_size, [&] {
      std::size_t done = 0;
      while (done < s.transfer_size) {
        ssize_t n = ::pwrite(fd, p + done, s.transfer_size - done, static_cast<off_t>(off + done));
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) fail(Errc::io_error, "write " + path.string() + ": " + std::strerror(errno));
        done += static_cast<std::size_t>(n);
      }
    });
  }
  out.w1 = monotonic_ns();
  if (s.fsync_on_close && log.record(OpKind::fsync, 0, [&] { return ::fsync(fd); }) != 0)
    fail(Errc::io_error, "fsync " + path.string() + ": " + std::strerror(errno));
  close_or_fail(log, fd, path);
  g.barrier();

  const int src = s.reorder_readback ? (rank + 1) % g.size() : rank;
  const auto src_path = bench_file(s, src);
  const auto src_base = s.mode == BenchMode::shared ? static_cast<std::uint64_t>(src) * s.block_size : 0;
  fd = open_or_fail(log, src_path, O_RDONLY);
  std::fill(buf.begin(), buf.end(), 0);
  out.r0 = monotonic_ns();
  for (std::uint64_t t = 0; t < transfers; ++t) {
    const auto off = src_base + t * s.transfer_size;
    auto* p = reinterpret_cast<char*>(buf.data() + t * words_per_transfer);
    log.record(OpKind::read, s.transfer_size, [&] {
      std::size_t done = 0;
      while (done < s.transfer_size) {
        ssize_t n = ::pread(fd, p + done, s.transfer_size - done, static_cast<off_t>(off + done));
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) fail(Errc::io_error, "read " + src_path.string() + ": short read");
        done += static_cast<std::size_t>(n);
      }
    });
  }
  out.r1 = monotonic_ns();
  for (std::uint64_t w = 0; w < buf.size(); ++w)
    if (buf[w] != bench_pattern(src, w)) ++out.verify_errors;
  close_or_fail(log, fd, src_path);
  return out;
}

double gibps(std::uint64_t bytes, double s) {
  return s > 0 ? static_cast<double>(bytes) / (1024.0 * 1024.0 * 1024.0) / s : 0.0;
}

std::vector<FileEntry> census(const fs::path& dir, const std::string& prefix) {
  std::vector<FileEntry> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename().string().rfind(prefix, 0) == 0)
      files.push_back({e.path().filename().string(), static_cast<std::uint64_t>(e.file_size())});
  std::sort(files.begin(), files.end(), [](auto& a, auto& b) { return a.name < b.name; });
  return files;
}

}  // namespace

BenchResult run_bench(const BenchSpec& spec) {
  validate(spec);
  fs::create_directories(spec.dir);
  const auto total = static_cast<std::uint64_t>(spec.tasks) * spec.block_size;
  check_space(spec.dir, total);

  BenchResult result;
  result.spec = spec;
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    auto outcomes = spawn_group(spec.tasks, [&](RankGroup& g) { return bench_rank(spec, g); });
    BenchRep r;
    r.bytes = total;
    auto w0 = outcomes[0].w0, w1 = outcomes[0].w1, r0 = outcomes[0].r0, r1 = outcomes[0].r1;
    std::vector<MonitorLog> logs;
    for (auto& o : outcomes) {
      w0 = std::min(w0, o.w0);
      w1 = std::max(w1, o.w1);
      r0 = std::min(r0, o.r0);
      r1 = std::max(r1, o.r1);
      r.verify_errors += o.verify_errors;
      logs.push_back(std::move(o.log));
    }
    r.write_s = static_cast<double>(w1 - w0) * 1e-9;
    r.read_s = static_cast<double>(r1 - r0) * 1e-9;
    r.write_gibps = gibps(total, r.write_s);
    r.read_gibps = gibps(total, r.read_s);
    result.report = merge_logs(logs);
    r.monitor_write_gibps = result.report.write_gibps();
    result.reps.push_back(r);
    result.files = census(spec.dir, "bench.");
  }
  if (!spec.keep_files)
    for (const auto& f : result.files) fs::remove(spec.dir / f.name);
  return result;
}

double BenchResult::mean_write_gibps() const {
  double s = 0;
  for (const auto& r : reps) s += r.write_gibps;
  return reps.empty() ? 0 : s / static_cast<double>(reps.size());
}

double BenchResult::mean_read_gibps() const {
  double s = 0;
  for (const auto& r : reps) s += r.read_gibps;
  return reps.empty() ? 0 : s / static_cast<double>(reps.size());
}

std::uint64_t BenchResult::verify_errors() const {
  std::uint64_t n = 0;
  for (const auto& r : reps) n += r.verify_errors;
  return n;
}

std::string bench_text(const BenchResult& res) {
  std::ostringstream out;
  const auto& s = res.spec;
  out << "tasks " << s.tasks << "  mode " << (s.mode == BenchMode::shared ? "shared" : "file-per-process")
      << "  transfer " << s.transfer_size << "  block " << s.block_size << "  reorder "
      << (s.reorder_readback ? "yes" : "no") << "  fsync " << (s.fsync_on_close ? "yes" : "no") << '\n';
  out << "rep   write_GiB/s   read_GiB/s   monitor_write_GiB/s   verify_errors\n";
  char line[128];
  for (std::size_t i = 0; i < res.reps.size(); ++i) {
    const auto& r = res.reps[i];
    std::snprintf(line, sizeof line, "%3zu  %12.4f  %11.4f  %20.4f  %14llu\n", i, r.write_gibps, r.read_gibps,
                  r.monitor_write_gibps, static_cast<unsigned long long>(r.verify_errors));
    out << line;
  }
  std::snprintf(line, sizeof line, "mean write %.4f GiB/s  mean read %.4f GiB/s\n", res.mean_write_gibps(),
                res.mean_read_gibps());
  out << line;
  out << "files:";
  for (const auto& f : res.files) out << ' ' << f.name << '(' << f.size << ')';
  out << '\n';
  return out.str();
}

std::string bench_json(const BenchResult& res) {
  const auto& s = res.spec;
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : res.reps)
    reps.push_back({{"write_s", r.write_s},
                    {"read_s", r.read_s},
                    {"write_gibps", r.write_gibps},
                    {"read_gibps", r.read_gibps},
                    {"monitor_write_gibps", r.monitor_write_gibps},
                    {"bytes", r.bytes},
                    {"verify_errors", r.verify_errors}});
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : res.files) files.push_back({{"name", f.name}, {"size", f.size}});
  nlohmann::json doc = {{"tasks", s.tasks},
                        {"mode", s.mode == BenchMode::shared ? "shared" : "file_per_process"},
                        {"transfer_size", s.transfer_size},
                        {"block_size", s.block_size},
                        {"reorder_readback", s.reorder_readback},
                        {"fsync_on_close", s.fsync_on_close},
                        {"repetitions", reps},
                        {"write_gibps", res.mean_write_gibps()},
                        {"read_gibps", res.mean_read_gibps()},
                        {"files", files}};
  return doc.dump(2) + "\n";
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  if (spec.ranks < 1) fail(Errc::invalid_config, "sweep needs at least one rank");
  if (spec.steps < 1) fail(Errc::invalid_config, "sweep needs at least one step");
  if (spec.elements_per_rank == 0) fail(Errc::invalid_config, "sweep needs a non-empty chunk per rank");
  if (spec.dir.empty()) fail(Errc::invalid_config, "sweep directory not set");
  fs::create_directories(spec.dir);
  const std::uint64_t payload = static_cast<std::uint64_t>(spec.ranks) * static_cast<std::uint64_t>(spec.steps) *
                                spec.elements_per_rank * sizeof(double);
  check_space(spec.dir, payload * 2);

  std::vector<SweepRow> rows;
  for (int m : spec.aggregators) {
    EngineConfig cfg;
    cfg.num_aggregators = m;
    cfg.codec = spec.codec;
    cfg.profiling = true;
    cfg.overwrite = true;
    const auto path = spec.dir / ("sweep_agg" + std::to_string(m) + ".bp4");
    struct Out {
      MonitorLog log;
      std::uint64_t raw = 0;
      int num_agg = 0;
    };
    auto outs = spawn_group(spec.ranks, [&](RankGroup& g) {
      auto series = Series::open(path, Access::create, g, cfg);
      const auto E = spec.elements_per_rank;
      std::vector<double> data(E);
      Out o{MonitorLog(g.rank())};
      for (int step = 1; step <= spec.steps; ++step) {
        for (std::uint64_t i = 0; i < E; ++i)
          data[i] = static_cast<double>(step) + 1e-3 * static_cast<double>(g.rank()) + 1e-9 * static_cast<double>(i);
        auto it = series->create_iteration(static_cast<std::uint64_t>(step));
        auto rc = it.mesh("field")["x"];
        rc.define(Datatype::float64, {E * static_cast<std::uint64_t>(g.size())});
        rc.store_chunk(std::span<const double>(data), {E * static_cast<std::uint64_t>(g.rank())}, {E});
        o.raw += series->close_iteration(static_cast<std::uint64_t>(step)).bytes_raw;
      }
      series->close();
      o.num_agg = series->aggregation().num_agg;
      o.log = series->monitor();
      return o;
    });
    std::vector<MonitorLog> logs;
    for (auto& o : outs) logs.push_back(std::move(o.log));
    const auto report = merge_logs(logs);
    const auto cost = io_cost_breakdown(report);
    SweepRow row;
    row.num_agg = outs[0].num_agg;
    row.ranks = spec.ranks;
    row.steps = spec.steps;
    for (const auto& f : list_contents(path).files)
      if (f.name.rfind("data.", 0) == 0) ++row.data_files;
    row.payload_bytes = outs[0].raw;
    row.bytes_written = report.total_bytes_written();
    row.write_s = cost.avg_write_s;
    row.meta_s = cost.avg_meta_s;
    row.meta_ops = report.total_meta_ops();
    row.write_gibps = report.write_gibps();
    rows.push_back(row);
    if (!spec.keep_files) fs::remove_all(path);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << kSweepCsvHeader << '\n';
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d,%d,%d,%llu,%llu,%llu,%.6f,%.6f,%llu,%.6f\n", r.num_agg, r.ranks, r.steps,
                  static_cast<unsigned long long>(r.data_files), static_cast<unsigned long long>(r.payload_bytes),
                  static_cast<unsigned long long>(r.bytes_written), r.write_s, r.meta_s,
                  static_cast<unsigned long long>(r.meta_ops), r.write_gibps);
    out << line;
  }
  return out.str();
}

}  // namespace pmdio
