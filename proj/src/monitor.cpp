#include "pmdio/monitor.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

namespace pmdio {

namespace {

const auto kEpoch = std::chrono::steady_clock::now();

constexpr std::array<std::string_view, kOpKindCount> kOpNames{"open",  "close", "seek",  "append",
                                                              "read", "stat",  "fsync", "memcpy", "write"};

double ns_to_s(std::int64_t ns) { return static_cast<double>(ns) * 1e-9; }
double ns_to_us(std::int64_t ns) { return static_cast<double>(ns) * 1e-3; }

void accumulate(AggregateReport& report, const OpRecord& r) {
  auto& t = report.ranks[r.rank];
  const auto d = r.duration_ns();
  switch (r.category) {
    case Category::read:
      t.read_ns += d;
      t.bytes_read += r.bytes;
      break;
    case Category::write:
      t.write_ns += d;
      // staging copies cost write time but move no bytes to storage
      if (r.op != OpKind::memcpy) t.bytes_written += r.bytes;
      break;
    case Category::metadata: t.meta_ns += d; break;
  }
  t.op_counts[static_cast<std::size_t>(r.op)]++;
  if (r.category == Category::write) {
    report.write_t_min = report.has_writes ? std::min(report.write_t_min, r.t_start) : r.t_start;
    report.write_t_max = report.has_writes ? std::max(report.write_t_max, r.t_end) : r.t_end;
    report.has_writes = true;
  }
  report.t_min = report.has_ops ? std::min(report.t_min, r.t_start) : r.t_start;
  report.t_max = report.has_ops ? std::max(report.t_max, r.t_end) : r.t_end;
  report.has_ops = true;
  if (r.bytes > 0 && r.op != OpKind::memcpy) report.access_histogram[histogram_bin(r.bytes)]++;
}

}  // namespace

std::string_view category_name(Category c) noexcept {
  switch (c) {
    case Category::read: return "read";
    case Category::write: return "write";
    case Category::metadata: return "metadata";
  }
  return "unknown";
}

std::string_view op_name(OpKind op) noexcept { return kOpNames[static_cast<std::size_t>(op)]; }

std::int64_t monotonic_ns() noexcept {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - kEpoch).count();
}

std::uint64_t MonitorLog::count(OpKind op) const noexcept {
  return static_cast<std::uint64_t>(std::count_if(records_.begin(), records_.end(), [&](auto& r) { return r.op == op; }));
}

std::uint64_t MonitorLog::count(Category c) const noexcept {
  return static_cast<std::uint64_t>(
      std::count_if(records_.begin(), records_.end(), [&](auto& r) { return r.category == c; }));
}

std::int64_t MonitorLog::total_ns(OpKind op) const noexcept {
  std::int64_t sum = 0;
  for (const auto& r : records_)
    if (r.op == op) sum += r.duration_ns();
  return sum;
}

std::int64_t MonitorLog::total_ns(Category c) const noexcept {
  std::int64_t sum = 0;
  for (const auto& r : records_)
    if (r.category == c) sum += r.duration_ns();
  return sum;
}

std::uint64_t MonitorLog::bytes(OpKind op) const noexcept {
  std::uint64_t sum = 0;
  for (const auto& r : records_)
    if (r.op == op) sum += r.bytes;
  return sum;
}

void MonitorLog::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot write monitor log " + path.string());
  out << "rank,category,op,bytes,t_start_ns,t_end_ns\n";
  for (const auto& r : records_)
    out << r.rank << ',' << category_name(r.category) << ',' << op_name(r.op) << ',' << r.bytes << ',' << r.t_start
        << ',' << r.t_end << '\n';
  if (!out) fail(Errc::io_error, "short write to monitor log " + path.string());
}

MonitorLog MonitorLog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open monitor log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("rank,", 0) != 0)
    fail(Errc::parse_error, "monitor log " + path.string() + " lacks its header line");
  MonitorLog log;
  bool first = true;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field[6];
    for (auto& f : field) std::getline(ss, f, ',');
    OpRecord r;
    try {
      r.rank = std::stoi(field[0]);
      auto it = std::find(kOpNames.begin(), kOpNames.end(), field[2]);
      if (it == kOpNames.end()) throw std::invalid_argument("op");
      r.op = static_cast<OpKind>(it - kOpNames.begin());
      r.category = category_of(r.op);
      if (category_name(r.category) != field[1]) throw std::invalid_argument("category");
      r.bytes = std::stoull(field[3]);
      r.t_start = std::stoll(field[4]);
      r.t_end = std::stoll(field[5]);
    } catch (const std::exception&) {
      fail(Errc::parse_error, path.string() + ":" + std::to_string(lineno) + ": malformed record");
    }
    if (first) log.rank_ = r.rank;
    first = false;
    log.records_.push_back(r);
  }
  return log;
}

std::size_t histogram_bin(std::uint64_t bytes) noexcept {
  std::size_t bin = 0;
  std::uint64_t upper = 64;
  while (bytes > upper && bin + 1 < kHistogramBins) {
    upper <<= 1;
    ++bin;
  }
  return bin;
}

std::uint64_t RankTotals::meta_ops() const noexcept {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < kOpKindCount; ++i)
    if (category_of(static_cast<OpKind>(i)) == Category::metadata) n += op_counts[i];
  return n;
}

std::uint64_t AggregateReport::total_bytes_written() const noexcept {
  std::uint64_t n = 0;
  for (const auto& [_, t] : ranks) n += t.bytes_written;
  return n;
}

std::uint64_t AggregateReport::total_bytes_read() const noexcept {
  std::uint64_t n = 0;
  for (const auto& [_, t] : ranks) n += t.bytes_read;
  return n;
}

std::uint64_t AggregateReport::total_meta_ops() const noexcept {
  std::uint64_t n = 0;
  for (const auto& [_, t] : ranks) n += t.meta_ops();
  return n;
}

double AggregateReport::wall_span_s() const noexcept { return has_ops ? ns_to_s(t_max - t_min) : 0.0; }
double AggregateReport::write_span_s() const noexcept {
  return has_writes ? ns_to_s(write_t_max - write_t_min) : 0.0;
}

double AggregateReport::write_gibps() const noexcept {
  const double span = write_span_s();
  if (span <= 0) return 0.0;
  return static_cast<double>(total_bytes_written()) / (1024.0 * 1024.0 * 1024.0) / span;
}

AggregateReport merge_records(std::span<const OpRecord> records) {
  AggregateReport report;
  for (const auto& r : records) accumulate(report, r);
  return report;
}

AggregateReport merge_logs(std::span<const MonitorLog> logs) {
  AggregateReport report;
  for (const auto& log : logs)
    for (const auto& r : log.records()) accumulate(report, r);
  return report;
}

AggregateReport merge(const AggregateReport& a, const AggregateReport& b) {
  AggregateReport out = a;
  for (const auto& [rank, t] : b.ranks) {
    auto& dst = out.ranks[rank];
    dst.read_ns += t.read_ns;
    dst.write_ns += t.write_ns;
    dst.meta_ns += t.meta_ns;
    dst.bytes_read += t.bytes_read;
    dst.bytes_written += t.bytes_written;
    for (std::size_t i = 0; i < kOpKindCount; ++i) dst.op_counts[i] += t.op_counts[i];
  }
  if (b.has_writes) {
    out.write_t_min = out.has_writes ? std::min(out.write_t_min, b.write_t_min) : b.write_t_min;
    out.write_t_max = out.has_writes ? std::max(out.write_t_max, b.write_t_max) : b.write_t_max;
    out.has_writes = true;
  }
  if (b.has_ops) {
    out.t_min = out.has_ops ? std::min(out.t_min, b.t_min) : b.t_min;
    out.t_max = out.has_ops ? std::max(out.t_max, b.t_max) : b.t_max;
    out.has_ops = true;
  }
  for (std::size_t i = 0; i < kHistogramBins; ++i) out.access_histogram[i] += b.access_histogram[i];
  return out;
}

CostBreakdown io_cost_breakdown(const AggregateReport& report) {
  CostBreakdown c;
  if (report.ranks.empty()) return c;
  for (const auto& [_, t] : report.ranks) {
    c.avg_read_s += ns_to_s(t.read_ns);
    c.avg_write_s += ns_to_s(t.write_ns);
    c.avg_meta_s += ns_to_s(t.meta_ns);
  }
  const auto n = static_cast<double>(report.ranks.size());
  c.avg_read_s /= n;
  c.avg_write_s /= n;
  c.avg_meta_s /= n;
  const double total = c.avg_read_s + c.avg_write_s + c.avg_meta_s;
  if (total > 0) {
    c.share_read = c.avg_read_s / total;
    c.share_write = c.avg_write_s / total;
    c.share_meta = c.avg_meta_s / total;
  }
  return c;
}

EngineTimers timers_from_log(const MonitorLog& log, std::int64_t compress_ns) {
  EngineTimers t;
  t.rank = log.rank();
  t.bytes_written = log.bytes(OpKind::append);
  t.meta_us = ns_to_us(log.total_ns(Category::metadata));
  t.write_us = ns_to_us(log.total_ns(OpKind::append));
  t.memcpy_us = ns_to_us(log.total_ns(OpKind::memcpy));
  t.compress_us = ns_to_us(compress_ns);
  return t;
}

void write_profile_json(const std::filesystem::path& path, std::span<const EngineTimers> timers) {
  nlohmann::json ranks = nlohmann::json::array();
  for (const auto& t : timers) {
    ranks.push_back({{"rank", t.rank},
                     {"bytes_written", t.bytes_written},
                     {"meta_us", t.meta_us},
                     {"write_us", t.write_us},
                     {"memcpy_us", t.memcpy_us},
                     {"compress_us", t.compress_us}});
  }
  nlohmann::json doc = {{"format", "pmdio-profiling"}, {"version", 1}, {"ranks", ranks}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) fail(Errc::io_error, "short write to " + path.string());
}

std::vector<EngineTimers> read_profile_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::vector<EngineTimers> out;
  try {
    auto doc = nlohmann::json::parse(in);
    for (const auto& r : doc.at("ranks")) {
      EngineTimers t;
      t.rank = r.at("rank").get<int>();
      t.bytes_written = r.at("bytes_written").get<std::uint64_t>();
      t.meta_us = r.at("meta_us").get<double>();
      t.write_us = r.at("write_us").get<double>();
      t.memcpy_us = r.at("memcpy_us").get<double>();
      t.compress_us = r.at("compress_us").get<double>();
      out.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
  return out;
}

std::string render_report(const AggregateReport& report, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::json) {
    nlohmann::json ranks = nlohmann::json::array();
    for (const auto& [rank, t] : report.ranks) {
      nlohmann::json ops = nlohmann::json::object();
      for (std::size_t i = 0; i < kOpKindCount; ++i) ops[std::string(kOpNames[i])] = t.op_counts[i];
      ranks.push_back({{"rank", rank},
                       {"read_s", ns_to_s(t.read_ns)},
                       {"write_s", ns_to_s(t.write_ns)},
                       {"meta_s", ns_to_s(t.meta_ns)},
                       {"bytes_read", t.bytes_read},
                       {"bytes_written", t.bytes_written},
                       {"meta_ops", t.meta_ops()},
                       {"op_counts", ops}});
    }
    const auto cost = io_cost_breakdown(report);
    nlohmann::json doc = {{"ranks", ranks},
                          {"bytes_written", report.total_bytes_written()},
                          {"bytes_read", report.total_bytes_read()},
                          {"meta_ops", report.total_meta_ops()},
                          {"wall_span_s", report.wall_span_s()},
                          {"write_span_s", report.write_span_s()},
                          {"write_gibps", report.write_gibps()},
                          {"avg_read_s", cost.avg_read_s},
                          {"avg_write_s", cost.avg_write_s},
                          {"avg_meta_s", cost.avg_meta_s},
                          {"access_histogram", report.access_histogram}};
    return doc.dump(2) + "\n";
  }
  if (format == ReportFormat::csv) {
    out << "rank,read_s,write_s,meta_s,bytes_read,bytes_written,meta_ops,write_ops,read_ops\n";
    for (const auto& [rank, t] : report.ranks) {
      out << rank << ',' << ns_to_s(t.read_ns) << ',' << ns_to_s(t.write_ns) << ',' << ns_to_s(t.meta_ns) << ','
          << t.bytes_read << ',' << t.bytes_written << ',' << t.meta_ops() << ','
          << t.op_counts[static_cast<std::size_t>(OpKind::append)] + t.op_counts[static_cast<std::size_t>(OpKind::write)]
          << ','
          << t.op_counts[static_cast<std::size_t>(OpKind::read)] << '\n';
    }
    return out.str();
  }
  out << std::left << std::setw(6) << "rank" << std::right << std::setw(12) << "read_s" << std::setw(12) << "write_s"
      << std::setw(12) << "meta_s" << std::setw(16) << "bytes_read" << std::setw(16) << "bytes_written"
      << std::setw(10) << "meta_ops" << '\n';
  out << std::fixed << std::setprecision(6);
  for (const auto& [rank, t] : report.ranks) {
    out << std::left << std::setw(6) << rank << std::right << std::setw(12) << ns_to_s(t.read_ns) << std::setw(12)
        << ns_to_s(t.write_ns) << std::setw(12) << ns_to_s(t.meta_ns) << std::setw(16) << t.bytes_read
        << std::setw(16) << t.bytes_written << std::setw(10) << t.meta_ops() << '\n';
  }
  const auto cost = io_cost_breakdown(report);
  out << "\nranks: " << report.ranks.size() << "  wall span: " << report.wall_span_s() << " s"
      << "  write throughput: " << report.write_gibps() << " GiB/s\n";
  out << "avg per process: read " << cost.avg_read_s << " s, write " << cost.avg_write_s << " s, metadata "
      << cost.avg_meta_s << " s\n";
  out << "shares: read " << cost.share_read << ", write " << cost.share_write << ", metadata " << cost.share_meta
      << '\n';
  return out.str();
}

AggregateReport load_report_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(Errc::not_found, "no such log directory " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".oplog") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  AggregateReport report;
  for (const auto& f : files) {
    auto log = MonitorLog::load(f);
    report = merge(report, merge_records(log.records()));
  }
  return report;
}

}  // namespace pmdio
