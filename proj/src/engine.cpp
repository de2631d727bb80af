#include "pmdio/engine.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <sys/uio.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cstring>
#include <json.hpp>
#include <sstream>

#include "pmdio/codecs.hpp"

static_assert(std::endian::native == std::endian::little, "payload bytes are stored in host order");

namespace pmdio {

namespace fs = std::filesystem;

int AggregatorMap::subfile_of(int rank) const noexcept {
  return static_cast<int>((static_cast<std::int64_t>(rank) * num_agg) / n_ranks);
}

int AggregatorMap::first_rank(int subfile) const noexcept {
  // ceil(k * n / m)
  return static_cast<int>((static_cast<std::int64_t>(subfile) * n_ranks + num_agg - 1) / num_agg);
}

std::vector<int> AggregatorMap::block(int subfile) const {
  std::vector<int> out;
  const int end = subfile + 1 < num_agg ? first_rank(subfile + 1) : n_ranks;
  for (int r = first_rank(subfile); r < end; ++r) out.push_back(r);
  return out;
}

AggregatorMap plan_aggregation(int n_ranks, const AggregationSetting& setting, int ranks_per_node) {
  if (n_ranks < 1) fail(Errc::invalid_config, "need at least one rank");
  AggregatorMap map;
  map.n_ranks = n_ranks;
  int requested = 0;
  if (const auto* n = std::get_if<int>(&setting)) {
    requested = *n;
    if (requested < 1) fail(Errc::invalid_config, "number of aggregators must be >= 1");
  } else {
    if (ranks_per_node < 1) fail(Errc::invalid_config, "ranks_per_node must be >= 1");
    requested = (n_ranks + ranks_per_node - 1) / ranks_per_node;
  }
  map.clamped = requested > n_ranks;
  map.num_agg = std::min(requested, n_ranks);
  return map;
}

std::string subfile_name(int subfile) { return "data." + std::to_string(subfile); }

// ---------------------------------------------------------------------------
// AppendFile

AppendFile::AppendFile(const fs::path& path, MonitorLog& log, WriteObserver* observer, bool create)
    : path_(path), log_(&log), observer_(observer) {
  const int flags = O_RDWR | O_CLOEXEC | (create ? O_CREAT : 0);
  fd_ = log.record(OpKind::open, 0, [&] { return ::open(path.c_str(), flags, 0644); });
  if (fd_ < 0) fail(Errc::io_error, "open " + path.string() + ": " + std::strerror(errno));
  struct stat st {};
  int rc = log.record(OpKind::stat, 0, [&] { return ::fstat(fd_, &st); });
  if (rc != 0) {
    ::close(fd_);
    fd_ = -1;
    fail(Errc::io_error, "stat " + path.string() + ": " + std::strerror(errno));
  }
  length_ = static_cast<std::uint64_t>(st.st_size);
}

AppendFile::AppendFile(AppendFile&& o) noexcept
    : path_(std::move(o.path_)), log_(o.log_), observer_(o.observer_), fd_(o.fd_), length_(o.length_) {
  o.fd_ = -1;
}

AppendFile& AppendFile::operator=(AppendFile&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(o.path_);
    log_ = o.log_;
    observer_ = o.observer_;
    fd_ = o.fd_;
    length_ = o.length_;
    o.fd_ = -1;
  }
  return *this;
}

AppendFile::~AppendFile() {
  if (fd_ >= 0) ::close(fd_);
}

std::uint64_t AppendFile::append(std::span<const std::byte> bytes) {
  const std::span<const std::byte> pieces[] = {bytes};
  return append(pieces);
}

std::uint64_t AppendFile::append(std::span<const std::span<const std::byte>> pieces) {
  if (fd_ < 0) fail(Errc::io_error, "append to closed file " + path_.string());
  std::uint64_t total = 0;
  for (auto p : pieces) total += p.size();
  const auto offset = length_;
  if (observer_) {
    std::vector<std::byte> joined;
    joined.reserve(total);
    for (auto p : pieces) joined.insert(joined.end(), p.begin(), p.end());
    observer_->before_append(path_, offset, joined);
  }
  std::vector<iovec> iov;
  iov.reserve(pieces.size());
  for (auto p : pieces)
    if (!p.empty()) iov.push_back({const_cast<std::byte*>(p.data()), p.size()});
  log_->record(OpKind::append, total, [&] {
    std::size_t first = 0;
    std::uint64_t at = offset;
    while (first < iov.size()) {
      ssize_t n = ::pwritev(fd_, iov.data() + first, static_cast<int>(std::min<std::size_t>(iov.size() - first, IOV_MAX)),
                            static_cast<off_t>(at));
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(Errc::io_error, "write " + path_.string() + ": " + std::strerror(errno));
      }
      at += static_cast<std::uint64_t>(n);
      auto left = static_cast<std::size_t>(n);
      while (first < iov.size() && left >= iov[first].iov_len) left -= iov[first++].iov_len;
      if (first < iov.size()) {
        iov[first].iov_base = static_cast<char*>(iov[first].iov_base) + left;
        iov[first].iov_len -= left;
      }
    }
  });
  length_ = offset + total;
  if (observer_) observer_->after_append(path_, offset, total);
  return offset;
}

void AppendFile::read_at(std::uint64_t offset, std::span<std::byte> out) {
  log_->record(OpKind::read, out.size(), [&] {
    std::size_t done = 0;
    while (done < out.size()) {
      ssize_t n = ::pread(fd_, out.data() + done, out.size() - done, static_cast<off_t>(offset + done));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) fail(Errc::io_error, "short read from " + path_.string());
      done += static_cast<std::size_t>(n);
    }
  });
}

void AppendFile::sync() {
  if (fd_ < 0) return;
  int rc = log_->record(OpKind::fsync, 0, [&] { return ::fsync(fd_); });
  if (rc != 0) fail(Errc::io_error, "fsync " + path_.string() + ": " + std::strerror(errno));
}

void AppendFile::close() {
  if (fd_ < 0) return;
  int fd = fd_;
  fd_ = -1;
  int rc = log_->record(OpKind::close, 0, [&] { return ::close(fd); });
  if (rc != 0) fail(Errc::io_error, "close " + path_.string() + ": " + std::strerror(errno));
}

// ---------------------------------------------------------------------------
// Reading

namespace {

std::vector<std::byte> slurp(const fs::path& path) {
  int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) fail(errno == ENOENT ? Errc::not_found : Errc::io_error, "open " + path.string());
  std::vector<std::byte> out;
  std::byte buf[1 << 16];
  for (;;) {
    ssize_t n = ::read(fd, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) {
      ::close(fd);
      fail(Errc::io_error, "read " + path.string());
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  ::close(fd);
  return out;
}

// Reads exactly out.size() bytes at offset; false on a short file.
bool read_exact(const fs::path& path, std::uint64_t offset, std::span<std::byte> out) {
  int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) return false;
  std::size_t done = 0;
  while (done < out.size()) {
    ssize_t n = ::pread(fd, out.data() + done, out.size() - done, static_cast<off_t>(offset + done));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    done += static_cast<std::size_t>(n);
  }
  ::close(fd);
  return done == out.size();
}

void apply_attributes(IterationInfo& it, std::map<std::string, format::AttributeValue>& series,
                      const std::vector<format::AttributeEntry>& attrs) {
  for (const auto& a : attrs) {
    switch (a.scope) {
      case format::AttributeScope::series: series[a.key] = a.value; break;
      case format::AttributeScope::iteration: it.attributes[a.key] = a.value; break;
      case format::AttributeScope::record: it.records[a.record].attributes[a.key] = a.value; break;
      case format::AttributeScope::component:
        it.records[a.record].components[a.component].attributes[a.key] = a.value;
        break;
    }
  }
}

}  // namespace

SeriesReader SeriesReader::open(const fs::path& path) {
  if (!fs::is_directory(path)) fail(Errc::not_found, "no series directory at " + path.string());
  SeriesReader reader;
  reader.path_ = path;

  const auto idx = slurp(path / "md.idx");
  format::check_index_header(idx);
  const auto md = slurp(path / "md.0");
  reader.md_length_ = md.size();

  // A trailing partial record is a commit that never completed.
  const std::size_t n_records = (idx.size() - format::kIndexHeaderSize) / format::kStepRecordSize;
  std::map<std::uint64_t, std::size_t> latest;  // step -> position in step_records_
  for (std::size_t i = 0; i < n_records; ++i) {
    auto rec = format::decode_step_record(
        std::span(idx).subspan(format::kIndexHeaderSize + i * format::kStepRecordSize, format::kStepRecordSize));
    if (!rec.valid()) continue;
    if (rec.md_offset > md.size() || rec.md_length > md.size() - rec.md_offset)
      fail(Errc::corrupt_index, "step " + std::to_string(rec.step) + " points past the end of md.0");
    latest[rec.step] = reader.step_records_.size();
    reader.step_records_.push_back(rec);
  }

  std::vector<std::pair<std::size_t, std::uint64_t>> order;
  for (const auto& [step, pos] : latest) order.emplace_back(pos, step);
  std::sort(order.begin(), order.end());

  for (const auto& [pos, step] : order) {
    const auto& rec = reader.step_records_[pos];
    IterationInfo it;
    it.index = step;
    it.step_record = rec;
    auto blocks = format::decode_blocks(std::span(md).subspan(rec.md_offset, rec.md_length));
    for (const auto& b : blocks) {
      if (b.iteration != step) fail(Errc::corrupt_index, "metadata block belongs to another step");
      for (const auto& v : b.variables) {
        auto& r = it.records[v.record];
        r.kind = v.kind;
        auto& c = r.components[v.component];
        c.variable_id = v.variable_id;
        c.datatype = v.datatype;
        c.global_extent = v.global_extent;
        for (const auto& loc : v.chunks) {
          const auto& h = loc.header;
          if (h.raw_len != element_size(v.datatype) * element_count(h.extent))
            fail(Errc::corrupt_index, "chunk raw length disagrees with its extent");
          c.chunks.push_back({loc.subfile, loc.file_offset, h});
        }
      }
      apply_attributes(it, reader.series_attributes_, b.attributes);
    }
    reader.iterations_[step] = std::move(it);
  }
  return reader;
}

std::vector<std::uint64_t> SeriesReader::iterations() const {
  std::vector<std::uint64_t> out;
  for (const auto& [i, _] : iterations_) out.push_back(i);
  return out;
}

const IterationInfo& SeriesReader::iteration(std::uint64_t index) const {
  auto it = iterations_.find(index);
  if (it == iterations_.end()) fail(Errc::not_found, "no iteration " + std::to_string(index));
  return it->second;
}

const ComponentInfo& SeriesReader::component(std::uint64_t iteration, const std::string& record,
                                             const std::string& component) const {
  const auto& it = this->iteration(iteration);
  auto r = it.records.find(record);
  if (r == it.records.end()) fail(Errc::not_found, "no record " + record + " in iteration " + std::to_string(iteration));
  auto c = r->second.components.find(component);
  if (c == r->second.components.end()) fail(Errc::not_found, "no component " + record + "/" + component);
  return c->second;
}

std::vector<std::byte> read_chunk(const fs::path& series_path, const ChunkInfo& chunk) {
  const auto& h = chunk.header;
  const auto header_len = format::chunk_header_size(h.offset.size());
  const auto total = header_len + format::pad8(h.stored_len);
  std::vector<std::byte> frame(total);
  if (!read_exact(series_path / subfile_name(static_cast<int>(chunk.subfile)), chunk.file_offset, frame))
    throw CorruptChunkError(chunk.subfile, chunk.file_offset, "chunk extends past end of subfile");
  const auto expected = format::encode_chunk_header(h);
  if (!std::equal(expected.begin(), expected.end(), frame.begin()))
    throw CorruptChunkError(chunk.subfile, chunk.file_offset, "on-disk header differs from the index");
  auto payload = std::span(frame).subspan(header_len, h.stored_len);
  if (crc32(payload) != h.checksum) throw CorruptChunkError(chunk.subfile, chunk.file_offset, "payload checksum mismatch");
  for (std::size_t i = header_len + h.stored_len; i < total; ++i)
    if (frame[i] != std::byte{0}) throw CorruptChunkError(chunk.subfile, chunk.file_offset, "nonzero payload padding");
  if (h.codec_id > static_cast<std::uint16_t>(CodecId::bzip2_like))
    fail(Errc::unknown_codec, "codec id " + std::to_string(h.codec_id));
  return decompress_block(h.codec_id, 0, payload, h.raw_len);
}

namespace {

// Copies the intersection of a chunk and a selection, row-major, last
// dimension contiguous.
void copy_overlap(std::span<const std::byte> src, const Offset& src_off, const Extent& src_ext,
                  std::span<std::byte> dst, const Offset& dst_off, const Extent& dst_ext, const Offset& lo,
                  const Extent& len, std::size_t esize) {
  const std::size_t dims = len.size();
  std::vector<std::uint64_t> idx(dims, 0);
  const std::uint64_t row = len[dims - 1] * esize;
  for (;;) {
    std::uint64_t s = 0;
    std::uint64_t d = 0;
    for (std::size_t k = 0; k < dims; ++k) {
      s = s * src_ext[k] + (lo[k] + idx[k] - src_off[k]);
      d = d * dst_ext[k] + (lo[k] + idx[k] - dst_off[k]);
    }
    std::memcpy(dst.data() + d * esize, src.data() + s * esize, row);
    if (dims == 1) return;
    std::size_t k = dims - 1;
    for (;;) {
      if (k == 0) return;
      --k;
      if (++idx[k] < len[k]) break;
      idx[k] = 0;
    }
  }
}

}  // namespace

std::vector<std::byte> SeriesReader::read(std::uint64_t iteration, const std::string& record,
                                          const std::string& component,
                                          const std::optional<Selection>& selection) const {
  const auto& info = this->component(iteration, record, component);
  const auto dims = info.global_extent.size();
  Selection sel = selection.value_or(Selection{Offset(dims, 0), info.global_extent});
  if (sel.offset.size() != dims || sel.extent.size() != dims)
    fail(Errc::invalid_extent, "selection rank differs from component rank");
  for (std::size_t d = 0; d < dims; ++d)
    if (sel.offset[d] > info.global_extent[d] || sel.extent[d] > info.global_extent[d] - sel.offset[d])
      fail(Errc::out_of_bounds, "selection exceeds global extent in dimension " + std::to_string(d));

  const auto esize = element_size(info.datatype);
  std::vector<std::byte> out(element_count(sel.extent) * esize);
  if (out.empty()) return out;
  for (const auto& chunk : info.chunks) {
    const auto& h = chunk.header;
    Offset lo(dims);
    Extent len(dims);
    bool empty = false;
    for (std::size_t d = 0; d < dims; ++d) {
      const auto a = std::max(h.offset[d], sel.offset[d]);
      const auto b = std::min(h.offset[d] + h.extent[d], sel.offset[d] + sel.extent[d]);
      if (b <= a) {
        empty = true;
        break;
      }
      lo[d] = a;
      len[d] = b - a;
    }
    if (empty) continue;
    auto data = read_chunk(path_, chunk);
    copy_overlap(data, h.offset, h.extent, out, sel.offset, sel.extent, lo, len, esize);
  }
  return out;
}

Inventory SeriesReader::inventory() const {
  Inventory inv;
  inv.path = path_.string();
  for (const auto& [_, it] : iterations_) inv.iterations.push_back(it);
  inv.series_attributes = series_attributes_;
  inv.valid_step_records = step_records_.size();
  for (const auto& e : fs::directory_iterator(path_)) {
    if (!e.is_regular_file()) continue;
    inv.files.push_back({e.path().filename().string(), static_cast<std::uint64_t>(e.file_size())});
  }
  std::sort(inv.files.begin(), inv.files.end(), [](auto& a, auto& b) { return a.name < b.name; });
  return inv;
}

Inventory list_contents(const fs::path& path) { return SeriesReader::open(path).inventory(); }

namespace {

nlohmann::json attr_json(const std::map<std::string, format::AttributeValue>& attrs) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : attrs) std::visit([&](const auto& x) { j[k] = x; }, v);
  return j;
}

}  // namespace

std::string inventory_json(const Inventory& inv, bool pretty) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : inv.files) files.push_back({{"name", f.name}, {"size", f.size}});
  nlohmann::json iterations = nlohmann::json::array();
  for (const auto& it : inv.iterations) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& [rname, r] : it.records) {
      nlohmann::json comps = nlohmann::json::array();
      for (const auto& [cname, c] : r.components) {
        nlohmann::json chunks = nlohmann::json::array();
        for (const auto& ch : c.chunks) {
          chunks.push_back({{"subfile", ch.subfile},
                            {"file_offset", ch.file_offset},
                            {"offset", ch.header.offset},
                            {"extent", ch.header.extent},
                            {"codec", codec_name(static_cast<CodecId>(ch.header.codec_id))},
                            {"raw_len", ch.header.raw_len},
                            {"stored_len", ch.header.stored_len}});
        }
        comps.push_back({{"name", cname},
                         {"datatype", datatype_name(c.datatype)},
                         {"global_extent", c.global_extent},
                         {"chunks", chunks},
                         {"attributes", attr_json(c.attributes)}});
      }
      records.push_back({{"name", rname},
                         {"kind", record_kind_name(r.kind)},
                         {"components", comps},
                         {"attributes", attr_json(r.attributes)}});
    }
    iterations.push_back({{"index", it.index},
                          {"supersedes", it.step_record.supersedes()},
                          {"records", records},
                          {"attributes", attr_json(it.attributes)}});
  }
  nlohmann::json doc = {{"path", inv.path},
                        {"file_count", inv.files.size()},
                        {"files", files},
                        {"valid_step_records", inv.valid_step_records},
                        {"iterations", iterations},
                        {"attributes", attr_json(inv.series_attributes)}};
  return pretty ? doc.dump(2) : doc.dump();
}

std::string inventory_text(const Inventory& inv) {
  std::ostringstream out;
  out << "series " << inv.path << '\n';
  out << "files (" << inv.files.size() << "):\n";
  for (const auto& f : inv.files) out << "  " << f.name << "  " << f.size << " bytes\n";
  out << "iterations (" << inv.iterations.size() << "):\n";
  for (const auto& it : inv.iterations) {
    out << "  " << it.index << (it.step_record.supersedes() ? "  (rewritten)" : "") << '\n';
    for (const auto& [rname, r] : it.records) {
      out << "    " << rname << " [" << record_kind_name(r.kind) << "]\n";
      for (const auto& [cname, c] : r.components) {
        out << "      " << cname << " " << datatype_name(c.datatype) << " [";
        for (std::size_t d = 0; d < c.global_extent.size(); ++d) out << (d ? "," : "") << c.global_extent[d];
        std::uint64_t stored = 0;
        for (const auto& ch : c.chunks) stored += ch.header.stored_len;
        out << "]  " << c.chunks.size() << " chunks, " << stored << " bytes stored\n";
      }
    }
  }
  return out.str();
}

}  // namespace pmdio
