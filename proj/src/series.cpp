#include "pmdio/series.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <limits>

#include "pmdio/codecs.hpp"

namespace pmdio {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kNoIteration = std::numeric_limits<std::uint64_t>::max();
constexpr int kMessageError = static_cast<int>(Errc::invalid_argument);

struct Status {
  Errc code = Errc::ok;
  std::string message;
};

template <class F>
Status capture(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return {e.code(), e.what()};
  } catch (const std::exception& e) {
    return {Errc::io_error, e.what()};
  }
  return {};
}

// Every rank contributes a status and a payload; if any rank failed, all
// ranks throw the failure of the lowest failing rank.
Gathered exchange_status(RankGroup& group, const Status& status, const Bytes& payload = {}) {
  Bytes msg;
  format::ByteWriter w(msg);
  w.u32(static_cast<std::uint32_t>(status.code));
  w.str(status.message);
  w.raw(payload);
  auto all = group.all_gather_bytes(std::move(msg));
  for (std::size_t r = 0; r < all->size(); ++r) {
    format::ByteReader rd((*all)[r].bytes, kMessageError);
    auto code = static_cast<Errc>(rd.u32());
    if (code != Errc::ok) fail(code, rd.str());
  }
  return all;
}

// Positions a reader past the status prefix of one rank's contribution.
format::ByteReader payload_of(const Gathered& all, int rank) {
  format::ByteReader rd((*all)[static_cast<std::size_t>(rank)].bytes, kMessageError);
  rd.u32();
  rd.str();
  return rd;
}

std::uint64_t wall_clock_ns() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
}

void check_extent(const Extent& extent) {
  if (extent.empty()) fail(Errc::invalid_extent, "extent must have at least one dimension");
  for (auto e : extent)
    if (e == 0) fail(Errc::invalid_extent, "extent has a zero-length dimension");
}

}  // namespace

// ---------------------------------------------------------------------------
// Handles

RecordComponent& RecordComponent::define(Datatype type, const Extent& global_extent) {
  check_extent(global_extent);
  auto& rec = series_->state(iteration_).records;
  auto r = rec.find(record_);
  if (r == rec.end()) fail(Errc::not_found, "no record " + record_);
  auto& c = r->second.components[component_];
  if (c.datatype) {
    if (*c.datatype != type || c.extent != global_extent)
      fail(Errc::already_defined, record_ + "/" + component_ + " is already defined differently");
    return *this;
  }
  c.datatype = type;
  c.extent = global_extent;
  return *this;
}

void RecordComponent::store_raw(Datatype type, std::span<const std::byte> bytes, std::size_t elements,
                                const Offset& offset, const Extent& extent, std::shared_ptr<const void> keep_alive) {
  auto& rec = series_->state(iteration_).records;
  auto r = rec.find(record_);
  auto c = r == rec.end() ? nullptr : &r->second.components[component_];
  if (!c || !c->datatype) fail(Errc::not_defined, record_ + "/" + component_ + " has no dataset definition");
  if (*c->datatype != type)
    fail(Errc::invalid_argument, record_ + "/" + component_ + " holds " + std::string(datatype_name(*c->datatype)));
  if (offset.size() != c->extent.size() || extent.size() != c->extent.size())
    fail(Errc::invalid_extent, "chunk rank differs from dataset rank");
  check_extent(extent);
  if (element_count(extent) != elements) fail(Errc::invalid_extent, "buffer length does not match chunk extent");
  for (std::size_t d = 0; d < extent.size(); ++d)
    if (offset[d] > c->extent[d] || extent[d] > c->extent[d] - offset[d])
      fail(Errc::out_of_bounds, "chunk exceeds global extent in dimension " + std::to_string(d));
  c->pending.push_back({offset, extent, bytes, std::move(keep_alive)});
}

void RecordComponent::set_attribute(const std::string& key, format::AttributeValue value) {
  series_->add_attribute(iteration_, {format::AttributeScope::component, record_, component_, key, std::move(value)});
}

void Record::set_attribute(const std::string& key, format::AttributeValue value) {
  series_->add_attribute(iteration_, {format::AttributeScope::record, name_, "", key, std::move(value)});
}

Record Iteration::mesh(const std::string& name) {
  series_->record_state(index_, name, RecordKind::mesh);
  return Record(series_, index_, name);
}

Record Iteration::particles(const std::string& species) {
  series_->record_state(index_, species, RecordKind::particle_species);
  return Record(series_, index_, species);
}

void Iteration::set_attribute(const std::string& key, format::AttributeValue value) {
  series_->add_attribute(index_, {format::AttributeScope::iteration, "", "", key, std::move(value)});
}

void Iteration::close() { series_->close_iteration(index_); }

// ---------------------------------------------------------------------------
// Series

Series::Series(const fs::path& path, RankGroup& group, EngineConfig config)
    : path_(path), group_(group), config_(std::move(config)), log_(group.rank()) {
  if (config_.file_mode == FileMode::file_per_process) {
    map_.n_ranks = group.size();
    map_.num_agg = group.size();
  } else {
    map_ = plan_aggregation(group.size(), config_.num_aggregators, config_.ranks_per_node);
  }
}

Series::~Series() = default;

std::unique_ptr<Series> Series::open(const fs::path& path, Access access, RankGroup& group, EngineConfig config) {
  apply_profiling_env(config);
  group.agree(config_digest(config) ^ fnv1a(path.string()) ^ static_cast<std::uint64_t>(access),
              "series configuration");
  std::unique_ptr<Series> s(new Series(path, group, std::move(config)));
  auto* obs = s->config_.observer.get();

  Bytes payload;
  Status st;
  if (group.rank() == 0) {
    st = capture([&] {
      if (access == Access::create) {
        if (fs::exists(path)) {
          if (!s->config_.overwrite) fail(Errc::already_exists, path.string() + " already exists");
          if (!fs::is_directory(path) || !fs::exists(path / "md.idx"))
            fail(Errc::already_exists, path.string() + " exists and is not a series; not removing it");
          fs::remove_all(path);
        }
        fs::create_directories(path);
        s->md0_ = AppendFile(path / "md.0", s->log_, obs, true);
        s->idx_ = AppendFile(path / "md.idx", s->log_, obs, true);
        s->idx_.append(format::encode_index_header());
        if (s->config_.profiling) write_profile_json(path / "profiling.json", {});
      } else {
        if (!fs::exists(path / "md.idx")) fail(Errc::not_found, "no series at " + path.string());
        auto reader = SeriesReader::open(path);
        // Drop a torn trailing record so new records stay aligned.
        const auto idx_size = fs::file_size(path / "md.idx");
        const auto whole = format::kIndexHeaderSize +
                           (idx_size - format::kIndexHeaderSize) / format::kStepRecordSize * format::kStepRecordSize;
        if (whole != idx_size) fs::resize_file(path / "md.idx", whole);
        s->md0_ = AppendFile(path / "md.0", s->log_, obs, false);
        s->idx_ = AppendFile(path / "md.idx", s->log_, obs, false);
        format::ByteWriter w(payload);
        auto its = reader.iterations();
        w.u32(static_cast<std::uint32_t>(its.size()));
        for (auto i : its) w.u64(i);
      }
    });
  }
  auto all = exchange_status(group, st, payload);
  if (access == Access::append) {
    auto rd = payload_of(all, 0);
    const auto n = rd.u32();
    for (std::uint32_t i = 0; i < n; ++i) s->committed_.push_back(rd.u64());
  }
  return s;
}

Iteration Series::create_iteration(std::uint64_t index) {
  if (closed_) fail(Errc::invalid_argument, "series is closed");
  if (index == kNoIteration) fail(Errc::invalid_argument, "iteration index out of range");
  if (open_) {
    if (*open_ != index)
      fail(Errc::iteration_busy, "iteration " + std::to_string(*open_) + " is still open; cannot open " +
                                     std::to_string(index));
    return Iteration(this, index);
  }
  iterations_[index] = IterationState{};
  open_ = index;
  return Iteration(this, index);
}

Series::IterationState& Series::state(std::uint64_t index) {
  if (closed_) fail(Errc::invalid_argument, "series is closed");
  if (!open_ || *open_ != index) fail(Errc::iteration_closed, "iteration " + std::to_string(index) + " is not open");
  return iterations_.at(index);
}

Series::RecordState& Series::record_state(std::uint64_t iteration, const std::string& record, RecordKind kind) {
  auto& records = state(iteration).records;
  auto [it, inserted] = records.try_emplace(record);
  if (inserted) it->second.kind = kind;
  else if (it->second.kind != kind)
    fail(Errc::invalid_argument, record + " is already a " + std::string(record_kind_name(it->second.kind)));
  return it->second;
}

void Series::add_attribute(std::uint64_t iteration, format::AttributeEntry entry) {
  state(iteration).attributes.push_back(std::move(entry));
}

void Series::set_attribute(const std::string& key, format::AttributeValue value) {
  if (closed_) fail(Errc::invalid_argument, "series is closed");
  series_attributes_[key] = std::move(value);
}

void Series::set_codec(const CodecConfig& codec) {
  if (codec.level < 0 || codec.level > 9) fail(Errc::invalid_config, "compression level must be in 0..9");
  config_.codec = codec;
}

std::uint32_t Series::variable_id(const std::string& record, const std::string& component) {
  const auto key = record + '\0' + component;
  auto [it, inserted] = variable_ids_.try_emplace(key, static_cast<std::uint32_t>(variable_ids_.size()));
  return it->second;
}

std::uint64_t Series::definition_digest() const {
  std::string s = "iteration=" + (open_ ? std::to_string(*open_) : std::string("none"));
  s += ";codec=" + std::to_string(static_cast<int>(config_.codec.id)) + "," + std::to_string(config_.codec.level) +
       "," + std::to_string(config_.codec.shuffle);
  if (open_) {
    for (const auto& [rname, r] : iterations_.at(*open_).records) {
      s += ";" + rname + ":" + std::to_string(static_cast<int>(r.kind));
      for (const auto& [cname, c] : r.components) {
        if (!c.datatype) continue;
        s += "/" + cname + ":" + std::to_string(static_cast<int>(*c.datatype));
        for (auto e : c.extent) s += "," + std::to_string(e);
      }
    }
  }
  return fnv1a(s);
}

AppendFile& Series::data_file(int subfile) {
  if (!data_.is_open()) data_ = AppendFile(path_ / subfile_name(subfile), log_, config_.observer.get(), true);
  return data_;
}

void Series::fail_iteration() {
  if (open_) iterations_.erase(*open_);
  open_.reset();
}

FlushStats Series::flush() {
  if (closed_) fail(Errc::invalid_argument, "series is closed");
  const auto t0 = monotonic_ns();
  const std::uint64_t iter = open_.value_or(kNoIteration);
  group_.agree(definition_digest(), "iteration and dataset definitions at flush");
  FlushStats stats;
  stats.iteration = iter;
  if (!open_) return stats;
  auto& st = iterations_.at(iter);
  const int rank = group_.rank();
  const bool per_process = config_.file_mode == FileMode::file_per_process;

  std::map<std::uint32_t, std::tuple<std::string, std::string, RecordKind, const ComponentState*>> defs;
  for (const auto& [rname, r] : st.records)
    for (const auto& [cname, c] : r.components)
      if (c.datatype) defs[variable_id(rname, cname)] = {rname, cname, r.kind, &c};

  try {
    // Frame local chunks: header, payload, zero padding.
    std::vector<Bytes> frames;
    Status local = capture([&] {
      for (const auto& [id, def] : defs) {
        const auto* comp = std::get<3>(def);
        const auto esize = element_size(*comp->datatype);
        for (const auto& pc : comp->pending) {
          format::ChunkHeader h;
          h.codec_id = static_cast<std::uint16_t>(config_.codec.id);
          h.variable_id = id;
          h.step = iter;
          h.offset = pc.offset;
          h.extent = pc.extent;
          h.raw_len = pc.bytes.size();
          const auto hs = format::chunk_header_size(pc.offset.size());
          Bytes frame(hs);
          if (config_.codec.id == CodecId::none) {
            frame.resize(hs + format::pad8(pc.bytes.size()));
            log_.record(OpKind::memcpy, pc.bytes.size(),
                        [&] { std::memcpy(frame.data() + hs, pc.bytes.data(), pc.bytes.size()); });
            h.stored_len = pc.bytes.size();
          } else {
            std::span<const std::byte> src = pc.bytes;
            Bytes staging;
            if (map_.num_agg > 1) {
              staging.resize(pc.bytes.size());
              log_.record(OpKind::memcpy, pc.bytes.size(),
                          [&] { std::memcpy(staging.data(), pc.bytes.data(), pc.bytes.size()); });
              src = staging;
            }
            const auto c0 = monotonic_ns();
            compress_block_into(config_.codec, src, esize, frame);
            compress_ns_ += monotonic_ns() - c0;
            h.stored_len = frame.size() - hs;
            frame.resize(hs + format::pad8(h.stored_len));
          }
          h.checksum = crc32(std::span(frame).subspan(hs, h.stored_len));
          const auto header = format::encode_chunk_header(h);
          std::copy(header.begin(), header.end(), frame.begin());
          frames.push_back(std::move(frame));
        }
      }
    });

    auto verify = [&](AppendFile& f, std::uint64_t off, std::span<const std::byte> frame) {
      Bytes back(frame.size());
      f.read_at(off, back);
      auto h = format::decode_chunk_header(frame);
      const auto hs = format::chunk_header_size(h.offset.size());
      if (!std::equal(back.begin(), back.begin() + static_cast<std::ptrdiff_t>(hs), frame.begin()) ||
          crc32(std::span(back).subspan(hs, h.stored_len)) != h.checksum)
        fail(Errc::corrupt_write,
             "read-back mismatch in " + f.path().filename().string() + " at offset " + std::to_string(off));
    };

    // Appends frames to one subfile and records where each landed.
    std::vector<std::tuple<std::uint32_t, std::uint64_t, std::span<const std::byte>>> placed;
    auto place = [&](AppendFile& f, int subfile, std::span<const std::byte> frame) {
      const auto off = f.append(frame);
      if (config_.verify_writes) verify(f, off, frame);
      placed.emplace_back(static_cast<std::uint32_t>(subfile), off, frame);
    };

    Status appended = local;
    Gathered forwarded;
    if (per_process) {
      if (local.code == Errc::ok && !frames.empty()) {
        appended = capture([&] {
          AppendFile f(path_ / subfile_name(rank), log_, config_.observer.get(), true);
          for (const auto& fr : frames) place(f, rank, fr);
          f.close();
        });
      }
    } else {
      Bytes msg;
      format::ByteWriter w(msg);
      w.u32(static_cast<std::uint32_t>(frames.size()));
      for (const auto& fr : frames) {
        w.u64(fr.size());
        w.raw(fr);
      }
      frames.clear();
      forwarded = exchange_status(group_, local, msg);
      if (map_.is_aggregator(rank)) {
        appended = capture([&] {
          const int sf = map_.subfile_of(rank);
          for (int r : map_.block(sf)) {
            auto rd = payload_of(forwarded, r);
            const auto n = rd.u32();
            for (std::uint32_t i = 0; i < n; ++i) {
              const auto len = rd.u64();
              place(data_file(sf), sf, rd.raw(len));
            }
          }
        });
      }
    }

    Bytes reply;
    format::ByteWriter rw(reply);
    if (appended.code == Errc::ok) {
      rw.u32(static_cast<std::uint32_t>(placed.size()));
      for (const auto& [sf, off, fr] : placed) {
        const auto hs = format::chunk_header_size(format::decode_chunk_header(fr).offset.size());
        rw.u32(sf);
        rw.u64(off);
        rw.u64(fr.size());
        rw.u32(static_cast<std::uint32_t>(hs));
        rw.raw(fr.first(hs));
      }
    }
    auto located = exchange_status(group_, appended, reply);
    forwarded.reset();

    std::map<std::uint32_t, std::vector<format::ChunkLocation>> by_var;
    for (int r = 0; r < group_.size(); ++r) {
      auto rd = payload_of(located, r);
      const auto n = rd.u32();
      for (std::uint32_t i = 0; i < n; ++i) {
        format::ChunkLocation loc;
        loc.subfile = rd.u32();
        loc.file_offset = rd.u64();
        const auto framed = rd.u64();
        loc.header = format::decode_chunk_header(rd.raw(rd.u32()));
        ++stats.chunk_count;
        stats.bytes_raw += loc.header.raw_len;
        stats.bytes_stored += loc.header.stored_len;
        stats.bytes_framed += framed;
        by_var[loc.header.variable_id].push_back(std::move(loc));
      }
    }

    Status indexed;
    if (rank == 0) {
      indexed = capture([&] {
        format::MetadataBlock block;
        block.iteration = iter;
        for (const auto& [id, def] : defs) {
          const auto& [rname, cname, kind, comp] = def;
          block.variables.push_back(
              {id, iter, rname, kind, cname, *comp->datatype, comp->extent, std::move(by_var[id])});
        }
        for (const auto& [k, v] : series_attributes_)
          block.attributes.push_back({format::AttributeScope::series, "", "", k, v});
        block.attributes.insert(block.attributes.end(), st.attributes.begin(), st.attributes.end());
        const auto bytes = format::encode_block(block);
        const auto off = md0_.append(bytes);
        if (!st.has_block) {
          st.has_block = true;
          st.md_offset = off;
        }
        st.md_length = off + bytes.size() - st.md_offset;
      });
    }
    exchange_status(group_, indexed);

    for (auto& [rname, r] : st.records)
      for (auto& [cname, c] : r.components) c.pending.clear();
    st.attributes.clear();
    stats.elapsed_s = static_cast<double>(monotonic_ns() - t0) * 1e-9;
    return stats;
  } catch (...) {
    fail_iteration();
    throw;
  }
}

FlushStats Series::close_iteration(std::uint64_t index) {
  if (closed_) fail(Errc::invalid_argument, "series is closed");
  if (!open_ || *open_ != index) {
    if (std::find(committed_.begin(), committed_.end(), index) != committed_.end()) return FlushStats{index};
    fail(Errc::iteration_closed, "iteration " + std::to_string(index) + " is not open");
  }
  auto stats = flush();
  const bool rewrite = std::find(committed_.begin(), committed_.end(), index) != committed_.end();
  try {
    Status s;
    if (group_.rank() == 0) {
      s = capture([&] {
        const auto& st = iterations_.at(index);
        format::StepIndexRecord rec;
        rec.step = index;
        rec.md_offset = st.md_offset;
        rec.md_length = st.md_length;
        rec.wall_clock_ns = wall_clock_ns();
        rec.flags = format::kStepValid | (rewrite ? format::kStepSupersedes : 0);
        idx_.append(format::encode_step_record(rec));
      });
    }
    exchange_status(group_, s);
  } catch (...) {
    fail_iteration();
    throw;
  }
  if (!rewrite) committed_.push_back(index);
  iterations_.erase(index);
  open_.reset();
  return stats;
}

void Series::close() {
  if (closed_) return;
  if (open_) close_iteration(*open_);
  Status s = capture([&] {
    data_.close();
    md0_.close();
    idx_.close();
  });
  exchange_status(group_, s);
  if (config_.profiling) {
    const auto t = timers_from_log(log_, compress_ns_);
    Bytes mine;
    format::ByteWriter w(mine);
    w.u32(static_cast<std::uint32_t>(t.rank));
    w.u64(t.bytes_written);
    w.f64(t.meta_us);
    w.f64(t.write_us);
    w.f64(t.memcpy_us);
    w.f64(t.compress_us);
    auto all = group_.all_gather_bytes(std::move(mine));
    Status ps;
    if (group_.rank() == 0) {
      ps = capture([&] {
        std::vector<EngineTimers> timers;
        for (const auto& c : *all) {
          format::ByteReader rd(c.bytes, kMessageError);
          EngineTimers e;
          e.rank = static_cast<int>(rd.u32());
          e.bytes_written = rd.u64();
          e.meta_us = rd.f64();
          e.write_us = rd.f64();
          e.memcpy_us = rd.f64();
          e.compress_us = rd.f64();
          timers.push_back(e);
        }
        write_profile_json(path_ / "profiling.json", timers);
      });
    }
    exchange_status(group_, ps);
  }
  closed_ = true;
  if (!config_.monitor_log_dir.empty()) {
    fs::create_directories(config_.monitor_log_dir);
    log_.save(config_.monitor_log_dir / ("rank" + std::to_string(group_.rank()) + ".oplog"));
  }
}

}  // namespace pmdio
