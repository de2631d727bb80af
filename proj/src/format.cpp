#include "pmdio/format.hpp"

#include <bit>
#include <cstring>

#include "pmdio/codecs.hpp"
#include "pmdio/error.hpp"

namespace pmdio::format {

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  const auto* p = reinterpret_cast<const std::byte*>(s.data());
  out_.insert(out_.end(), p, p + s.size());
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  auto n = u32();
  auto b = raw(n);
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

std::span<const std::byte> ByteReader::raw(std::size_t n) {
  if (n > remaining()) underflow();
  auto out = in_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint64_t ByteReader::get(int n) {
  if (static_cast<std::size_t>(n) > remaining()) underflow();
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint64_t(std::to_integer<std::uint8_t>(in_[pos_ + i])) << (8 * i);
  pos_ += static_cast<std::size_t>(n);
  return v;
}

void ByteReader::underflow() const {
  fail(static_cast<Errc>(error_code_), "record truncated at byte " + std::to_string(pos_));
}

namespace {

void expect_zero(ByteReader& r, std::size_t n, Errc code, const char* what) {
  for (auto b : r.raw(n))
    if (b != std::byte{0}) fail(code, std::string("nonzero ") + what);
}

constexpr std::size_t kMaxDims = 16;

}  // namespace

std::vector<std::byte> encode_chunk_header(const ChunkHeader& h) {
  std::vector<std::byte> out;
  out.reserve(chunk_header_size(h.offset.size()));
  ByteWriter w(out);
  w.raw(std::as_bytes(std::span(kChunkMagic)));
  w.u16(h.version);
  w.u16(h.codec_id);
  w.u32(h.variable_id);
  w.zeros(4);
  w.u64(h.step);
  w.u32(static_cast<std::uint32_t>(h.offset.size()));
  w.zeros(4);
  for (auto v : h.offset) w.u64(v);
  for (auto v : h.extent) w.u64(v);
  w.u64(h.raw_len);
  w.u64(h.stored_len);
  w.u32(h.checksum);
  w.zeros(4);
  return out;
}

ChunkHeader decode_chunk_header(std::span<const std::byte> bytes) {
  ByteReader r(bytes, static_cast<int>(Errc::corrupt_chunk));
  auto magic = r.raw(4);
  if (std::memcmp(magic.data(), kChunkMagic.data(), 4) != 0) fail(Errc::corrupt_chunk, "bad chunk magic");
  ChunkHeader h;
  h.version = r.u16();
  if (h.version != kChunkVersion) fail(Errc::corrupt_chunk, "unsupported chunk version " + std::to_string(h.version));
  h.codec_id = r.u16();
  h.variable_id = r.u32();
  expect_zero(r, 4, Errc::corrupt_chunk, "chunk header padding");
  h.step = r.u64();
  auto dims = r.u32();
  if (dims == 0 || dims > kMaxDims) fail(Errc::corrupt_chunk, "bad chunk rank " + std::to_string(dims));
  expect_zero(r, 4, Errc::corrupt_chunk, "chunk header padding");
  h.offset.resize(dims);
  h.extent.resize(dims);
  for (auto& v : h.offset) v = r.u64();
  for (auto& v : h.extent) v = r.u64();
  h.raw_len = r.u64();
  h.stored_len = r.u64();
  h.checksum = r.u32();
  expect_zero(r, 4, Errc::corrupt_chunk, "chunk header padding");
  return h;
}

std::array<std::byte, kStepRecordSize> encode_step_record(const StepIndexRecord& rec) {
  std::vector<std::byte> out;
  ByteWriter w(out);
  w.u64(rec.step);
  w.u64(rec.md_offset);
  w.u64(rec.md_length);
  w.u64(rec.wall_clock_ns);
  w.u64(rec.flags);
  w.zeros(24);
  std::array<std::byte, kStepRecordSize> a{};
  std::memcpy(a.data(), out.data(), kStepRecordSize);
  return a;
}

StepIndexRecord decode_step_record(std::span<const std::byte> bytes) {
  if (bytes.size() != kStepRecordSize) fail(Errc::corrupt_index, "step record is not 64 bytes");
  ByteReader r(bytes, static_cast<int>(Errc::corrupt_index));
  StepIndexRecord rec;
  rec.step = r.u64();
  rec.md_offset = r.u64();
  rec.md_length = r.u64();
  rec.wall_clock_ns = r.u64();
  rec.flags = r.u64();
  if (rec.flags & ~(kStepValid | kStepSupersedes)) fail(Errc::corrupt_index, "unknown step flags");
  expect_zero(r, 24, Errc::corrupt_index, "step record reserved bytes");
  return rec;
}

std::array<std::byte, kIndexHeaderSize> encode_index_header() {
  std::array<std::byte, kIndexHeaderSize> a{};
  std::memcpy(a.data(), kIndexMagic.data(), kIndexMagic.size());
  a[8] = std::byte{1};  // format version, u32
  return a;
}

void check_index_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kIndexHeaderSize) fail(Errc::corrupt_index, "md.idx shorter than its header");
  if (!std::equal(bytes.begin(), bytes.begin() + kIndexHeaderSize, encode_index_header().begin()))
    fail(Errc::corrupt_index, "bad md.idx header");
}

namespace {

void put_header_summary(ByteWriter& w, const ChunkHeader& h) {
  w.u16(h.version);
  w.u16(h.codec_id);
  w.u32(h.variable_id);
  w.u64(h.step);
  w.u32(static_cast<std::uint32_t>(h.offset.size()));
  for (auto v : h.offset) w.u64(v);
  for (auto v : h.extent) w.u64(v);
  w.u64(h.raw_len);
  w.u64(h.stored_len);
  w.u32(h.checksum);
}

ChunkHeader get_header_summary(ByteReader& r) {
  ChunkHeader h;
  h.version = r.u16();
  h.codec_id = r.u16();
  h.variable_id = r.u32();
  h.step = r.u64();
  auto dims = r.u32();
  if (dims == 0 || dims > kMaxDims) fail(Errc::corrupt_index, "bad chunk rank in index");
  h.offset.resize(dims);
  h.extent.resize(dims);
  for (auto& v : h.offset) v = r.u64();
  for (auto& v : h.extent) v = r.u64();
  h.raw_len = r.u64();
  h.stored_len = r.u64();
  h.checksum = r.u32();
  return h;
}

enum class ValueTag : std::uint8_t { f32 = 1, f64 = 2, u64 = 3, i64 = 4, str = 5 };

void put_value(ByteWriter& w, const AttributeValue& v) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, float>) { w.u8(static_cast<std::uint8_t>(ValueTag::f32)); w.f32(x); }
        else if constexpr (std::is_same_v<T, double>) { w.u8(static_cast<std::uint8_t>(ValueTag::f64)); w.f64(x); }
        else if constexpr (std::is_same_v<T, std::uint64_t>) { w.u8(static_cast<std::uint8_t>(ValueTag::u64)); w.u64(x); }
        else if constexpr (std::is_same_v<T, std::int64_t>) {
          w.u8(static_cast<std::uint8_t>(ValueTag::i64));
          w.u64(static_cast<std::uint64_t>(x));
        } else { w.u8(static_cast<std::uint8_t>(ValueTag::str)); w.str(x); }
      },
      v);
}

AttributeValue get_value(ByteReader& r) {
  switch (static_cast<ValueTag>(r.u8())) {
    case ValueTag::f32: return r.f32();
    case ValueTag::f64: return r.f64();
    case ValueTag::u64: return r.u64();
    case ValueTag::i64: return static_cast<std::int64_t>(r.u64());
    case ValueTag::str: return r.str();
  }
  fail(Errc::corrupt_index, "unknown attribute type tag");
}

}  // namespace

std::vector<std::byte> encode_block(const MetadataBlock& block) {
  std::vector<std::byte> payload;
  ByteWriter w(payload);
  w.u64(block.iteration);
  w.u32(static_cast<std::uint32_t>(block.variables.size()));
  for (const auto& v : block.variables) {
    w.u32(v.variable_id);
    w.u64(v.iteration);
    w.str(v.record);
    w.u8(static_cast<std::uint8_t>(v.kind));
    w.str(v.component);
    w.u8(static_cast<std::uint8_t>(v.datatype));
    w.u32(static_cast<std::uint32_t>(v.global_extent.size()));
    for (auto e : v.global_extent) w.u64(e);
    w.u32(static_cast<std::uint32_t>(v.chunks.size()));
    for (const auto& c : v.chunks) {
      w.u32(c.subfile);
      w.u64(c.file_offset);
      put_header_summary(w, c.header);
    }
  }
  w.u32(static_cast<std::uint32_t>(block.attributes.size()));
  for (const auto& a : block.attributes) {
    w.u8(static_cast<std::uint8_t>(a.scope));
    w.str(a.record);
    w.str(a.component);
    w.str(a.key);
    put_value(w, a.value);
  }

  std::vector<std::byte> out;
  ByteWriter framed(out);
  framed.raw(std::as_bytes(std::span(kBlockMagic)));
  framed.u64(payload.size());
  framed.raw(payload);
  framed.u32(crc32(payload));
  return out;
}

std::vector<MetadataBlock> decode_blocks(std::span<const std::byte> bytes) {
  std::vector<MetadataBlock> blocks;
  ByteReader outer(bytes, static_cast<int>(Errc::corrupt_index));
  while (outer.remaining() > 0) {
    auto magic = outer.raw(4);
    if (std::memcmp(magic.data(), kBlockMagic.data(), 4) != 0) fail(Errc::corrupt_index, "bad metadata block magic");
    auto len = outer.u64();
    if (len > outer.remaining()) fail(Errc::corrupt_index, "metadata block overruns its step range");
    auto payload = outer.raw(len);
    if (outer.u32() != crc32(payload)) fail(Errc::corrupt_index, "metadata block checksum mismatch");

    ByteReader r(payload, static_cast<int>(Errc::corrupt_index));
    MetadataBlock b;
    b.iteration = r.u64();
    auto nvars = r.u32();
    for (std::uint32_t i = 0; i < nvars; ++i) {
      VariableIndexEntry v;
      v.variable_id = r.u32();
      v.iteration = r.u64();
      v.record = r.str();
      auto kind = r.u8();
      if (kind > 1) fail(Errc::corrupt_index, "bad record kind");
      v.kind = static_cast<RecordKind>(kind);
      v.component = r.str();
      auto dt = datatype_from_code(r.u8());
      if (!dt) fail(Errc::corrupt_index, "bad datatype code");
      v.datatype = *dt;
      auto dims = r.u32();
      if (dims == 0 || dims > kMaxDims) fail(Errc::corrupt_index, "bad global extent rank");
      v.global_extent.resize(dims);
      for (auto& e : v.global_extent) e = r.u64();
      auto nchunks = r.u32();
      for (std::uint32_t c = 0; c < nchunks; ++c) {
        ChunkLocation loc;
        loc.subfile = r.u32();
        loc.file_offset = r.u64();
        loc.header = get_header_summary(r);
        if (loc.header.offset.size() != dims) fail(Errc::corrupt_index, "chunk rank differs from variable rank");
        v.chunks.push_back(std::move(loc));
      }
      b.variables.push_back(std::move(v));
    }
    auto nattrs = r.u32();
    for (std::uint32_t i = 0; i < nattrs; ++i) {
      AttributeEntry a;
      auto scope = r.u8();
      if (scope > 3) fail(Errc::corrupt_index, "bad attribute scope");
      a.scope = static_cast<AttributeScope>(scope);
      a.record = r.str();
      a.component = r.str();
      a.key = r.str();
      a.value = get_value(r);
      b.attributes.push_back(std::move(a));
    }
    if (r.remaining() != 0) fail(Errc::corrupt_index, "trailing bytes in metadata block");
    blocks.push_back(std::move(b));
  }
  return blocks;
}

}  // namespace pmdio::format
