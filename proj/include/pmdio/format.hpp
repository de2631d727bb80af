#pragma once

// On-disk layout of a series directory `<name>.bp4/`.
//
//   data.<k>   log of framed chunks: ChunkHeader, zero padding to 8 bytes,
//              stored payload, zero padding to 8 bytes.
//   md.0       log of metadata blocks, one or more per step.
//   md.idx     64-byte file header, then one 64-byte StepIndexRecord per
//              committed step. The index record is the commit point.
//   profiling.json
//
// All integers are little-endian.
//
// ChunkHeader, fields at natural alignment (d = number of dimensions):
//
//   0   magic "PMDC"        4
//   4   version u16         2
//   6   codec_id u16        2
//   8   variable_id u32     4
//   12  zero                4
//   16  step u64            8
//   24  rank_dims u32       4
//   28  zero                4
//   32  offset[d] u64       8d
//   .   extent[d] u64       8d
//   .   raw_len u64         8
//   .   stored_len u64      8
//   .   checksum u32        4   CRC-32 of the stored payload
//   .   zero                4
//
// for a total of 56 + 16d bytes (72 for a rank-1 chunk).

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pmdio/types.hpp"

namespace pmdio::format {

inline constexpr std::array<char, 4> kChunkMagic{'P', 'M', 'D', 'C'};
inline constexpr std::uint16_t kChunkVersion = 1;
inline constexpr std::size_t kStepRecordSize = 64;
inline constexpr std::size_t kIndexHeaderSize = 64;
inline constexpr std::array<char, 8> kIndexMagic{'P', 'M', 'D', 'I', 'D', 'X', '0', '1'};
inline constexpr std::array<char, 4> kBlockMagic{'P', 'M', 'D', 'M'};

inline constexpr std::uint64_t kStepValid = 1u << 0;
inline constexpr std::uint64_t kStepSupersedes = 1u << 1;

constexpr std::size_t chunk_header_size(std::size_t dims) noexcept { return 56 + 16 * dims; }
constexpr std::size_t pad8(std::size_t n) noexcept { return (n + 7) & ~std::size_t{7}; }

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::byte>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v);
  void f64(double v);
  void str(const std::string& s);
  void raw(std::span<const std::byte> b) {
    if (b.empty()) return;
    const auto at = out_.size();
    out_.resize(at + b.size());
    std::memcpy(out_.data() + at, b.data(), b.size());
  }
  void zeros(std::size_t n) { out_.insert(out_.end(), n, std::byte{0}); }
  std::size_t size() const noexcept { return out_.size(); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
  std::vector<std::byte>& out_;
};

// Bounds-checked little-endian reader. Underflow throws Error with the code
// given at construction.
class ByteReader {
 public:
  ByteReader(std::span<const std::byte> in, int error_code) : in_(in), error_code_(error_code) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32();
  double f64();
  std::string str();
  std::span<const std::byte> raw(std::size_t n);
  void skip(std::size_t n) { raw(n); }
  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

 private:
  std::uint64_t get(int n);
  [[noreturn]] void underflow() const;
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
  int error_code_;
};

struct ChunkHeader {
  std::uint16_t version = kChunkVersion;
  std::uint16_t codec_id = 0;
  std::uint32_t variable_id = 0;
  std::uint64_t step = 0;
  Offset offset;
  Extent extent;
  std::uint64_t raw_len = 0;
  std::uint64_t stored_len = 0;
  std::uint32_t checksum = 0;

  bool operator==(const ChunkHeader&) const = default;
};

std::vector<std::byte> encode_chunk_header(const ChunkHeader& h);
// Throws CorruptChunk on bad magic, nonzero padding or truncation.
ChunkHeader decode_chunk_header(std::span<const std::byte> bytes);
// Header plus padded payload.
inline std::size_t framed_chunk_size(const ChunkHeader& h) {
  return chunk_header_size(h.offset.size()) + pad8(h.stored_len);
}

struct StepIndexRecord {
  std::uint64_t step = 0;
  std::uint64_t md_offset = 0;
  std::uint64_t md_length = 0;
  std::uint64_t wall_clock_ns = 0;
  std::uint64_t flags = 0;

  bool valid() const noexcept { return flags & kStepValid; }
  bool supersedes() const noexcept { return flags & kStepSupersedes; }
  bool operator==(const StepIndexRecord&) const = default;
};

std::array<std::byte, kStepRecordSize> encode_step_record(const StepIndexRecord& r);
// Throws CorruptIndex on nonzero reserved bytes or unknown flag bits.
StepIndexRecord decode_step_record(std::span<const std::byte> bytes);

std::array<std::byte, kIndexHeaderSize> encode_index_header();
void check_index_header(std::span<const std::byte> bytes);

struct ChunkLocation {
  std::uint32_t subfile = 0;
  std::uint64_t file_offset = 0;
  ChunkHeader header;

  bool operator==(const ChunkLocation&) const = default;
};

struct VariableIndexEntry {
  std::uint32_t variable_id = 0;
  std::uint64_t iteration = 0;
  std::string record;
  RecordKind kind = RecordKind::mesh;
  std::string component;
  Datatype datatype = Datatype::float64;
  Extent global_extent;
  std::vector<ChunkLocation> chunks;

  bool operator==(const VariableIndexEntry&) const = default;
};

using AttributeValue = std::variant<float, double, std::uint64_t, std::int64_t, std::string>;

enum class AttributeScope : std::uint8_t { series = 0, iteration = 1, record = 2, component = 3 };

struct AttributeEntry {
  AttributeScope scope = AttributeScope::series;
  std::string record;
  std::string component;
  std::string key;
  AttributeValue value;

  bool operator==(const AttributeEntry&) const = default;
};

struct MetadataBlock {
  std::uint64_t iteration = 0;
  std::vector<VariableIndexEntry> variables;
  std::vector<AttributeEntry> attributes;

  bool operator==(const MetadataBlock&) const = default;
};

// Block framing: magic, u64 payload length, payload, u32 CRC-32 of payload.
std::vector<std::byte> encode_block(const MetadataBlock& block);
// Decodes every block in `bytes`, which must hold whole blocks only.
// Throws CorruptIndex on any framing, checksum or content error.
std::vector<MetadataBlock> decode_blocks(std::span<const std::byte> bytes);

}  // namespace pmdio::format
