#pragma once

// Per-chunk block codecs.
//
//   0  none        identity
//   1  blosc-like  optional byte shuffle + fast deflate
//   2  bzip2-like  LZMA, slower and higher ratio
//
// Stored layout of codec 1: one byte holding the shuffle element size (0 when
// shuffle is off) followed by a zlib stream. Codec 2 stores a raw .xz stream.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace pmdio {

enum class CodecId : std::uint16_t { none = 0, blosc_like = 1, bzip2_like = 2 };

struct CodecConfig {
  CodecId id = CodecId::none;
  int level = 5;  // 0..9
  bool shuffle = true;
};

std::string_view codec_name(CodecId id) noexcept;
std::optional<CodecId> codec_from_name(std::string_view name) noexcept;

// Compresses `raw` and appends the stored form to `out`. Expansion of
// incompressible input is allowed.
void compress_block_into(const CodecConfig& config, std::span<const std::byte> raw, std::size_t element_size,
                         std::vector<std::byte>& out);

std::vector<std::byte> compress_block(const CodecConfig& config, std::span<const std::byte> raw,
                                      std::size_t element_size);

// Throws UnknownCodec for ids outside 0..2 and DecodeError when `stored` does
// not decode to exactly raw_len bytes.
std::vector<std::byte> decompress_block(std::uint16_t codec_id, int level_hint, std::span<const std::byte> stored,
                                        std::uint64_t raw_len);

// Byte transposition: output holds byte 0 of every element, then byte 1, ...
void shuffle_bytes(std::span<const std::byte> in, std::size_t element_size, std::span<std::byte> out);
void unshuffle_bytes(std::span<const std::byte> in, std::size_t element_size, std::span<std::byte> out);

std::uint32_t crc32(std::span<const std::byte> data) noexcept;

}  // namespace pmdio
