#include "pmdio/codecs.hpp"

#include <lzma.h>
#include <zlib.h>

#include <algorithm>
#include <cstring>

#include "pmdio/error.hpp"

namespace pmdio {

namespace {

const Bytef* as_bytef(const std::byte* p) { return reinterpret_cast<const Bytef*>(p); }
Bytef* as_bytef(std::byte* p) { return reinterpret_cast<Bytef*>(p); }

int clamp_level(int level) { return std::clamp(level, 0, 9); }

// Codec 1 stays in deflate's fast range regardless of the requested level.
int deflate_level(int level) { return 1 + clamp_level(level) / 4; }

void deflate_into(std::span<const std::byte> raw, int level, std::vector<std::byte>& out) {
  const auto base = out.size();
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  out.resize(base + bound);
  int rc = compress2(as_bytef(out.data() + base), &bound, as_bytef(raw.data()), static_cast<uLong>(raw.size()),
                     deflate_level(level));
  if (rc != Z_OK) fail(Errc::codec_error, "deflate failed with code " + std::to_string(rc));
  out.resize(base + bound);
}

void lzma_into(std::span<const std::byte> raw, int level, std::vector<std::byte>& out) {
  const auto base = out.size();
  out.resize(base + lzma_stream_buffer_bound(raw.size()));
  std::size_t pos = base;
  lzma_ret rc = lzma_easy_buffer_encode(static_cast<std::uint32_t>(clamp_level(level)), LZMA_CHECK_NONE, nullptr,
                                        reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size(),
                                        reinterpret_cast<std::uint8_t*>(out.data()), &pos, out.size());
  if (rc != LZMA_OK) fail(Errc::codec_error, "lzma encode failed with code " + std::to_string(rc));
  out.resize(pos);
}

}  // namespace

std::string_view codec_name(CodecId id) noexcept {
  switch (id) {
    case CodecId::none: return "none";
    case CodecId::blosc_like: return "blosc-like";
    case CodecId::bzip2_like: return "bzip2-like";
  }
  return "unknown";
}

std::optional<CodecId> codec_from_name(std::string_view name) noexcept {
  if (name == "none") return CodecId::none;
  if (name == "blosc-like") return CodecId::blosc_like;
  if (name == "bzip2-like") return CodecId::bzip2_like;
  return std::nullopt;
}

void shuffle_bytes(std::span<const std::byte> in, std::size_t element_size, std::span<std::byte> out) {
  const std::size_t n = in.size() / element_size;
  for (std::size_t e = 0; e < n; ++e)
    for (std::size_t b = 0; b < element_size; ++b) out[b * n + e] = in[e * element_size + b];
}

void unshuffle_bytes(std::span<const std::byte> in, std::size_t element_size, std::span<std::byte> out) {
  const std::size_t n = in.size() / element_size;
  for (std::size_t e = 0; e < n; ++e)
    for (std::size_t b = 0; b < element_size; ++b) out[e * element_size + b] = in[b * n + e];
}

void compress_block_into(const CodecConfig& config, std::span<const std::byte> raw, std::size_t element_size,
                         std::vector<std::byte>& out) {
  switch (config.id) {
    case CodecId::none:
      out.insert(out.end(), raw.begin(), raw.end());
      return;
    case CodecId::blosc_like: {
      const bool shuffle = config.shuffle && element_size > 1 && element_size < 256;
      if (shuffle && raw.size() % element_size != 0)
        fail(Errc::codec_error, "buffer length is not a multiple of the element size");
      out.push_back(static_cast<std::byte>(shuffle ? element_size : 0));
      if (shuffle) {
        std::vector<std::byte> transposed(raw.size());
        shuffle_bytes(raw, element_size, transposed);
        deflate_into(transposed, config.level, out);
      } else {
        deflate_into(raw, config.level, out);
      }
      return;
    }
    case CodecId::bzip2_like:
      lzma_into(raw, config.level, out);
      return;
  }
  fail(Errc::unknown_codec, "codec id " + std::to_string(static_cast<int>(config.id)));
}

std::vector<std::byte> compress_block(const CodecConfig& config, std::span<const std::byte> raw,
                                      std::size_t element_size) {
  std::vector<std::byte> out;
  compress_block_into(config, raw, element_size, out);
  return out;
}

std::vector<std::byte> decompress_block(std::uint16_t codec_id, int, std::span<const std::byte> stored,
                                        std::uint64_t raw_len) {
  std::vector<std::byte> out(raw_len);
  switch (static_cast<CodecId>(codec_id)) {
    case CodecId::none:
      if (stored.size() != raw_len)
        fail(Errc::decode_error, "stored length " + std::to_string(stored.size()) + " != raw length " +
                                     std::to_string(raw_len));
      if (raw_len > 0) std::memcpy(out.data(), stored.data(), raw_len);
      return out;
    case CodecId::blosc_like: {
      if (stored.empty()) fail(Errc::decode_error, "empty blosc-like block");
      const auto element_size = static_cast<std::size_t>(stored[0]);
      if (element_size > 0 && raw_len % element_size != 0)
        fail(Errc::decode_error, "raw length is not a multiple of the shuffle element size");
      auto body = stored.subspan(1);
      std::vector<std::byte> inflated(raw_len);
      uLongf dest_len = static_cast<uLongf>(raw_len);
      // uncompress() wants a non-null destination even for empty output.
      std::byte dummy{};
      std::byte* dest = raw_len > 0 ? inflated.data() : &dummy;
      uLong src_len = static_cast<uLong>(body.size());
      int rc = uncompress2(as_bytef(dest), &dest_len, as_bytef(body.data()), &src_len);
      if (rc != Z_OK || dest_len != raw_len || src_len != body.size())
        fail(Errc::decode_error, "deflate stream does not decode to " + std::to_string(raw_len) + " bytes");
      if (element_size > 1) unshuffle_bytes(inflated, element_size, out);
      else out = std::move(inflated);
      return out;
    }
    case CodecId::bzip2_like: {
      std::uint64_t memlimit = UINT64_MAX;
      std::size_t in_pos = 0;
      std::size_t out_pos = 0;
      std::uint8_t dummy = 0;
      auto* dest = raw_len > 0 ? reinterpret_cast<std::uint8_t*>(out.data()) : &dummy;
      lzma_ret rc = lzma_stream_buffer_decode(&memlimit, 0, nullptr, reinterpret_cast<const std::uint8_t*>(stored.data()),
                                              &in_pos, stored.size(), dest, &out_pos, raw_len);
      if (rc != LZMA_OK || out_pos != raw_len || in_pos != stored.size())
        fail(Errc::decode_error, "lzma stream does not decode to " + std::to_string(raw_len) + " bytes");
      return out;
    }
  }
  fail(Errc::unknown_codec, "codec id " + std::to_string(codec_id));
}

std::uint32_t crc32(std::span<const std::byte> data) noexcept {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  std::size_t pos = 0;
  while (pos < data.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(data.size() - pos, 1u << 30));
    crc = ::crc32(crc, as_bytef(data.data() + pos), n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace pmdio
