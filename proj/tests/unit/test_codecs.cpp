#include <doctest.h>

#include <cstring>
#include <random>

#include "pmdio/codecs.hpp"
#include "pmdio/error.hpp"

using namespace pmdio;

namespace {

std::vector<std::byte> bytes_of(std::string_view s) {
  std::vector<std::byte> b(s.size());
  std::memcpy(b.data(), s.data(), s.size());
  return b;
}

}  // namespace

TEST_CASE("crc32 matches the standard check value") {
  CHECK(crc32(bytes_of("123456789")) == 0xCBF43926u);
  CHECK(crc32({}) == 0u);
}

TEST_CASE("codec names round-trip") {
  for (auto id : {CodecId::none, CodecId::blosc_like, CodecId::bzip2_like}) CHECK(codec_from_name(codec_name(id)) == id);
  CHECK_FALSE(codec_from_name("zstd").has_value());
}

TEST_CASE("shuffle transposes bytes and unshuffle inverts it") {
  std::vector<std::byte> in(16);
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = std::byte{static_cast<unsigned char>(i)};
  std::vector<std::byte> sh(16), back(16);
  shuffle_bytes(in, 4, sh);
  CHECK(sh[0] == std::byte{0});
  CHECK(sh[1] == std::byte{4});
  CHECK(sh[4] == std::byte{1});
  unshuffle_bytes(sh, 4, back);
  CHECK(back == in);
}

TEST_CASE("constant buffers compress at least 4x under both codecs") {
  for (std::size_t n : {4096u, 65536u}) {
    std::vector<double> v(n / 8, 3.25);
    auto raw = std::as_bytes(std::span<const double>(v));
    for (auto id : {CodecId::blosc_like, CodecId::bzip2_like}) {
      auto stored = compress_block({id, 5, true}, raw, 8);
      CHECK(stored.size() * 4 <= raw.size());
      CHECK(decompress_block(static_cast<std::uint16_t>(id), 5, stored, raw.size()) ==
            std::vector<std::byte>(raw.begin(), raw.end()));
    }
  }
}

TEST_CASE("random buffers round-trip under every codec and level") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 600; ++i) {
    const auto id = static_cast<CodecId>(i % 3);
    const int level = static_cast<int>(rng() % 10);
    const bool shuffle = rng() & 1;
    const std::size_t esize = (rng() & 1) ? 8 : 4;
    std::vector<std::byte> raw((rng() % 3000) / esize * esize);
    const auto alphabet = 1 + rng() % 256;
    for (auto& b : raw) b = std::byte{static_cast<unsigned char>(rng() % alphabet)};
    auto stored = compress_block({id, level, shuffle}, raw, esize);
    CHECK(decompress_block(static_cast<std::uint16_t>(id), level, stored, raw.size()) == raw);
  }
}

TEST_CASE("decoding errors are typed") {
  std::vector<double> v(512, 1.0);
  auto raw = std::as_bytes(std::span<const double>(v));
  CHECK_THROWS_AS(decompress_block(7, 0, raw, raw.size()), Error);
  try {
    decompress_block(7, 0, raw, raw.size());
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unknown_codec);
  }
  for (auto id : {CodecId::blosc_like, CodecId::bzip2_like}) {
    auto stored = compress_block({id, 5, true}, raw, 8);
    auto truncated = std::span<const std::byte>(stored).first(stored.size() / 2);
    try {
      decompress_block(static_cast<std::uint16_t>(id), 5, truncated, raw.size());
      FAIL("truncated stream decoded");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::decode_error);
    }
    try {
      decompress_block(static_cast<std::uint16_t>(id), 5, stored, raw.size() + 8);
      FAIL("wrong raw length accepted");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::decode_error);
    }
  }
  CHECK_THROWS(decompress_block(0, 0, raw, raw.size() - 1));
}
