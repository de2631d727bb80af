#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "pmdio/error.hpp"
#include "pmdio/striping.hpp"

using namespace pmdio;

namespace {

// Walks the range one byte at a time and starts a segment at every stripe
// unit boundary.
OstAssignment brute_force(std::uint32_t c, std::uint64_t S, std::uint64_t offset, std::uint64_t length) {
  OstAssignment out;
  for (std::uint64_t b = offset; b < offset + length; ++b) {
    const auto slot = static_cast<std::uint32_t>((b / S) % c);
    if (b == offset || b % S == 0) out.segments.push_back({slot, b, b % S, 0});
    ++out.segments.back().length;
  }
  return out;
}

std::string fixture() {
  std::ifstream in(std::string(PMDIO_TEST_DATA) + "/getstripe_c8_16m.txt");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("map_byte_range agrees with a byte-by-byte raid0 walk") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1500; ++i) {
    StripeConfig cfg;
    cfg.stripe_count = 1 + static_cast<std::uint32_t>(rng() % 16);
    cfg.stripe_size = 65536ull << (rng() % 9);
    const auto S = cfg.stripe_size;
    // Start near a unit boundary so most ranges cross one or more.
    const auto unit = rng() % (4ull * cfg.stripe_count + 1);
    const auto jitter = rng() % (2 * 65536);
    const auto offset = unit * S > jitter ? unit * S - jitter : unit * S + jitter;
    const auto length = rng() % (256 * 1024);
    CHECK(map_byte_range(cfg, offset, length) == brute_force(cfg.stripe_count, S, offset, length));
  }
}

TEST_CASE("per-slot loads add up to the file size") {
  StripeConfig cfg{3, 1 << 16, "raid0", {}};
  for (std::uint64_t size : {0ull, 1ull, 65536ull, 65537ull, 10'000'000ull}) {
    auto load = per_ost_load(cfg, size);
    std::uint64_t total = 0;
    for (auto x : load) total += x;
    CHECK(total == size);
    std::vector<std::uint64_t> oracle(3, 0);
    for (const auto& s : map_byte_range(cfg, 0, size).segments) oracle[s.ost_slot] += s.length;
    CHECK(load == oracle);
  }
  CHECK(per_ost_stripes(cfg, 4 * 65536 + 1) == std::vector<std::uint64_t>{2, 2, 1});
}

TEST_CASE("invalid layouts are rejected") {
  auto code = [](StripeConfig c) {
    try {
      validate(c);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::ok;
  };
  CHECK(code({0, 1 << 20, "raid0", {}}) == Errc::invalid_config);
  CHECK(code({1, 1000, "raid0", {}}) == Errc::invalid_config);
  CHECK(code({1, 32768, "raid0", {}}) == Errc::invalid_config);
  CHECK(code({2, 1 << 20, "raid1", {}}) == Errc::invalid_config);
  CHECK(code({2, 1 << 20, "raid0", {5}}) == Errc::invalid_config);
  CHECK(code({2, 1 << 20, "raid0", {5, 6}}) == Errc::ok);
}

TEST_CASE("the recorded getstripe listing parses exactly") {
  auto g = parse_getstripe(fixture());
  CHECK(g.path == "io_openPMD/dat_file.bp4/data.0");
  CHECK(g.config.stripe_count == 8);
  CHECK(g.config.stripe_size == 16777216);
  CHECK(g.config.pattern == "raid0");
  CHECK(g.layout_gen == 0);
  CHECK(g.stripe_offset == 17u);
  REQUIRE(g.objects.size() == 8);
  CHECK(g.objects[0] == StripeObject{17, 297315680, 0x700000400});
  CHECK(g.objects[6] == StripeObject{29, 294976177, 0xa00000400});
  CHECK(g.config.ost_ids == std::vector<std::uint32_t>{17, 19, 21, 23, 25, 27, 29, 31});
}

TEST_CASE("rendered listings parse back to the same value") {
  auto g = parse_getstripe(fixture());
  CHECK(parse_getstripe(render_getstripe(g)) == g);
  // The rendering reproduces the original lines after the command prompt.
  auto text = fixture();
  CHECK(render_getstripe(g) == text.substr(text.find('\n') + 1));
}

TEST_CASE("missing fields are named") {
  try {
    parse_getstripe("lmm_stripe_count: 2\nlmm_pattern: raid0\n");
    FAIL("parsed without a stripe size");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse_error);
    CHECK(std::string(e.what()).find("lmm_stripe_size") != std::string::npos);
  }
}

TEST_CASE("bandwidth-bound writes get faster with more stripes") {
  const std::uint64_t sizes[] = {1ull << 30};
  StripeModel m{1e9, 0.0, 0};
  double prev = 1e300;
  for (std::uint32_t c : {1u, 2u, 4u, 8u, 16u}) {
    const double t = estimate_write_time({c, 1 << 20, "raid0", {}}, sizes, m);
    CHECK(t < prev);
    prev = t;
  }
  CHECK(estimate_write_time({1, 1 << 20, "raid0", {}}, sizes, m) == doctest::Approx(1.073741824));
}

TEST_CASE("latency-bound shared pools can get slower with more stripes") {
  // Two files on an 8-OST pool: four stripes each tile the pool, five make
  // the second file wrap onto OSTs the first already uses.
  const std::uint64_t S = 1 << 20;
  const std::uint64_t sizes[] = {4 * S, 4 * S};
  StripeModel m{1e12, 1e-3, 8};
  const double t4 = estimate_write_time({4, S, "raid0", {}}, sizes, m);
  const double t5 = estimate_write_time({5, S, "raid0", {}}, sizes, m);
  CHECK(t5 > t4);
  auto load = pool_load({5, S, "raid0", {}}, sizes, m);
  CHECK(load.stripes == std::vector<std::uint64_t>{2, 1, 1, 1, 0, 1, 1, 1});
}

TEST_CASE("stripe plans render as text and json") {
  StripeConfig cfg{4, 1 << 20, "raid0", {}};
  auto j = nlohmann::json::parse(render_stripe_plan(cfg, 10 << 20, StripeModel{}, true));
  CHECK(j["slots"].size() == 4);
  CHECK(j["slots"][0]["bytes"] == 3 << 20);
  auto text = render_stripe_plan(cfg, 10 << 20, StripeModel{}, false);
  CHECK(text.find("estimated write time") != std::string::npos);
}
