#pragma once

// Raid0 stripe geometry and a two-parameter write-time model.
//
// Byte b of a file lands on stripe slot floor(b / S) mod c. Slots are
// positions within a file's layout; physical OST ids travel alongside
// (ost_ids) but the model works on slots.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pmdio {

struct StripeConfig {
  std::uint32_t stripe_count = 1;
  std::uint64_t stripe_size = 1u << 20;
  std::string pattern = "raid0";
  std::vector<std::uint32_t> ost_ids;  // empty or exactly stripe_count entries

  bool operator==(const StripeConfig&) const = default;
};

// Throws InvalidConfig unless c >= 1, S is a power of two >= 64 KiB, the
// pattern is raid0 and ost_ids is empty or of length c.
void validate(const StripeConfig& config);

struct StripeSegment {
  std::uint32_t ost_slot = 0;
  std::uint64_t file_offset = 0;
  std::uint64_t stripe_offset = 0;  // offset within the stripe unit
  std::uint64_t length = 0;

  bool operator==(const StripeSegment&) const = default;
};

struct OstAssignment {
  std::vector<StripeSegment> segments;
  bool operator==(const OstAssignment&) const = default;
};

OstAssignment map_byte_range(const StripeConfig& config, std::uint64_t offset, std::uint64_t length);

// Bytes held by each slot for a file of the given size; size c.
std::vector<std::uint64_t> per_ost_load(const StripeConfig& config, std::uint64_t file_size);
// Stripe units (whole or partial) held by each slot.
std::vector<std::uint64_t> per_ost_stripes(const StripeConfig& config, std::uint64_t file_size);

// Every slot costs bytes/B + stripes*L. Concurrently written files are laid
// out on a pool of `pool_size` OSTs (0 means c): file f starts at pool OST
// (f * c) mod pool_size and its slot k sits on pool OST (start + k) mod
// pool_size. The estimate is the slowest pool OST.
struct StripeModel {
  double bandwidth = 1.0 * (1ull << 30);  // bytes per second per OST
  double latency = 0.0;                   // seconds per stripe unit
  std::uint32_t pool_size = 0;
};

struct PoolLoad {
  std::vector<std::uint64_t> bytes;
  std::vector<std::uint64_t> stripes;
  std::vector<double> seconds;
  double max_seconds = 0;
};

PoolLoad pool_load(const StripeConfig& config, std::span<const std::uint64_t> file_sizes, const StripeModel& model);
double estimate_write_time(const StripeConfig& config, std::span<const std::uint64_t> file_sizes,
                           const StripeModel& model);

// `lfs getstripe` output for one file.
struct StripeObject {
  std::uint32_t obdidx = 0;
  std::uint64_t objid = 0;
  std::uint64_t group = 0;

  bool operator==(const StripeObject&) const = default;
};

struct GetStripe {
  std::string path;  // empty when the listing has no path line
  StripeConfig config;
  std::uint32_t layout_gen = 0;
  std::optional<std::uint32_t> stripe_offset;
  std::vector<StripeObject> objects;

  bool operator==(const GetStripe&) const = default;
};

// Accepts an optional leading "$ lfs getstripe ..." line and path line.
// A missing lmm_stripe_count, lmm_stripe_size or lmm_pattern is a ParseError
// naming the field.
GetStripe parse_getstripe(std::string_view text);
std::string render_getstripe(const GetStripe& listing);

// Per-slot plan for one file written with the given model.
std::string render_stripe_plan(const StripeConfig& config, std::uint64_t file_size, const StripeModel& model,
                               bool json);

}  // namespace pmdio
