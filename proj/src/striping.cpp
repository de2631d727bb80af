#include "pmdio/striping.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <sstream>

#include "pmdio/error.hpp"

namespace pmdio {

void validate(const StripeConfig& c) {
  if (c.stripe_count < 1) fail(Errc::invalid_config, "stripe count must be >= 1");
  if (c.stripe_size < (64u << 10) || !std::has_single_bit(c.stripe_size))
    fail(Errc::invalid_config, "stripe size must be a power of two >= 64 KiB, got " + std::to_string(c.stripe_size));
  if (c.pattern != "raid0") fail(Errc::invalid_config, "only the raid0 pattern is supported, got " + c.pattern);
  if (!c.ost_ids.empty() && c.ost_ids.size() != c.stripe_count)
    fail(Errc::invalid_config, "ost id list must have stripe_count entries");
}

OstAssignment map_byte_range(const StripeConfig& config, std::uint64_t offset, std::uint64_t length) {
  validate(config);
  const auto S = config.stripe_size;
  OstAssignment out;
  auto b = offset;
  const auto end = offset + length;
  while (b < end) {
    const auto unit = b / S;
    const auto within = b % S;
    const auto len = std::min(S - within, end - b);
    out.segments.push_back({static_cast<std::uint32_t>(unit % config.stripe_count), b, within, len});
    b += len;
  }
  return out;
}

std::vector<std::uint64_t> per_ost_load(const StripeConfig& config, std::uint64_t file_size) {
  validate(config);
  const auto c = config.stripe_count;
  const auto S = config.stripe_size;
  const auto full = file_size / S;
  const auto tail = file_size % S;
  std::vector<std::uint64_t> load(c, (full / c) * S);
  for (std::uint64_t k = 0; k < full % c; ++k) load[k] += S;
  if (tail) load[full % c] += tail;
  return load;
}

std::vector<std::uint64_t> per_ost_stripes(const StripeConfig& config, std::uint64_t file_size) {
  validate(config);
  const auto c = config.stripe_count;
  const auto units = (file_size + config.stripe_size - 1) / config.stripe_size;
  std::vector<std::uint64_t> n(c, units / c);
  for (std::uint64_t k = 0; k < units % c; ++k) ++n[k];
  return n;
}

PoolLoad pool_load(const StripeConfig& config, std::span<const std::uint64_t> file_sizes, const StripeModel& model) {
  validate(config);
  if (!(model.bandwidth > 0)) fail(Errc::invalid_config, "bandwidth must be positive");
  if (model.latency < 0) fail(Errc::invalid_config, "latency must be non-negative");
  const std::uint32_t c = config.stripe_count;
  const std::uint32_t pool = model.pool_size ? model.pool_size : c;
  if (pool < c) fail(Errc::invalid_config, "OST pool smaller than the stripe count");
  PoolLoad out;
  out.bytes.assign(pool, 0);
  out.stripes.assign(pool, 0);
  for (std::size_t f = 0; f < file_sizes.size(); ++f) {
    const auto start = (f * c) % pool;
    const auto bytes = per_ost_load(config, file_sizes[f]);
    const auto stripes = per_ost_stripes(config, file_sizes[f]);
    for (std::uint32_t k = 0; k < c; ++k) {
      out.bytes[(start + k) % pool] += bytes[k];
      out.stripes[(start + k) % pool] += stripes[k];
    }
  }
  out.seconds.resize(pool);
  for (std::uint32_t o = 0; o < pool; ++o) {
    out.seconds[o] = static_cast<double>(out.bytes[o]) / model.bandwidth +
                     static_cast<double>(out.stripes[o]) * model.latency;
    out.max_seconds = std::max(out.max_seconds, out.seconds[o]);
  }
  return out;
}

double estimate_write_time(const StripeConfig& config, std::span<const std::uint64_t> file_sizes,
                           const StripeModel& model) {
  return pool_load(config, file_sizes, model).max_seconds;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> words(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    auto j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
T number(std::string_view text, const std::string& field, int base = 10) {
  if (base == 16) {
    if (text.size() < 3 || text[0] != '0' || (text[1] != 'x' && text[1] != 'X'))
      fail(Errc::parse_error, field + ": expected a hex value, got '" + std::string(text) + "'");
    text.remove_prefix(2);
  }
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v, base);
  if (ec != std::errc{} || p != text.data() + text.size())
    fail(Errc::parse_error, field + ": bad number '" + std::string(text) + "'");
  return v;
}

std::string hex(std::uint64_t v) {
  char b[24];
  std::snprintf(b, sizeof b, "0x%llx", static_cast<unsigned long long>(v));
  return b;
}

}  // namespace

GetStripe parse_getstripe(std::string_view text) {
  GetStripe g;
  std::map<std::string, std::string> fields;
  bool in_table = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty() || line.front() == '$') continue;
    if (line.rfind("lmm_", 0) == 0) {
      auto colon = line.find(':');
      if (colon == std::string_view::npos) fail(Errc::parse_error, "malformed line '" + std::string(line) + "'");
      auto key = std::string(line.substr(0, colon));
      if (fields.count(key)) fail(Errc::parse_error, "duplicate field " + key);
      fields[key] = std::string(trim(line.substr(colon + 1)));
      continue;
    }
    auto w = words(line);
    if (!w.empty() && w[0] == "obdidx") {
      in_table = true;
      continue;
    }
    if (in_table) {
      if (w.size() != 4) fail(Errc::parse_error, "object table row needs 4 columns: '" + std::string(line) + "'");
      StripeObject o;
      o.obdidx = number<std::uint32_t>(w[0], "obdidx");
      o.objid = number<std::uint64_t>(w[1], "objid");
      if (number<std::uint64_t>(w[2], "objid", 16) != o.objid)
        fail(Errc::parse_error, "objid columns disagree in row '" + std::string(line) + "'");
      o.group = number<std::uint64_t>(w[3], "group", 16);
      g.objects.push_back(o);
      continue;
    }
    if (fields.empty() && g.path.empty()) {
      g.path = std::string(line);
      continue;
    }
    fail(Errc::parse_error, "unexpected line '" + std::string(line) + "'");
  }
  auto require = [&](const char* name) -> const std::string& {
    auto it = fields.find(name);
    if (it == fields.end()) fail(Errc::parse_error, std::string("missing field ") + name);
    return it->second;
  };
  g.config.stripe_count = number<std::uint32_t>(require("lmm_stripe_count"), "lmm_stripe_count");
  g.config.stripe_size = number<std::uint64_t>(require("lmm_stripe_size"), "lmm_stripe_size");
  g.config.pattern = require("lmm_pattern");
  if (auto it = fields.find("lmm_layout_gen"); it != fields.end())
    g.layout_gen = number<std::uint32_t>(it->second, "lmm_layout_gen");
  if (auto it = fields.find("lmm_stripe_offset"); it != fields.end())
    g.stripe_offset = number<std::uint32_t>(it->second, "lmm_stripe_offset");
  if (!g.objects.empty()) {
    if (g.objects.size() != g.config.stripe_count)
      fail(Errc::parse_error, "object table has " + std::to_string(g.objects.size()) + " rows for stripe count " +
                                  std::to_string(g.config.stripe_count));
    for (const auto& o : g.objects) g.config.ost_ids.push_back(o.obdidx);
  }
  return g;
}

std::string render_getstripe(const GetStripe& g) {
  std::ostringstream out;
  if (!g.path.empty()) out << g.path << '\n';
  out << "lmm_stripe_count:  " << g.config.stripe_count << '\n';
  out << "lmm_stripe_size:   " << g.config.stripe_size << '\n';
  out << "lmm_pattern:       " << g.config.pattern << '\n';
  out << "lmm_layout_gen:    " << g.layout_gen << '\n';
  if (g.stripe_offset) out << "lmm_stripe_offset: " << *g.stripe_offset << '\n';
  if (!g.objects.empty()) {
    out << "        obdidx           objid           objid           group\n";
    char row[128];
    for (const auto& o : g.objects) {
      std::snprintf(row, sizeof row, "%14u%16llu%15s%17s\n", o.obdidx, static_cast<unsigned long long>(o.objid),
                    hex(o.objid).c_str(), hex(o.group).c_str());
      out << row;
    }
  }
  return out.str();
}

std::string render_stripe_plan(const StripeConfig& config, std::uint64_t file_size, const StripeModel& model,
                               bool json) {
  const std::uint64_t sizes[] = {file_size};
  const auto load = per_ost_load(config, file_size);
  const auto stripes = per_ost_stripes(config, file_size);
  const auto t = estimate_write_time(config, sizes, model);
  if (json) {
    nlohmann::json slots = nlohmann::json::array();
    for (std::size_t k = 0; k < load.size(); ++k) {
      nlohmann::json s = {{"slot", k}, {"bytes", load[k]}, {"stripes", stripes[k]}};
      if (!config.ost_ids.empty()) s["obdidx"] = config.ost_ids[k];
      slots.push_back(s);
    }
    nlohmann::json doc = {{"stripe_count", config.stripe_count},
                          {"stripe_size", config.stripe_size},
                          {"pattern", config.pattern},
                          {"file_size", file_size},
                          {"bandwidth", model.bandwidth},
                          {"latency", model.latency},
                          {"slots", slots},
                          {"estimated_write_s", t}};
    return doc.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "stripe_count " << config.stripe_count << "  stripe_size " << config.stripe_size << "  pattern "
      << config.pattern << "  file_size " << file_size << '\n';
  out << "slot  obdidx        bytes  stripes\n";
  char row[96];
  for (std::size_t k = 0; k < load.size(); ++k) {
    const std::string ost = config.ost_ids.empty() ? "-" : std::to_string(config.ost_ids[k]);
    std::snprintf(row, sizeof row, "%4zu  %6s  %11llu  %7llu\n", k, ost.c_str(),
                  static_cast<unsigned long long>(load[k]), static_cast<unsigned long long>(stripes[k]));
    out << row;
  }
  std::snprintf(row, sizeof row, "estimated write time %.6f s (B=%.3g B/s, L=%.3g s)\n", t, model.bandwidth,
                model.latency);
  out << row;
  return out.str();
}

}  // namespace pmdio
