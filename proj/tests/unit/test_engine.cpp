#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <mutex>
#include <numeric>
#include <random>
#include <set>

#include "pmdio/engine.hpp"
#include "pmdio/series.hpp"
#include "support.hpp"

using namespace pmdio;
namespace fs = std::filesystem;

namespace {

EngineConfig config_with(AggregationSetting agg, CodecId codec = CodecId::none, bool profiling = false) {
  EngineConfig c;
  c.num_aggregators = agg;
  c.codec.id = codec;
  c.profiling = profiling;
  return c;
}

double value_at(std::uint64_t step, std::uint64_t i) { return static_cast<double>(step) * 1e6 + static_cast<double>(i); }

// Each rank stores a random number of contiguous chunks at its prefix-sum
// offset into a 1-D component of the global length.
std::uint64_t write_random_layout(Series& s, RankGroup& g, std::uint64_t step, std::mt19937_64& rng) {
  auto it = s.create_iteration(step);
  const int pieces = 1 + static_cast<int>(rng() % 3);
  std::vector<std::uint64_t> lengths(static_cast<std::size_t>(pieces));
  for (auto& l : lengths) l = 1 + rng() % 500;
  const auto local = std::accumulate(lengths.begin(), lengths.end(), std::uint64_t{0});
  const auto offset = g.exclusive_prefix_sum(local);
  const auto global = g.all_reduce_sum(local);
  auto rc = it.mesh("E")["x"];
  rc.define(Datatype::float64, {global});
  auto pos = offset;
  for (auto l : lengths) {
    std::vector<double> v(l);
    for (std::uint64_t k = 0; k < l; ++k) v[k] = value_at(step, pos + k);
    rc.store_chunk(std::move(v), {pos}, {l});
    pos += l;
  }
  s.close_iteration(step);
  return global;
}

void check_component(const SeriesReader& r, std::uint64_t step, std::uint64_t global) {
  auto v = r.read_as<double>(step, "E", "x");
  REQUIRE(v.size() == global);
  bool all = true;
  for (std::uint64_t i = 0; i < global; ++i) all = all && v[i] == value_at(step, i);
  CHECK(all);
}

std::vector<std::byte> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> c((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> b(c.size());
  std::memcpy(b.data(), c.data(), c.size());
  return b;
}

void write_file(const fs::path& p, std::span<const std::byte> b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("random layouts round-trip for every aggregation and codec") {
  for (int ranks : {1, 3, 5}) {
    for (int agg : {1, 2, ranks}) {
      for (auto codec : {CodecId::none, CodecId::blosc_like, CodecId::bzip2_like}) {
        testing::TempDir dir;
        const auto path = dir / "rt.bp4";
        auto globals = spawn_group(ranks, [&](RankGroup& g) {
          std::mt19937_64 rng(static_cast<std::uint64_t>(g.rank() * 31 + agg));
          auto s = Series::open(path, Access::create, g, config_with(agg, codec));
          std::vector<std::uint64_t> out;
          for (std::uint64_t step = 1; step <= 3; ++step) out.push_back(write_random_layout(*s, g, step, rng));
          s->close();
          return out;
        });
        auto r = SeriesReader::open(path);
        CHECK(r.iterations() == std::vector<std::uint64_t>{1, 2, 3});
        for (std::uint64_t step = 1; step <= 3; ++step) check_component(r, step, globals[0][step - 1]);
      }
    }
  }
}

TEST_CASE("two-dimensional blocks read back through hyperslabs") {
  testing::TempDir dir;
  const auto path = dir / "2d.bp4";
  spawn_group(4, [&](RankGroup& g) {
    auto s = Series::open(path, Access::create, g, config_with(2, CodecId::blosc_like));
    auto it = s->create_iteration(7);
    auto rc = it.mesh("rho")["f"];
    rc.define(Datatype::float32, {8, 6});
    // Rank r owns rows [2r, 2r+2).
    std::vector<float> v(12);
    for (int i = 0; i < 12; ++i) v[static_cast<std::size_t>(i)] = static_cast<float>((2 * g.rank() + i / 6) * 10 + i % 6);
    rc.store_chunk(std::move(v), {2u * static_cast<std::uint64_t>(g.rank()), 0}, {2, 6});
    s->close_iteration(7);
    s->close();
  });
  auto r = SeriesReader::open(path);
  auto whole = r.read_as<float>(7, "rho", "f");
  REQUIRE(whole.size() == 48);
  for (int i = 0; i < 48; ++i) CHECK(whole[static_cast<std::size_t>(i)] == static_cast<float>((i / 6) * 10 + i % 6));
  auto slab = r.read_as<float>(7, "rho", "f", Selection{{1, 2}, {4, 3}});
  REQUIRE(slab.size() == 12);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 3; ++b)
      CHECK(slab[static_cast<std::size_t>(a * 3 + b)] == static_cast<float>((1 + a) * 10 + 2 + b));
  CHECK(testing::code_of([&] { r.read(7, "rho", "f", Selection{{6, 0}, {3, 6}}); }) == Errc::out_of_bounds);
  CHECK(testing::code_of([&] { r.read(7, "rho", "g"); }) == Errc::not_found);
  CHECK(testing::code_of([&] { r.read(8, "rho", "f"); }) == Errc::not_found);
}

TEST_CASE("file census follows the aggregation setting") {
  for (int agg : {1, 2, 4, 8}) {
    for (int ranks : {1, 3, 8}) {
      testing::TempDir dir;
      const auto path = dir / "c.bp4";
      spawn_group(ranks, [&](RankGroup& g) {
        std::mt19937_64 rng(1);
        auto s = Series::open(path, Access::create, g, config_with(agg, CodecId::none, true));
        write_random_layout(*s, g, 1, rng);
        s->close();
      });
      CHECK(list_contents(path).files.size() == static_cast<std::size_t>(std::min(agg, ranks) + 3));
    }
  }
  for (int ranks : {2, 4, 6, 8}) {
    testing::TempDir dir;
    const auto path = dir / "n.bp4";
    spawn_group(ranks, [&](RankGroup& g) {
      auto cfg = config_with(PerNode{}, CodecId::none, true);
      cfg.ranks_per_node = 2;
      std::mt19937_64 rng(2);
      auto s = Series::open(path, Access::create, g, cfg);
      write_random_layout(*s, g, 1, rng);
      s->close();
    });
    CHECK(list_contents(path).files.size() == static_cast<std::size_t>(ranks / 2 + 3));
  }
}

TEST_CASE("aggregator plans are contiguous and balanced") {
  auto m = plan_aggregation(10, 3, 4);
  CHECK(m.num_agg == 3);
  CHECK(m.is_aggregator(0));
  CHECK(m.is_aggregator(4));
  CHECK(m.aggregator_of(9) == 7);
  std::vector<int> seen(3, 0);
  for (int r = 0; r < 10; ++r) ++seen[static_cast<std::size_t>(m.subfile_of(r))];
  CHECK(seen == std::vector<int>{4, 3, 3});
  for (int r = 1; r < 10; ++r) CHECK(m.subfile_of(r) >= m.subfile_of(r - 1));
  auto clamped = plan_aggregation(4, 8, 4);
  CHECK(clamped.num_agg == 4);
  CHECK(clamped.clamped);
  CHECK(plan_aggregation(7, PerNode{}, 2).num_agg == 4);
  CHECK_THROWS_AS(plan_aggregation(4, 0, 4), Error);
}

TEST_CASE("file-per-process mode writes one data file per rank") {
  testing::TempDir dir;
  const auto path = dir / "fpp.bp4";
  auto globals = spawn_group(5, [&](RankGroup& g) {
    auto cfg = config_with(1);
    cfg.file_mode = FileMode::file_per_process;
    std::mt19937_64 rng(static_cast<std::uint64_t>(g.rank()));
    auto s = Series::open(path, Access::create, g, cfg);
    auto n = write_random_layout(*s, g, 4, rng);
    s->close();
    return n;
  });
  CHECK(list_contents(path).files.size() == 5 + 2);
  check_component(SeriesReader::open(path), 4, globals[0]);
}

TEST_CASE("every flipped data byte is caught on read") {
  testing::TempDir dir;
  const auto path = dir / "flip.bp4";
  for (auto codec : {CodecId::none, CodecId::blosc_like}) {
    spawn_group(2, [&](RankGroup& g) {
      auto cfg = config_with(1, codec);
      cfg.overwrite = true;
      std::mt19937_64 rng(9);
      auto s = Series::open(path, Access::create, g, cfg);
      write_random_layout(*s, g, 1, rng);
      s->close();
    });
    const auto data = path / "data.0";
    const auto original = read_file(data);
    const auto r = SeriesReader::open(path);
    const auto& chunks = r.component(1, "E", "x").chunks;
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 150; ++trial) {
      const auto pos = rng() % original.size();
      auto bad = original;
      bad[pos] ^= std::byte{static_cast<unsigned char>(1 + rng() % 255)};
      write_file(data, bad);
      const ChunkInfo* hit = nullptr;
      for (const auto& c : chunks)
        if (pos >= c.file_offset && pos < c.file_offset + format::framed_chunk_size(c.header)) hit = &c;
      REQUIRE(hit != nullptr);
      try {
        read_chunk(path, *hit);
        FAIL("corruption at byte " << pos << " went unnoticed");
      } catch (const CorruptChunkError& e) {
        CHECK(e.subfile() == 0);
        CHECK(e.offset() == hit->file_offset);
      }
      CHECK(testing::code_of([&] { r.read(1, "E", "x"); }) == Errc::corrupt_chunk);
    }
    write_file(data, original);
    CHECK_NOTHROW(r.read(1, "E", "x"));
  }
}

namespace {

struct Append {
  fs::path file;
  std::uint64_t offset;
  std::vector<std::byte> bytes;
};

class TraceRecorder : public WriteObserver {
 public:
  void before_append(const fs::path& file, std::uint64_t offset, std::span<const std::byte> bytes) override {
    std::lock_guard lock(mutex_);
    trace.push_back({file.filename(), offset, {bytes.begin(), bytes.end()}});
  }
  std::mutex mutex_;
  std::vector<Append> trace;
};

}  // namespace

TEST_CASE("a crash at any byte of the write trace never exposes a torn step") {
  testing::TempDir dir;
  const auto path = dir / "crash.bp4";
  auto recorder = std::make_shared<TraceRecorder>();
  auto globals = spawn_group(3, [&](RankGroup& g) {
    auto cfg = config_with(2, CodecId::blosc_like);
    cfg.observer = recorder;
    std::mt19937_64 rng(static_cast<std::uint64_t>(g.rank()) + 77);
    auto s = Series::open(path, Access::create, g, cfg);
    std::vector<std::uint64_t> out;
    for (std::uint64_t step = 1; step <= 6; ++step) {
      out.push_back(write_random_layout(*s, g, step, rng));
      if (step == 4) out.push_back(write_random_layout(*s, g, 2, rng));  // rewrite of step 2
    }
    s->close();
    return out;
  });
  // Step values per commit, in commit order: 1,2,3,4,2',5,6.
  const std::vector<std::uint64_t> commit_steps{1, 2, 3, 4, 2, 5, 6};
  const auto& global = globals[0];

  std::uint64_t total = 0;
  for (const auto& a : recorder->trace) total += a.bytes.size();
  std::mt19937_64 rng(123);
  std::set<std::size_t> commit_counts;
  for (int trial = 0; trial < 60; ++trial) {
    const auto cut = trial == 0 ? total : rng() % (total + 1);
    testing::TempDir replay("replay");
    const auto rp = replay / "crash.bp4";
    fs::create_directories(rp);
    std::map<fs::path, std::vector<std::byte>> files;
    std::uint64_t budget = cut;
    std::size_t commits = 0;
    for (const auto& a : recorder->trace) {
      auto& f = files[a.file];
      const auto n = std::min<std::uint64_t>(budget, a.bytes.size());
      REQUIRE(f.size() == a.offset);
      f.insert(f.end(), a.bytes.begin(), a.bytes.begin() + static_cast<std::ptrdiff_t>(n));
      budget -= n;
      if (a.file == "md.idx" && a.offset >= format::kIndexHeaderSize && n == a.bytes.size()) ++commits;
      if (n < a.bytes.size()) break;
    }
    commit_counts.insert(commits);
    for (const auto& [name, bytes] : files) write_file(rp / name, bytes);
    for (const auto& a : recorder->trace)
      if (!fs::exists(rp / a.file)) write_file(rp / a.file, {});

    std::optional<SeriesReader> r;
    try {
      r.emplace(SeriesReader::open(rp));
    } catch (const Error& e) {
      // Only a missing or partial index header may refuse to open.
      CHECK(commits == 0);
      CHECK(files["md.idx"].size() < format::kIndexHeaderSize);
      continue;
    }
    CHECK(r->step_records().size() == commits);
    std::set<std::uint64_t> expected(commit_steps.begin(), commit_steps.begin() + static_cast<std::ptrdiff_t>(commits));
    auto visible = r->iterations();
    CHECK(std::set<std::uint64_t>(visible.begin(), visible.end()) == expected);
    for (auto step : visible) {
      // The latest commit of a step decides which write is visible.
      std::size_t last = 0;
      for (std::size_t k = 0; k < commits; ++k)
        if (commit_steps[k] == step) last = k;
      check_component(*r, step, global[last]);
    }
  }
  CHECK(commit_counts.size() >= 5);
}

TEST_CASE("open and iteration lifecycle errors") {
  testing::TempDir dir;
  const auto path = dir / "life.bp4";
  spawn_group(2, [&](RankGroup& g) {
    auto s = Series::open(path, Access::create, g, config_with(1));
    auto it = s->create_iteration(1);
    CHECK(testing::code_of([&] { s->create_iteration(2); }) == Errc::iteration_busy);
    auto rc = it.mesh("m")["x"];
    rc.define(Datatype::float64, {4});
    CHECK(testing::code_of([&] { rc.define(Datatype::float32, {4}); }) == Errc::already_defined);
    CHECK(testing::code_of([&] { rc.store_chunk(std::vector<double>(2), {3}, {2}); }) == Errc::out_of_bounds);
    CHECK(testing::code_of([&] { rc.store_chunk(std::vector<double>(3), {0}, {2}); }) == Errc::invalid_extent);
    CHECK(testing::code_of([&] { rc.store_chunk(std::vector<double>(2), {0, 0}, {2, 1}); }) == Errc::invalid_extent);
    CHECK(testing::code_of([&] { it.mesh("m")["y"].store_chunk(std::vector<double>(2), {0}, {2}); }) == Errc::not_defined);
    rc.store_chunk(std::vector<double>{1.0 + g.rank(), 2.0 + g.rank()}, {2u * static_cast<std::uint64_t>(g.rank())}, {2});
    it.set_attribute("time", 0.5);
    it.mesh("m").set_attribute("unit", std::string("V/m"));
    rc.set_attribute("scale", std::uint64_t{3});
    s->set_attribute("author", std::string("test"));
    s->close_iteration(1);
    CHECK_NOTHROW(s->close_iteration(1));
    CHECK(testing::code_of([&] { rc.store_chunk(std::vector<double>(2), {0}, {2}); }) == Errc::iteration_closed);
    s->close();
  });
  auto r = SeriesReader::open(path);
  CHECK(r.read_as<double>(1, "m", "x") == std::vector<double>{1, 2, 2, 3});
  CHECK(std::get<double>(r.iteration(1).attributes.at("time")) == 0.5);
  CHECK(std::get<std::string>(r.iteration(1).records.at("m").attributes.at("unit")) == "V/m");
  CHECK(std::get<std::uint64_t>(r.component(1, "m", "x").attributes.at("scale")) == 3);
  CHECK(std::get<std::string>(r.series_attributes().at("author")) == "test");

  CHECK(testing::code_of([&] { spawn_group(1, [&](RankGroup& g) { Series::open(path, Access::create, g, config_with(1)); }); }) ==
        Errc::already_exists);
  auto cfg = config_with(1);
  cfg.overwrite = true;
  CHECK(testing::code_of([&] {
          spawn_group(1, [&](RankGroup& g) { Series::open(path, Access::create, g, cfg)->close(); });
        }) == Errc::ok);
  CHECK(SeriesReader::open(path).iterations().empty());

  fs::create_directories(dir / "plain");
  std::ofstream(dir / "plain" / "keep.txt") << "x";
  CHECK(testing::code_of([&] {
          spawn_group(1, [&](RankGroup& g) { Series::open(dir / "plain", Access::create, g, cfg); });
        }) == Errc::already_exists);
  CHECK(fs::exists(dir / "plain" / "keep.txt"));
  CHECK(testing::code_of([&] {
          spawn_group(1, [&](RankGroup& g) { Series::open(dir / "none.bp4", Access::append, g, config_with(1)); });
        }) == Errc::not_found);
}

TEST_CASE("ranks that define different components fail together") {
  testing::TempDir dir;
  CHECK(testing::code_of([&] {
          spawn_group(3, [&](RankGroup& g) {
            auto s = Series::open(dir / "mm.bp4", Access::create, g, config_with(1));
            auto it = s->create_iteration(1);
            it.mesh("m")["x"].define(Datatype::float64, {g.rank() == 1 ? 5u : 4u});
            s->flush();
          });
        }) == Errc::collective_mismatch);
  CHECK(testing::code_of([&] {
          spawn_group(2, [&](RankGroup& g) {
            auto cfg = config_with(g.rank() + 1);
            Series::open(dir / "cfg.bp4", Access::create, g, cfg);
          });
        }) == Errc::collective_mismatch);
}

TEST_CASE("append mode continues a series and rewrites supersede") {
  testing::TempDir dir;
  const auto path = dir / "app.bp4";
  std::vector<std::uint64_t> g1, g2;
  spawn_group(3, [&](RankGroup& g) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(g.rank()));
    auto s = Series::open(path, Access::create, g, config_with(2));
    auto a = write_random_layout(*s, g, 1, rng);
    auto b = write_random_layout(*s, g, 2, rng);
    s->close();
    if (g.rank() == 0) g1 = {a, b};
  });
  spawn_group(3, [&](RankGroup& g) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(g.rank()) + 50);
    auto s = Series::open(path, Access::append, g, config_with(2, CodecId::bzip2_like));
    CHECK(s->committed() == std::vector<std::uint64_t>{1, 2});
    auto c = write_random_layout(*s, g, 3, rng);
    auto d = write_random_layout(*s, g, 1, rng);
    s->close();
    if (g.rank() == 0) g2 = {c, d};
  });
  auto r = SeriesReader::open(path);
  CHECK(r.iterations() == std::vector<std::uint64_t>{1, 2, 3});
  check_component(r, 2, g1[1]);
  check_component(r, 3, g2[0]);
  check_component(r, 1, g2[1]);
  CHECK(r.step_records().size() == 4);
  CHECK(r.step_records().back().supersedes());
  CHECK(r.component(3, "E", "x").chunks.front().header.codec_id == 2);
  CHECK(r.component(2, "E", "x").chunks.front().header.codec_id == 0);
}

TEST_CASE("a torn trailing index record is dropped on append") {
  testing::TempDir dir;
  const auto path = dir / "torn.bp4";
  spawn_group(2, [&](RankGroup& g) {
    std::mt19937_64 rng(1);
    auto s = Series::open(path, Access::create, g, config_with(1));
    write_random_layout(*s, g, 1, rng);
    s->close();
  });
  {
    std::ofstream idx(path / "md.idx", std::ios::binary | std::ios::app);
    idx << "partial";
  }
  CHECK(SeriesReader::open(path).iterations() == std::vector<std::uint64_t>{1});
  spawn_group(2, [&](RankGroup& g) {
    std::mt19937_64 rng(2);
    auto s = Series::open(path, Access::append, g, config_with(1));
    write_random_layout(*s, g, 2, rng);
    s->close();
  });
  CHECK(SeriesReader::open(path).iterations() == std::vector<std::uint64_t>{1, 2});
  CHECK(fs::file_size(path / "md.idx") == format::kIndexHeaderSize + 2 * format::kStepRecordSize);
}

TEST_CASE("verified writes and profiling output") {
  testing::TempDir dir;
  const auto path = dir / "v.bp4";
  spawn_group(4, [&](RankGroup& g) {
    auto cfg = config_with(2, CodecId::blosc_like, true);
    cfg.verify_writes = true;
    cfg.monitor_log_dir = dir / "logs";
    std::mt19937_64 rng(3);
    auto s = Series::open(path, Access::create, g, cfg);
    write_random_layout(*s, g, 1, rng);
    s->close();
  });
  auto timers = read_profile_json(path / "profiling.json");
  REQUIRE(timers.size() == 4);
  std::uint64_t bytes = 0;
  for (const auto& t : timers) bytes += t.bytes_written;
  auto report = load_report_dir(dir / "logs");
  CHECK(report.ranks.size() == 4);
  CHECK(bytes == report.total_bytes_written());
}

TEST_CASE("inventory json carries the documented fields") {
  testing::TempDir dir;
  const auto path = dir / "inv.bp4";
  spawn_group(2, [&](RankGroup& g) {
    std::mt19937_64 rng(4);
    auto s = Series::open(path, Access::create, g, config_with(1, CodecId::blosc_like));
    write_random_layout(*s, g, 5, rng);
    s->close();
  });
  auto j = nlohmann::json::parse(inventory_json(list_contents(path)));
  for (const char* k : {"path", "file_count", "files", "valid_step_records", "iterations", "attributes"})
    CHECK(j.contains(k));
  const auto& it = j["iterations"][0];
  CHECK(it["index"] == 5);
  const auto& rec = it["records"][0];
  CHECK(rec["name"] == "E");
  CHECK(rec["kind"] == "mesh");
  const auto& comp = rec["components"][0];
  CHECK(comp["datatype"] == "float64");
  for (const auto& c : comp["chunks"])
    for (const char* k : {"subfile", "file_offset", "offset", "extent", "codec", "raw_len", "stored_len"})
      CHECK(c.contains(k));
  CHECK(inventory_text(list_contents(path)).find("E [mesh]") != std::string::npos);
}
