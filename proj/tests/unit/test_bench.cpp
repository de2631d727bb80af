#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "pmdio/bench.hpp"
#include "support.hpp"

using namespace pmdio;

namespace {

BenchSpec spec_in(const testing::TempDir& dir, BenchMode mode) {
  BenchSpec s;
  s.tasks = 4;
  s.mode = mode;
  s.transfer_size = 256 * 1024;
  s.block_size = 4 << 20;
  s.dir = dir.path();
  s.keep_files = true;
  return s;
}

}  // namespace

TEST_CASE("file census follows the mode") {
  testing::TempDir dir;
  auto fpp = run_bench(spec_in(dir, BenchMode::file_per_process));
  REQUIRE(fpp.files.size() == 4);
  for (const auto& f : fpp.files) CHECK(f.size == 4u << 20);
  CHECK(fpp.reps[0].bytes == 16u << 20);
  CHECK(fpp.report.total_bytes_written() == 16u << 20);

  testing::TempDir dir2;
  auto shared = run_bench(spec_in(dir2, BenchMode::shared));
  REQUIRE(shared.files.size() == 1);
  CHECK(shared.files[0].name == "bench.shared");
  CHECK(shared.files[0].size == 16u << 20);
}

TEST_CASE("reordered readback verifies the neighbour's pattern") {
  for (auto mode : {BenchMode::file_per_process, BenchMode::shared}) {
    testing::TempDir dir;
    auto s = spec_in(dir, mode);
    s.reorder_readback = true;
    s.fsync_on_close = true;
    s.repetitions = 2;
    s.keep_files = false;
    auto res = run_bench(s);
    CHECK(res.reps.size() == 2);
    CHECK(res.verify_errors() == 0);
    CHECK(std::filesystem::is_empty(dir.path()));
    CHECK(res.report.ranks.at(0).op_counts[static_cast<std::size_t>(OpKind::fsync)] == 1);
  }
  CHECK(bench_pattern(0, 5) != bench_pattern(1, 5));
  CHECK(bench_pattern(2, 5) != bench_pattern(2, 6));
}

TEST_CASE("reported throughput matches the monitor to within one percent") {
  testing::TempDir dir;
  auto s = spec_in(dir, BenchMode::file_per_process);
  s.block_size = 16 << 20;
  s.transfer_size = 1 << 20;
  s.repetitions = 3;
  auto res = run_bench(s);
  for (const auto& r : res.reps) {
    CHECK(r.write_gibps > 0);
    CHECK(std::abs(r.write_gibps - r.monitor_write_gibps) <= 0.01 * r.monitor_write_gibps);
  }
}

TEST_CASE("inconsistent specs and full disks are refused") {
  testing::TempDir dir;
  auto s = spec_in(dir, BenchMode::shared);
  s.block_size = s.transfer_size * 3 + 8;
  CHECK(testing::code_of([&] { run_bench(s); }) == Errc::invalid_config);
  s = spec_in(dir, BenchMode::shared);
  s.tasks = 0;
  CHECK(testing::code_of([&] { run_bench(s); }) == Errc::invalid_config);
  s = spec_in(dir, BenchMode::shared);
  s.block_size = s.transfer_size << 30;  // far beyond any scratch disk
  try {
    run_bench(s);
    FAIL("ran without the space");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io_error);
    CHECK(std::string(e.what()).find(std::to_string(4 * s.block_size)) != std::string::npos);
  }
}

TEST_CASE("bench output renders as text and json") {
  testing::TempDir dir;
  auto res = run_bench(spec_in(dir, BenchMode::file_per_process));
  auto j = nlohmann::json::parse(bench_json(res));
  CHECK(j["mode"] == "file_per_process");
  CHECK(j["files"].size() == 4);
  CHECK(j["repetitions"][0].contains("monitor_write_gibps"));
  CHECK(bench_text(res).find("mean write") != std::string::npos);
}

TEST_CASE("the aggregator sweep conserves bytes across rows") {
  testing::TempDir dir;
  SweepSpec s;
  s.ranks = 8;
  s.steps = 3;
  s.elements_per_rank = 4096;
  s.dir = dir.path();
  auto rows = run_sweep(s);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].num_agg == s.aggregators[i]);
    CHECK(rows[i].data_files == static_cast<std::uint64_t>(s.aggregators[i]));
    CHECK(rows[i].payload_bytes == 8ull * 3 * 4096 * 8);
    CHECK(rows[i].bytes_written == rows[0].bytes_written);
  }
  auto csv = sweep_csv(rows);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == kSweepCsvHeader);
  int n = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 9);
    ++n;
  }
  CHECK(n == 4);
}
