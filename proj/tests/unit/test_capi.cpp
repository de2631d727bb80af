#include <doctest.h>

#include <cstring>
#include <json.hpp>
#include <string>
#include <vector>

#include "pmdio/pmdio.h"
#include "support.hpp"

namespace {

struct Job {
  std::string path;
  pmdio_config* config = nullptr;
};

pmdio_status writer(pmdio_group* g, void* user) {
  auto* job = static_cast<Job*>(user);
  const int rank = pmdio_group_rank(g);
  pmdio_series* s = nullptr;
  pmdio_status st = pmdio_series_create(g, job->path.c_str(), job->config, &s);
  if (st != PMDIO_OK) return st;
  std::vector<double> v(100 + 10 * static_cast<std::size_t>(rank));
  uint64_t off = 0, total = 0;
  pmdio_group_exclusive_prefix_sum(g, v.size(), &off);
  pmdio_group_all_reduce_sum(g, v.size(), &total);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(off + i);
  const uint64_t n = v.size();
  if ((st = pmdio_series_begin_iteration(s, 3)) != PMDIO_OK ||
      (st = pmdio_series_define(s, 3, "e", PMDIO_PARTICLES, "x", PMDIO_FLOAT64, 1, &total)) != PMDIO_OK ||
      (st = pmdio_series_store(s, 3, "e", "x", PMDIO_FLOAT64, v.data(), 1, &off, &n)) != PMDIO_OK ||
      (st = pmdio_series_set_attr_f64(s, 3, nullptr, nullptr, "time", 1.5)) != PMDIO_OK ||
      (st = pmdio_series_set_attr_string(s, 3, "e", nullptr, "charge", "-1")) != PMDIO_OK ||
      (st = pmdio_series_set_attr_u64(s, 3, "e", "x", "unit", 7)) != PMDIO_OK ||
      (st = pmdio_series_set_series_attr_string(s, "code", "capi")) != PMDIO_OK) {
    pmdio_series_close(s);
    return st;
  }
  pmdio_flush_stats stats{};
  if ((st = pmdio_series_close_iteration(s, 3, &stats)) != PMDIO_OK) {
    pmdio_series_close(s);
    return st;
  }
  if (stats.chunk_count != 3 || stats.bytes_raw != total * 8) return PMDIO_E_INTERNAL;
  return pmdio_series_close(s);
}

pmdio_status failing(pmdio_group* g, void*) {
  if (pmdio_group_rank(g) == 1) {
    pmdio_reader* r = nullptr;
    return pmdio_reader_open("/nonexistent/series.bp4", &r);
  }
  return pmdio_group_barrier(g);
}

std::string take(char* s) {
  std::string out = s ? s : "";
  pmdio_free_string(s);
  return out;
}

}  // namespace

TEST_CASE("write through the C API and read back") {
  testing::TempDir dir;
  Job job{(dir / "c.bp4").string(), nullptr};
  REQUIRE(pmdio_config_new(&job.config) == PMDIO_OK);
  REQUIRE(pmdio_config_parse(job.config, "engine.num_aggregators = 2\ncompression.codec = \"blosc-like\"\n") ==
          PMDIO_OK);
  REQUIRE_MESSAGE(pmdio_spawn(3, writer, &job) == PMDIO_OK, std::string(pmdio_last_error()));
  CHECK(pmdio_spawn(3, writer, &job) == PMDIO_E_GROUP_FAULT);
  CHECK(std::string(pmdio_last_error()).find("AlreadyExists") != std::string::npos);
  pmdio_config_free(job.config);

  pmdio_reader* r = nullptr;
  REQUIRE(pmdio_reader_open(job.path.c_str(), &r) == PMDIO_OK);
  uint64_t its[4];
  size_t count = 0;
  REQUIRE(pmdio_reader_iterations(r, its, 4, &count) == PMDIO_OK);
  CHECK(count == 1);
  CHECK(its[0] == 3);
  pmdio_datatype type{};
  int ndims = 0;
  uint64_t extent[PMDIO_MAX_DIMS];
  REQUIRE(pmdio_reader_component(r, 3, "e", "x", &type, &ndims, extent) == PMDIO_OK);
  CHECK(type == PMDIO_FLOAT64);
  CHECK(ndims == 1);
  CHECK(extent[0] == 330);
  std::vector<double> all(330);
  REQUIRE(pmdio_reader_read(r, 3, "e", "x", 1, nullptr, nullptr, all.data(), all.size() * 8) == PMDIO_OK);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == static_cast<double>(i));
  uint64_t off = 100, len = 5;
  double part[5];
  REQUIRE(pmdio_reader_read(r, 3, "e", "x", 1, &off, &len, part, sizeof part) == PMDIO_OK);
  CHECK(part[4] == 104.0);
  CHECK(pmdio_reader_read(r, 3, "e", "x", 1, &off, &len, part, 8) == PMDIO_E_INVALID_ARGUMENT);
  CHECK(pmdio_reader_component(r, 3, "e", "y", &type, &ndims, extent) == PMDIO_E_NOT_FOUND);
  pmdio_reader_free(r);

  char* out = nullptr;
  REQUIRE(pmdio_inspect(job.path.c_str(), 1, &out) == PMDIO_OK);
  auto j = nlohmann::json::parse(take(out));
  CHECK(j["iterations"][0]["attributes"]["time"] == 1.5);
}

TEST_CASE("a failing rank surfaces as a group fault") {
  CHECK(pmdio_spawn(3, failing, nullptr) == PMDIO_E_GROUP_FAULT);
  CHECK(std::string(pmdio_last_error()).find("rank 1") != std::string::npos);
  CHECK(pmdio_spawn(0, failing, nullptr) == PMDIO_E_INVALID_CONFIG);
  CHECK(pmdio_spawn(1, nullptr, nullptr) == PMDIO_E_INVALID_ARGUMENT);
}

TEST_CASE("status names and strings") {
  CHECK(std::string(pmdio_status_name(PMDIO_E_CORRUPT_CHUNK)) == "CorruptChunk");
  CHECK(std::string(pmdio_status_name(PMDIO_E_INTERNAL)) == "Internal");
  CHECK(std::strlen(pmdio_version()) > 0);
  pmdio_reader* r = nullptr;
  CHECK(pmdio_reader_open(nullptr, &r) == PMDIO_E_INVALID_ARGUMENT);
  CHECK(std::string(pmdio_last_error()).size() > 0);
}

TEST_CASE("tools return rendered text") {
  char* out = nullptr;
  REQUIRE(pmdio_stripe_plan(4, 1 << 20, 8 << 20, 1e9, 0, 1, &out) == PMDIO_OK);
  auto j = nlohmann::json::parse(take(out));
  CHECK(j["slots"].size() == 4);
  CHECK(pmdio_stripe_plan(4, 1000, 8 << 20, 1e9, 0, 0, &out) == PMDIO_E_INVALID_CONFIG);
  REQUIRE(pmdio_stripe_parse("lmm_stripe_count: 2\nlmm_stripe_size: 65536\nlmm_pattern: raid0\n", 0, 1e9, 0, 1,
                             &out) == PMDIO_OK);
  CHECK(nlohmann::json::parse(take(out))["stripe_count"] == 2);
  CHECK(pmdio_stripe_parse("lmm_pattern: raid0\n", 0, 1e9, 0, 0, &out) == PMDIO_E_PARSE);

  testing::TempDir dir;
  pmdio_run_spec run;
  pmdio_run_spec_init(&run);
  const auto series = (dir / "run.bp4").string();
  const auto logs = (dir / "logs").string();
  run.ranks = 2;
  run.out = series.c_str();
  run.monitor_dir = logs.c_str();
  run.has_seed = 1;
  run.seed = 3;
  REQUIRE(pmdio_run(&run, 1, &out) == PMDIO_OK);
  auto summary = nlohmann::json::parse(take(out));
  CHECK(summary["iterations"].size() == 21);
  CHECK(summary["seed"] == 3);
  CHECK(pmdio_run(&run, 0, &out) == PMDIO_E_ALREADY_EXISTS);
  run.overwrite = 1;
  CHECK(pmdio_run(&run, 0, &out) == PMDIO_OK);
  take(out);
  REQUIRE(pmdio_report(logs.c_str(), 1, 0, &out) == PMDIO_OK);
  CHECK(take(out).rfind("rank,", 0) == 0);

  pmdio_bench_spec b;
  pmdio_bench_spec_init(&b);
  b.tasks = 2;
  b.block_size = 1 << 20;
  b.transfer_size = 1 << 18;
  REQUIRE(pmdio_bench(&b, 1, &out) == PMDIO_OK);
  CHECK(nlohmann::json::parse(take(out))["files"].size() == 2);

  const int aggs[] = {1, 2};
  pmdio_sweep_spec sw{2, aggs, 2, 2, 1024, "bzip2-like", 3, nullptr, 0};
  REQUIRE(pmdio_bench_sweep(&sw, &out) == PMDIO_OK);
  auto csv = take(out);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  sw.codec = "nope";
  CHECK(pmdio_bench_sweep(&sw, &out) == PMDIO_E_INVALID_CONFIG);
}
