#include <doctest.h>

#include <cmath>

#include "pmdio/engine.hpp"
#include "pmdio/workload.hpp"
#include "support.hpp"

using namespace pmdio;

namespace {

EngineConfig quiet() {
  EngineConfig c;
  c.num_aggregators = 1;
  c.profiling = false;
  return c;
}

SimConfig small(std::uint64_t last_step) {
  SimConfig c;
  c.n_cells = 120;
  c.particles_per_species = 600;
  c.datfile = 50;
  c.dmpstep = 100;
  c.mvflag = 10;
  c.mvstep = 50;
  c.last_step = last_step;
  c.seed = 99;
  return c;
}

}  // namespace

TEST_CASE("cell blocks tile the grid") {
  for (int size : {1, 3, 7}) {
    std::uint64_t next = 0;
    for (int r = 0; r < size; ++r) {
      auto [b, e] = cell_block(100, r, size);
      CHECK(b == next);
      CHECK(e >= b);
      next = e;
    }
    CHECK(next == 100);
  }
}

TEST_CASE("initial particles stay in their rank's block and sum to N") {
  SimConfig c = small(1);
  std::uint64_t total = 0;
  for (int r = 0; r < 4; ++r) {
    auto s = init_plasma(c, r, 4);
    for (const auto& p : s.species) {
      CHECK(p.x.size() == p.vz.size());
      for (double x : p.x) {
        CHECK(x >= static_cast<double>(s.cell_begin));
        CHECK(x < static_cast<double>(s.cell_end));
      }
    }
    total += s.species[neutrals].alive();
    double sum = 0;
    for (double d : s.density[neutrals]) sum += d;
    CHECK(sum == static_cast<double>(s.species[neutrals].alive()));
  }
  CHECK(total == c.particles_per_species);
}

TEST_CASE("neutral survival follows exp(-ne_R t) with exact bookkeeping") {
  // 30 seeds, 10,000 neutrals, ne_R * dt = 0.01, 100 steps.
  SimConfig c;
  c.n_cells = 100;
  c.particles_per_species = 10000;
  c.dt = 0.5;
  c.ne_R = 0.02;
  c.last_step = 100;
  double mean = 0;
  bool bookkeeping = true;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    c.seed = seed;
    auto s = init_plasma(c, 0, 1);
    for (int step = 0; step < 100; ++step) {
      const auto e0 = s.species[electrons].alive(), i0 = s.species[ions].alive(), n0 = s.species[neutrals].alive();
      const auto k = advance(s, c);
      bookkeeping = bookkeeping && s.species[electrons].alive() - e0 == k && s.species[ions].alive() - i0 == k &&
                    n0 - s.species[neutrals].alive() == k;
    }
    mean += static_cast<double>(s.species[neutrals].alive()) / 10000.0;
  }
  mean /= 30;
  const double p = std::exp(-1.0);
  const double sigma = std::sqrt(p * (1 - p) / 10000.0 / 30.0);
  CHECK(bookkeeping);
  CHECK(std::abs(mean - p) <= 3 * sigma);
}

TEST_CASE("averaging window and output schedule") {
  SimConfig c = small(200);
  std::vector<std::uint64_t> sampled;
  for (std::uint64_t s = 1; s <= 100; ++s)
    if (in_average_window(c, s)) sampled.push_back(s);
  REQUIRE(sampled.size() == 20);
  CHECK(sampled.front() == 41);
  CHECK(sampled[9] == 50);
  CHECK(sampled[10] == 91);
  CHECK(is_average_step(c, 50));
  CHECK_FALSE(is_average_step(c, 25));
  CHECK(is_snapshot_step(c, 150));
  CHECK_FALSE(is_snapshot_step(c, 0));
  CHECK(is_checkpoint_step(c, 100));
  CHECK(is_checkpoint_step(c, 200));
  c.mvflag = 0;
  CHECK_FALSE(in_average_window(c, 50));
  CHECK_FALSE(is_average_step(c, 50));
}

TEST_CASE("bad decks are rejected and doubtful ones warned about") {
  SimConfig c;
  c.last_step = 0;
  CHECK(testing::code_of([&] { validate(c); }) == Errc::invalid_config);
  c = SimConfig{};
  c.mvflag = c.mvstep + 1;
  CHECK(testing::code_of([&] { validate(c); }) == Errc::invalid_config);
  c = SimConfig{};
  c.ne_R = 4;
  CHECK(validate(c).size() == 1);
  auto deck = KeyValueFile::parse("[simulation]\nlast_step = 30\nne_R = 0.1\nseed = 5\n");
  auto s = sim_config_from(deck);
  CHECK(s.last_step == 30);
  CHECK(s.ne_R == 0.1);
  CHECK(s.seed == 5);
  CHECK(sim_config_from(KeyValueFile::parse("datfile = 7\n")).datfile == 7);
}

TEST_CASE("the default schedule yields one iteration per snapshot plus the checkpoint") {
  testing::TempDir dir;
  SimConfig c;
  c.particles_per_species = 300;
  auto sums = spawn_group(2, [&](RankGroup& g) { return run_workload(c, dir / "d.bp4", g, quiet()); });
  auto r = SeriesReader::open(dir / "d.bp4");
  auto its = r.iterations();
  CHECK(its.size() == 2000 / 100 + 1);
  CHECK(its.front() == 0);
  CHECK(its.back() == 2000);
  CHECK(sums[0].snapshots == 20);
  CHECK(sums[0].checkpoints == 4);
  CHECK(sums[0].alive[electrons] == 300 + sums[0].ionizations);
}

TEST_CASE("a split run through the checkpoint equals a straight run") {
  for (int ranks : {1, 3}) {
    testing::TempDir dir;
    const auto straight = dir / "straight.bp4";
    const auto split = dir / "split.bp4";
    spawn_group(ranks, [&](RankGroup& g) { run_workload(small(200), straight, g, quiet()); });
    spawn_group(ranks, [&](RankGroup& g) { run_workload(small(100), split, g, quiet()); });
    spawn_group(ranks, [&](RankGroup& g) { run_workload(small(200), split, g, quiet(), true); });

    auto a = SeriesReader::open(straight);
    auto b = SeriesReader::open(split);
    CHECK(a.iterations() == b.iterations());
    for (const char* name : {"e", "D+", "D"}) {
      CHECK(a.read(200, "density", name) == b.read(200, "density", name));
      CHECK(a.read(200, "density_avg", name) == b.read(200, "density_avg", name));
      for (const char* comp : {"x", "vx", "vy", "vz"}) CHECK(a.read(0, name, comp) == b.read(0, name, comp));
    }
    auto sa = spawn_group(ranks, [&](RankGroup& g) { return restore(straight, small(200), g); });
    auto sb = spawn_group(ranks, [&](RankGroup& g) { return restore(split, small(200), g); });
    CHECK(sa == sb);
    CHECK(sa[0].step == 200);
  }
}

TEST_CASE("restore without a checkpoint is typed") {
  testing::TempDir dir;
  spawn_group(1, [&](RankGroup& g) { Series::open(dir / "e.bp4", Access::create, g, quiet())->close(); });
  CHECK(testing::code_of([&] {
          spawn_group(1, [&](RankGroup& g) { restore(dir / "e.bp4", small(10), g); });
        }) == Errc::no_checkpoint);
}

TEST_CASE("a checkpoint restores onto the same rank count only") {
  testing::TempDir dir;
  spawn_group(2, [&](RankGroup& g) { run_workload(small(20), dir / "c.bp4", g, quiet()); });
  CHECK(testing::code_of([&] {
          spawn_group(3, [&](RankGroup& g) { restore(dir / "c.bp4", small(40), g); });
        }) != Errc::ok);
}

TEST_CASE("speed histogram counts every particle") {
  Particles p;
  p.x = {0, 0, 0};
  p.vx = {0.05, 3.0, 100.0};
  p.vy = {0, 0, 0};
  p.vz = {0, 0, 0};
  auto h = speed_histogram(p);
  std::uint64_t n = 0;
  for (auto x : h) n += x;
  CHECK(n == 3);
  CHECK(h[0] == 1);
  CHECK(h[kHistogramBinsSpeed - 1] == 1);
}
