#include <doctest.h>

#include <numeric>

#include "pmdio/engine.hpp"
#include "pmdio/series.hpp"
#include "support.hpp"

using namespace pmdio;

namespace {

EngineConfig quiet(int agg = 1) {
  EngineConfig c;
  c.num_aggregators = agg;
  c.profiling = false;
  return c;
}

}  // namespace

TEST_CASE("four ranks write one mesh and it reads back whole") {
  testing::TempDir dir;
  const auto path = dir / "out.bp4";
  spawn_group(4, [&](RankGroup& g) {
    auto s = Series::open(path, Access::create, g, quiet(2));
    auto it = s->create_iteration(0);
    auto rc = it.mesh("rho")["x"];
    rc.define(Datatype::float64, {40});
    std::vector<double> v(10);
    std::iota(v.begin(), v.end(), 10.0 * g.rank());
    rc.store_chunk(std::span<const double>(v), {10u * g.rank()}, {10});
    s->close_iteration(0);
    s->close();
  });
  auto r = SeriesReader::open(path);
  auto all = r.read_as<double>(0, "rho", "x");
  REQUIRE(all.size() == 40);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == doctest::Approx(static_cast<double>(i)));
  CHECK(list_contents(path).files.size() == 4);
}
