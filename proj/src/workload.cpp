#include "pmdio/workload.hpp"

#include <algorithm>
#include <cmath>

#include "pmdio/engine.hpp"
#include "pmdio/error.hpp"
#include "pmdio/monitor.hpp"

namespace pmdio {

namespace {

constexpr std::uint64_t kInitStream = ~std::uint64_t{0};

std::mt19937_64 stream(std::uint64_t seed, int rank, std::uint64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rank), static_cast<std::uint32_t>(step),
                    static_cast<std::uint32_t>(step >> 32)};
  return std::mt19937_64(seq);
}

std::optional<std::uint64_t> get_u64(const KeyValueFile& deck, const std::string& key) {
  for (const auto& k : {"simulation." + key, key}) {
    if (auto v = deck.get_int(k)) {
      if (*v < 0) fail(Errc::invalid_config, key + " must be non-negative");
      return static_cast<std::uint64_t>(*v);
    }
  }
  return std::nullopt;
}

std::optional<double> get_f64(const KeyValueFile& deck, const std::string& key) {
  for (const auto& k : {"simulation." + key, key})
    if (auto v = deck.get_double(k)) return v;
  return std::nullopt;
}

double wrap(double x, double lo, double width) {
  double r = std::fmod(x - lo, width);
  if (r < 0) r += width;
  double out = lo + r;
  // fmod can round up to exactly the block end
  return out >= lo + width ? lo : out;
}

}  // namespace

SimConfig sim_config_from(const KeyValueFile& deck, SimConfig c) {
  if (auto v = get_u64(deck, "n_cells")) c.n_cells = *v;
  if (auto v = get_u64(deck, "particles_per_species")) c.particles_per_species = *v;
  if (auto v = get_f64(deck, "dt")) c.dt = *v;
  if (auto v = get_f64(deck, "ne_R")) c.ne_R = *v;
  if (auto v = get_u64(deck, "datfile")) c.datfile = *v;
  if (auto v = get_u64(deck, "dmpstep")) c.dmpstep = *v;
  if (auto v = get_u64(deck, "mvflag")) c.mvflag = *v;
  if (auto v = get_u64(deck, "mvstep")) c.mvstep = *v;
  if (auto v = get_u64(deck, "last_step")) c.last_step = *v;
  if (auto v = get_u64(deck, "seed")) c.seed = *v;
  return c;
}

std::vector<std::string> validate(const SimConfig& c) {
  if (c.n_cells < 1) fail(Errc::invalid_config, "n_cells must be >= 1");
  if (c.last_step < 1) fail(Errc::invalid_config, "last_step must be >= 1");
  if (c.datfile < 1) fail(Errc::invalid_config, "datfile must be >= 1");
  if (c.dmpstep < 1) fail(Errc::invalid_config, "dmpstep must be >= 1");
  if (c.mvstep < 1) fail(Errc::invalid_config, "mvstep must be >= 1");
  if (c.mvflag > c.mvstep) fail(Errc::invalid_config, "mvflag must not exceed mvstep");
  if (!(c.dt >= 0) || !std::isfinite(c.dt)) fail(Errc::invalid_config, "dt must be a finite non-negative number");
  if (!(c.ne_R >= 0) || !std::isfinite(c.ne_R)) fail(Errc::invalid_config, "ne_R must be finite and non-negative");
  std::vector<std::string> warnings;
  if (c.ne_R * c.dt >= 1) warnings.push_back("ne_R * dt >= 1: nearly every neutral ionizes in one step");
  return warnings;
}

std::pair<std::uint64_t, std::uint64_t> cell_block(std::uint64_t n_cells, int rank, int size) {
  const auto b = (n_cells + static_cast<std::uint64_t>(size) - 1) / static_cast<std::uint64_t>(size);
  const auto begin = std::min(n_cells, b * static_cast<std::uint64_t>(rank));
  return {begin, std::min(n_cells, begin + b)};
}

PlasmaState init_plasma(const SimConfig& config, int rank, int size) {
  validate(config);
  PlasmaState s;
  s.rank = rank;
  s.size = size;
  s.seed = config.seed;
  std::tie(s.cell_begin, s.cell_end) = cell_block(config.n_cells, rank, size);
  const auto n = config.n_cells;
  const auto N = config.particles_per_species;
  // Particles in proportion to owned cells; the counts sum to N exactly.
  const auto count = N * s.cell_end / n - N * s.cell_begin / n;
  auto rng = stream(config.seed, rank, kInitStream);
  std::uniform_real_distribution<double> pos(static_cast<double>(s.cell_begin), static_cast<double>(s.cell_end));
  std::normal_distribution<double> vel(0.0, 1.0);
  for (auto& p : s.species) {
    for (std::uint64_t i = 0; i < count; ++i) {
      p.x.push_back(wrap(pos(rng), static_cast<double>(s.cell_begin),
                         static_cast<double>(s.cell_end - s.cell_begin)));
      p.vx.push_back(vel(rng));
      p.vy.push_back(vel(rng));
      p.vz.push_back(vel(rng));
    }
  }
  for (auto& d : s.density_sum) d.assign(s.cell_end - s.cell_begin, 0.0);
  deposit(s);
  return s;
}

PlasmaState init_plasma(const SimConfig& config, RankGroup& group) {
  return init_plasma(config, group.rank(), group.size());
}

void deposit(PlasmaState& s) {
  const auto cells = s.cell_end - s.cell_begin;
  for (std::size_t k = 0; k < 3; ++k) {
    auto& d = s.density[k];
    d.assign(cells, 0.0);
    for (double x : s.species[k].x) {
      auto c = static_cast<std::uint64_t>(std::floor(x)) - s.cell_begin;
      d[std::min<std::uint64_t>(c, cells - 1)] += 1.0;
    }
  }
}

std::uint64_t advance(PlasmaState& s, const SimConfig& config) {
  const std::uint64_t step = s.step + 1;
  auto rng = stream(s.seed, s.rank, step);
  const double lo = static_cast<double>(s.cell_begin);
  const double width = static_cast<double>(s.cell_end - s.cell_begin);

  if (width > 0) {
    for (auto& p : s.species)
      for (std::size_t i = 0; i < p.alive(); ++i) p.x[i] = wrap(p.x[i] + p.vx[i] * config.dt, lo, width);
  }

  const double prob = 1.0 - std::exp(-config.ne_R * config.dt);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> vel(0.0, 1.0);
  auto& n = s.species[neutrals];
  auto& ion = s.species[ions];
  auto& el = s.species[electrons];
  std::size_t kept = 0;
  std::uint64_t ionized = 0;
  for (std::size_t i = 0; i < n.alive(); ++i) {
    if (prob > 0 && uni(rng) < prob) {
      ion.x.push_back(n.x[i]);
      ion.vx.push_back(n.vx[i]);
      ion.vy.push_back(n.vy[i]);
      ion.vz.push_back(n.vz[i]);
      el.x.push_back(n.x[i]);
      el.vx.push_back(vel(rng));
      el.vy.push_back(vel(rng));
      el.vz.push_back(vel(rng));
      ++ionized;
    } else {
      n.x[kept] = n.x[i];
      n.vx[kept] = n.vx[i];
      n.vy[kept] = n.vy[i];
      n.vz[kept] = n.vz[i];
      ++kept;
    }
  }
  n.x.resize(kept);
  n.vx.resize(kept);
  n.vy.resize(kept);
  n.vz.resize(kept);

  deposit(s);
  s.step = step;
  s.ionizations += ionized;
  return ionized;
}

std::array<std::uint64_t, kHistogramBinsSpeed> speed_histogram(const Particles& p) {
  std::array<std::uint64_t, kHistogramBinsSpeed> h{};
  for (std::size_t i = 0; i < p.alive(); ++i) {
    const double v = std::sqrt(p.vx[i] * p.vx[i] + p.vy[i] * p.vy[i] + p.vz[i] * p.vz[i]);
    auto bin = static_cast<std::size_t>(v / kHistogramMaxSpeed * static_cast<double>(kHistogramBinsSpeed));
    ++h[std::min(bin, kHistogramBinsSpeed - 1)];
  }
  return h;
}

bool in_average_window(const SimConfig& c, std::uint64_t step) {
  return c.mvflag > 0 && step > 0 && (step - 1) % c.mvstep >= c.mvstep - c.mvflag;
}

void accumulate_average(PlasmaState& s, const SimConfig& c) {
  if (!in_average_window(c, s.step)) return;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < s.density[k].size(); ++i) s.density_sum[k][i] += s.density[k][i];
  ++s.avg_samples;
}

bool is_snapshot_step(const SimConfig& c, std::uint64_t step) { return step > 0 && step % c.datfile == 0; }
bool is_average_step(const SimConfig& c, std::uint64_t step) {
  return c.mvflag > 0 && step >= c.mvstep && step % c.mvstep == 0;
}
bool is_checkpoint_step(const SimConfig& c, std::uint64_t step) {
  return step > 0 && (step % c.dmpstep == 0 || step == c.last_step);
}

void emit_diagnostics(PlasmaState& s, const SimConfig& config, Series& series, std::uint64_t step) {
  const bool snap = is_snapshot_step(config, step);
  const bool avg = is_average_step(config, step);
  if (!snap && !avg) return;
  auto it = series.create_iteration(step);
  it.set_attribute("time", config.dt * static_cast<double>(step));
  it.set_attribute("dt", config.dt);
  const Extent global{config.n_cells};
  const Offset at{s.cell_begin};
  const Extent local{s.cell_end - s.cell_begin};
  const bool owns_cells = s.cell_end > s.cell_begin;
  std::vector<std::vector<double>> averaged(3);

  if (snap) {
    auto density = it.mesh("density");
    density.set_attribute("unit", std::string("particles per cell"));
    auto hist = it.mesh("speed_histogram");
    hist.set_attribute("v_max", kHistogramMaxSpeed);
    for (std::size_t k = 0; k < 3; ++k) {
      auto rc = density[kSpeciesNames[k]];
      rc.define(Datatype::float64, global);
      if (owns_cells) rc.store_chunk(std::span<const double>(s.density[k]), at, local);
      auto h = speed_histogram(s.species[k]);
      auto hc = hist[kSpeciesNames[k]];
      hc.define(Datatype::uint64, {static_cast<std::uint64_t>(s.size), kHistogramBinsSpeed});
      hc.store_chunk(std::vector<std::uint64_t>(h.begin(), h.end()), {static_cast<std::uint64_t>(s.rank), 0},
                     {1, kHistogramBinsSpeed});
    }
  }
  if (avg) {
    auto rec = it.mesh("density_avg");
    rec.set_attribute("window_steps", config.mvflag);
    for (std::size_t k = 0; k < 3; ++k) {
      auto& a = averaged[k];
      a = s.density_sum[k];
      const double n = s.avg_samples ? static_cast<double>(s.avg_samples) : 1.0;
      for (auto& v : a) v /= n;
      auto rc = rec[kSpeciesNames[k]];
      rc.define(Datatype::float64, global);
      if (owns_cells) rc.store_chunk(std::span<const double>(a), at, local);
    }
  }
  series.close_iteration(step);
  if (avg) {
    for (auto& d : s.density_sum) std::fill(d.begin(), d.end(), 0.0);
    s.avg_samples = 0;
  }
}

void checkpoint(const PlasmaState& s, Series& series) {
  auto& g = series.group();
  std::array<std::uint64_t, 3> counts{};
  std::array<std::uint64_t, 3> offsets{};
  std::array<std::uint64_t, 3> totals{};
  for (std::size_t k = 0; k < 3; ++k) {
    counts[k] = s.species[k].alive();
    offsets[k] = g.exclusive_prefix_sum(counts[k]);
    totals[k] = g.all_reduce_sum(counts[k]);
  }
  const auto total_ionizations = g.all_reduce_sum(s.ionizations);
  auto it = series.create_iteration(0);
  it.set_attribute("step", s.step);
  it.set_attribute("seed", s.seed);
  it.set_attribute("n_ranks", static_cast<std::uint64_t>(s.size));
  it.set_attribute("ionizations", total_ionizations);

  auto rc = it.mesh("rank_counts")["counts"];
  rc.define(Datatype::uint64, {static_cast<std::uint64_t>(s.size), 4});
  rc.store_chunk(std::vector<std::uint64_t>{counts[0], counts[1], counts[2], s.ionizations},
                 {static_cast<std::uint64_t>(s.rank), 0}, {1, 4});

  for (std::size_t k = 0; k < 3; ++k) {
    if (totals[k] == 0) continue;
    auto rec = it.particles(kSpeciesNames[k]);
    const auto& p = s.species[k];
    const std::vector<double>* arrays[] = {&p.x, &p.vx, &p.vy, &p.vz};
    const char* names[] = {"x", "vx", "vy", "vz"};
    for (std::size_t a = 0; a < 4; ++a) {
      auto c = rec[names[a]];
      c.define(Datatype::float64, {totals[k]});
      if (counts[k]) c.store_chunk(std::span<const double>(*arrays[a]), {offsets[k]}, {counts[k]});
    }
  }

  auto acc = it.mesh("avg_accumulator");
  acc.set_attribute("samples_rank0", s.avg_samples);
  std::uint64_t n_cells = g.all_reduce_sum(s.cell_end - s.cell_begin);
  auto samples = acc["samples"];
  samples.define(Datatype::uint64, {static_cast<std::uint64_t>(s.size)});
  samples.store_chunk(std::vector<std::uint64_t>{s.avg_samples}, {static_cast<std::uint64_t>(s.rank)}, {1});
  for (std::size_t k = 0; k < 3; ++k) {
    auto c = acc[kSpeciesNames[k]];
    c.define(Datatype::float64, {n_cells});
    if (s.cell_end > s.cell_begin)
      c.store_chunk(std::span<const double>(s.density_sum[k]), {s.cell_begin}, {s.cell_end - s.cell_begin});
  }
  series.close_iteration(0);
}

PlasmaState restore(const std::filesystem::path& path, const SimConfig& config, RankGroup& group) {
  PlasmaState s;
  std::optional<SeriesReader> reader;
  Errc code = Errc::ok;
  std::string why;
  try {
    reader.emplace(SeriesReader::open(path));
    if (!reader->has_iteration(0)) fail(Errc::no_checkpoint, "no checkpoint (iteration 0) in " + path.string());
  } catch (const Error& e) {
    code = e.code() == Errc::not_found ? Errc::no_checkpoint : e.code();
    why = e.what();
  }
  // Every rank sees the same files, so failures are uniform; agree anyway.
  const auto failed = group.all_reduce_sum(code == Errc::ok ? 0 : 1);
  if (failed) fail(code == Errc::ok ? Errc::no_checkpoint : code, why.empty() ? "checkpoint unreadable" : why);

  const auto& it = reader->iteration(0);
  auto attr = [&](const char* key) {
    auto a = it.attributes.find(key);
    if (a == it.attributes.end() || !std::holds_alternative<std::uint64_t>(a->second))
      fail(Errc::corrupt_index, std::string("checkpoint lacks attribute ") + key);
    return std::get<std::uint64_t>(a->second);
  };
  if (attr("n_ranks") != static_cast<std::uint64_t>(group.size()))
    fail(Errc::invalid_config, "checkpoint was written by " + std::to_string(attr("n_ranks")) + " ranks, not " +
                                   std::to_string(group.size()));
  s.rank = group.rank();
  s.size = group.size();
  s.step = attr("step");
  s.seed = attr("seed");
  std::tie(s.cell_begin, s.cell_end) = cell_block(config.n_cells, s.rank, s.size);
  const auto cells = s.cell_end - s.cell_begin;

  const auto r = static_cast<std::uint64_t>(s.rank);
  auto counts = reader->read_as<std::uint64_t>(0, "rank_counts", "counts");
  std::array<std::uint64_t, 3> offsets{};
  for (std::uint64_t q = 0; q < r; ++q)
    for (std::size_t k = 0; k < 3; ++k) offsets[k] += counts[q * 4 + k];
  s.ionizations = counts[r * 4 + 3];

  for (std::size_t k = 0; k < 3; ++k) {
    const auto n = counts[r * 4 + k];
    if (n == 0) continue;
    auto& p = s.species[k];
    std::vector<double>* arrays[] = {&p.x, &p.vx, &p.vy, &p.vz};
    const char* names[] = {"x", "vx", "vy", "vz"};
    for (std::size_t a = 0; a < 4; ++a)
      *arrays[a] = reader->read_as<double>(0, kSpeciesNames[k], names[a], Selection{{offsets[k]}, {n}});
  }
  s.avg_samples = reader->read_as<std::uint64_t>(0, "avg_accumulator", "samples", Selection{{r}, {1}})[0];
  for (std::size_t k = 0; k < 3; ++k) {
    if (cells)
      s.density_sum[k] =
          reader->read_as<double>(0, "avg_accumulator", kSpeciesNames[k], Selection{{s.cell_begin}, {cells}});
  }
  deposit(s);
  group.barrier();
  return s;
}

WorkloadSummary run_workload(const SimConfig& config, const std::filesystem::path& out, RankGroup& group,
                             const EngineConfig& engine, bool resume) {
  validate(config);
  const auto t0 = monotonic_ns();
  WorkloadSummary sum;
  PlasmaState state = resume ? restore(out, config, group) : init_plasma(config, group);
  auto series = Series::open(out, resume ? Access::append : Access::create, group, engine);
  if (!resume) {
    series->set_attribute("software", std::string("pmdio"));
    series->set_attribute("n_cells", config.n_cells);
    series->set_attribute("dt", config.dt);
  }
  sum.first_step = state.step + 1;
  std::uint64_t local_ionized = 0;
  while (state.step < config.last_step) {
    local_ionized += advance(state, config);
    accumulate_average(state, config);
    const auto step = state.step;
    if (is_snapshot_step(config, step)) ++sum.snapshots;
    if (is_average_step(config, step)) ++sum.averaged;
    emit_diagnostics(state, config, *series, step);
    if (is_checkpoint_step(config, step)) {
      checkpoint(state, *series);
      ++sum.checkpoints;
    }
  }
  series->close();
  sum.last_step = state.step;
  sum.ionizations = group.all_reduce_sum(local_ionized);
  for (std::size_t k = 0; k < 3; ++k) sum.alive[k] = group.all_reduce_sum(state.species[k].alive());
  sum.wall_s = static_cast<double>(monotonic_ns() - t0) * 1e-9;
  return sum;
}

}  // namespace pmdio
