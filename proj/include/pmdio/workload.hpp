#pragma once

// Desk-scale 1D3V particle-in-cell driver with Monte-Carlo ionization.
//
// Three species: electrons, D+ ions and D neutrals. Each step pushes every
// particle ballistically, ionizes neutrals with probability
// 1 - exp(-ne_R * dt) (neutral -> ion with the neutral's velocity plus a new
// electron with a fresh normal velocity) and re-deposits nearest-grid-point
// densities. There is no field solve.
//
// The grid is block-decomposed: rank r owns cells [r*b, min((r+1)*b, n)) with
// b = ceil(n / size), and its particles wrap periodically inside that block.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pmdio/comm.hpp"
#include "pmdio/config.hpp"
#include "pmdio/series.hpp"

namespace pmdio {

struct SimConfig {
  std::uint64_t n_cells = 1000;
  std::uint64_t particles_per_species = 1000;
  double dt = 0.5;
  double ne_R = 0.002;
  std::uint64_t datfile = 100;
  std::uint64_t dmpstep = 500;
  std::uint64_t mvflag = 0;
  std::uint64_t mvstep = 100;
  std::uint64_t last_step = 2000;
  std::uint64_t seed = 42;
};

// Reads the SimConfig keys, either bare or under a [simulation] section.
SimConfig sim_config_from(const KeyValueFile& deck, SimConfig base = {});
// Throws InvalidConfig on bad values; returns warnings for legal but
// doubtful ones.
std::vector<std::string> validate(const SimConfig& config);

enum SpeciesId : std::size_t { electrons = 0, ions = 1, neutrals = 2 };
inline constexpr std::array<const char*, 3> kSpeciesNames{"e", "D+", "D"};
inline constexpr std::size_t kHistogramBinsSpeed = 64;
inline constexpr double kHistogramMaxSpeed = 6.0;

struct Particles {
  std::vector<double> x, vx, vy, vz;
  std::size_t alive() const noexcept { return x.size(); }
  bool operator==(const Particles&) const = default;
};

struct PlasmaState {
  int rank = 0;
  int size = 1;
  std::uint64_t cell_begin = 0;
  std::uint64_t cell_end = 0;
  std::uint64_t step = 0;  // completed steps
  std::uint64_t seed = 0;
  std::uint64_t ionizations = 0;
  std::array<Particles, 3> species;
  std::array<std::vector<double>, 3> density;  // local cells
  // Sum of densities over the current averaging window.
  std::array<std::vector<double>, 3> density_sum;
  std::uint64_t avg_samples = 0;

  bool operator==(const PlasmaState&) const = default;
};

// Cells [begin, end) owned by `rank`.
std::pair<std::uint64_t, std::uint64_t> cell_block(std::uint64_t n_cells, int rank, int size);

PlasmaState init_plasma(const SimConfig& config, int rank, int size);
PlasmaState init_plasma(const SimConfig& config, RankGroup& group);

// One step. Returns the number of ionizations on this rank.
std::uint64_t advance(PlasmaState& state, const SimConfig& config);

void deposit(PlasmaState& state);
std::array<std::uint64_t, kHistogramBinsSpeed> speed_histogram(const Particles& p);

// Whether step s is sampled into the averaging window that closes at the
// next multiple of mvstep.
bool in_average_window(const SimConfig& config, std::uint64_t step);
void accumulate_average(PlasmaState& state, const SimConfig& config);

bool is_snapshot_step(const SimConfig& config, std::uint64_t step);
bool is_average_step(const SimConfig& config, std::uint64_t step);
bool is_checkpoint_step(const SimConfig& config, std::uint64_t step);

// Collective. Writes iteration `step` with the snapshot and/or the averaged
// profile due at this step, then resets the averaging window if it closed.
void emit_diagnostics(PlasmaState& state, const SimConfig& config, Series& series, std::uint64_t step);

// Collective. Rewrites iteration 0 with the full particle state.
void checkpoint(const PlasmaState& state, Series& series);
// Collective. Throws NoCheckpoint when the series has no iteration 0.
PlasmaState restore(const std::filesystem::path& series_path, const SimConfig& config, RankGroup& group);

struct WorkloadSummary {
  std::uint64_t first_step = 0;
  std::uint64_t last_step = 0;
  std::uint64_t snapshots = 0;
  std::uint64_t averaged = 0;
  std::uint64_t checkpoints = 0;
  std::uint64_t ionizations = 0;  // all ranks
  std::array<std::uint64_t, 3> alive{};  // all ranks, at the end
  double wall_s = 0;
};

// Collective. Creates `out` (or, with resume, appends to it after restoring
// from its checkpoint) and runs through config.last_step.
WorkloadSummary run_workload(const SimConfig& config, const std::filesystem::path& out, RankGroup& group,
                             const EngineConfig& engine, bool resume = false);

}  // namespace pmdio
