#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pmdio/pmdio.h"

namespace {

int exit_code(pmdio_status st) {
  switch (st) {
    case PMDIO_OK:
      return 0;
    case PMDIO_E_INVALID_ARGUMENT:
      return 2;
    case PMDIO_E_INVALID_CONFIG:
    case PMDIO_E_PARSE:
    case PMDIO_E_UNKNOWN_CODEC:
    case PMDIO_E_NO_CHECKPOINT:
    case PMDIO_E_INVALID_EXTENT:
      return 3;
    case PMDIO_E_IO:
    case PMDIO_E_ALREADY_EXISTS:
    case PMDIO_E_NOT_FOUND:
      return 4;
    case PMDIO_E_CORRUPT_INDEX:
    case PMDIO_E_CORRUPT_CHUNK:
    case PMDIO_E_CORRUPT_WRITE:
    case PMDIO_E_DECODE:
      return 5;
    default:
      return 1;
  }
}

// Prints the returned text (also on failure, e.g. a bench whose verification failed).
int finish(pmdio_status st, char*& out) {
  if (out) {
    std::fputs(out, stdout);
    std::fflush(stdout);
    pmdio_free_string(out);
  }
  if (st != PMDIO_OK) std::fprintf(stderr, "pmdio: %s\n", pmdio_last_error());
  return exit_code(st);
}

std::optional<std::string> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);

  CLI::App app{"pmdio: parallel series I/O engine tools"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<int> ranks;
  std::optional<std::uint64_t> seed;
  bool json = false;
  app.add_option("--ranks", ranks, "Ranks in the group (bench: tasks)")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Workload seed");
  app.add_flag("--json", json, "Machine-readable output");

  auto* bench = app.add_subcommand("bench", "IOR-style POSIX bandwidth test, or the aggregator sweep");
  bool shared = false, file_per_process = false, reorder = false, fsync = false, keep = false, sweep = false;
  std::uint64_t transfer = 1u << 20, block = 4u << 20, elements = 1u << 16;
  int reps = 1, steps = 10, level = 1;
  std::string dir, codec;
  std::vector<int> aggregators{1, 2, 4, 8};
  bench->add_flag("--file-per-process", file_per_process, "One file per rank (IOR -F); the default");
  bench->add_flag("--shared", shared, "One shared file at rank-strided offsets");
  bench->add_option("--transfer-size", transfer, "Bytes per write call (IOR -t)")->transform(CLI::AsSizeValue(false));
  bench->add_option("--block-size", block, "Bytes per rank (IOR -b)")->transform(CLI::AsSizeValue(false));
  bench->add_flag("--reorder-readback", reorder, "Read back the next rank's data (IOR -C)");
  bench->add_flag("--fsync", fsync, "fsync before close (IOR -e)");
  bench->add_option("--repetitions", reps, "Repetitions (IOR -i)")->check(CLI::PositiveNumber);
  bench->add_option("--dir", dir, "Target directory (default: a fresh temporary one)");
  bench->add_flag("--keep-files", keep, "Keep the written files");
  bench->add_flag("--sweep", sweep, "Aggregator sweep through the engine, CSV output");
  bench->add_option("--aggregators", aggregators, "Sweep: aggregator counts")->delimiter(',');
  bench->add_option("--steps", steps, "Sweep: iterations per run")->check(CLI::PositiveNumber);
  bench->add_option("--elements", elements, "Sweep: float64 values per rank per step");
  bench->add_option("--codec", codec, "Sweep: codec (none, blosc-like, bzip2-like)");
  bench->add_option("--level", level, "Sweep: codec level");

  auto* run = app.add_subcommand("run", "Run the PIC-MC workload into a series");
  std::string deck, out_path, monitor_dir;
  bool resume = false, overwrite = false;
  run->add_option("--config", deck, "Workload deck (key = value)")->check(CLI::ExistingFile);
  run->add_option("--out", out_path, "Series directory")->required();
  run->add_flag("--resume", resume, "Restore from the series checkpoint and append");
  run->add_flag("--overwrite", overwrite, "Replace an existing series");
  run->add_option("--monitor-dir", monitor_dir, "Write per-rank op logs here");

  auto* inspect = app.add_subcommand("inspect", "List the contents of a series");
  std::string series_path;
  inspect->add_option("path", series_path, "Series directory")->required();

  auto* report = app.add_subcommand("report", "Merge per-rank op logs into a report");
  std::string log_dir;
  bool csv = false;
  report->add_option("logdir", log_dir, "Directory of *.oplog files")->required();
  report->add_flag("--csv", csv, "Per-rank CSV");

  auto* plan = app.add_subcommand("stripe-plan", "Plan a raid0 layout or parse getstripe output");
  std::uint32_t count = 1;
  std::uint64_t size = 1u << 20, file_size = 0;
  double bandwidth = 1.0 * (1ull << 30), latency = 0;
  std::string parse_file;
  plan->add_option("--count", count, "Stripe count")->check(CLI::PositiveNumber);
  plan->add_option("--size", size, "Stripe size in bytes")->transform(CLI::AsSizeValue(false));
  plan->add_option("--file-size", file_size, "File size to plan for")->transform(CLI::AsSizeValue(false));
  plan->add_option("--bandwidth", bandwidth, "Bytes per second per OST");
  plan->add_option("--latency", latency, "Seconds per stripe unit");
  plan->add_option("--parse", parse_file, "getstripe output to parse ('-' for stdin)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "pmdio: %s\n\n%s", e.what(), app.help().c_str());
    return 2;
  }

  char* out = nullptr;
  if (*bench) {
    if (shared && file_per_process) {
      std::fprintf(stderr, "pmdio: --shared and --file-per-process are exclusive\n");
      return 2;
    }
    if (sweep) {
      pmdio_sweep_spec s{};
      s.ranks = ranks.value_or(8);
      s.aggregators = aggregators.data();
      s.n_aggregators = aggregators.size();
      s.steps = steps;
      s.elements_per_rank = elements;
      s.codec = codec.empty() ? nullptr : codec.c_str();
      s.level = level;
      s.dir = dir.empty() ? nullptr : dir.c_str();
      s.keep_files = keep;
      return finish(pmdio_bench_sweep(&s, &out), out);
    }
    pmdio_bench_spec s;
    pmdio_bench_spec_init(&s);
    s.tasks = ranks.value_or(s.tasks);
    s.shared = shared;
    s.transfer_size = transfer;
    s.block_size = block;
    s.reorder_readback = reorder;
    s.fsync_on_close = fsync;
    s.repetitions = reps;
    s.dir = dir.empty() ? nullptr : dir.c_str();
    s.keep_files = keep;
    return finish(pmdio_bench(&s, json, &out), out);
  }
  if (*run) {
    pmdio_run_spec s;
    pmdio_run_spec_init(&s);
    s.deck = deck.empty() ? nullptr : deck.c_str();
    s.ranks = ranks.value_or(1);
    s.out = out_path.c_str();
    s.has_seed = seed.has_value();
    s.seed = seed.value_or(0);
    s.resume = resume;
    s.overwrite = overwrite;
    s.monitor_dir = monitor_dir.empty() ? nullptr : monitor_dir.c_str();
    return finish(pmdio_run(&s, json, &out), out);
  }
  if (*inspect) return finish(pmdio_inspect(series_path.c_str(), json, &out), out);
  if (*report) return finish(pmdio_report(log_dir.c_str(), csv, json, &out), out);
  if (*plan) {
    if (!parse_file.empty()) {
      std::optional<std::string> text;
      if (parse_file == "-") {
        std::ostringstream s;
        s << std::cin.rdbuf();
        text = s.str();
      } else {
        text = slurp(parse_file);
      }
      if (!text) {
        std::fprintf(stderr, "pmdio: cannot read %s\n", parse_file.c_str());
        return 4;
      }
      return finish(pmdio_stripe_parse(text->c_str(), file_size, bandwidth, latency, json, &out), out);
    }
    if (file_size == 0) {
      std::fprintf(stderr, "pmdio: stripe-plan needs --file-size or --parse\n");
      return 2;
    }
    return finish(pmdio_stripe_plan(count, size, file_size, bandwidth, latency, json, &out), out);
  }
  return 2;
}
