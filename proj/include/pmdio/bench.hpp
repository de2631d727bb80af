#pragma once

// IOR-style POSIX bandwidth harness and the aggregator-count sweep.
//
// Flag mapping to IOR: file_per_process is -F, reorder_readback is -C,
// fsync_on_close is -e. Each rank writes block_size bytes in transfer_size
// pieces, either to its own file bench.<rank> or to its rank-strided region
// of the shared file bench.shared, then reads a block back and checks the
// byte pattern.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pmdio/codecs.hpp"
#include "pmdio/engine.hpp"
#include "pmdio/monitor.hpp"

namespace pmdio {

enum class BenchMode { file_per_process, shared };

struct BenchSpec {
  int tasks = 4;
  BenchMode mode = BenchMode::file_per_process;
  std::uint64_t transfer_size = 1u << 20;
  std::uint64_t block_size = 4u << 20;
  bool reorder_readback = false;
  bool fsync_on_close = false;
  int repetitions = 1;
  std::filesystem::path dir;
  bool keep_files = false;
};

// Throws InvalidConfig on an inconsistent spec.
void validate(const BenchSpec& spec);

// Pattern word at a given 8-byte index of the file region written by `rank`.
std::uint64_t bench_pattern(int rank, std::uint64_t word);

struct BenchRep {
  double write_s = 0;  // first write start to last write end, all ranks
  double read_s = 0;
  double write_gibps = 0;
  double read_gibps = 0;
  double monitor_write_gibps = 0;  // same quantity from the merged monitor logs
  std::uint64_t bytes = 0;
  std::uint64_t verify_errors = 0;
};

struct BenchResult {
  BenchSpec spec;
  std::vector<BenchRep> reps;
  std::vector<FileEntry> files;  // census after the last repetition's write
  AggregateReport report;        // last repetition
  double mean_write_gibps() const;
  double mean_read_gibps() const;
  std::uint64_t verify_errors() const;
};

// Throws IoError (with the bytes needed) when the target file system lacks
// room for one repetition.
BenchResult run_bench(const BenchSpec& spec);
std::string bench_text(const BenchResult& result);
std::string bench_json(const BenchResult& result);

struct SweepSpec {
  int ranks = 8;
  std::vector<int> aggregators{1, 2, 4, 8};
  int steps = 10;
  std::uint64_t elements_per_rank = 1u << 16;  // float64 values per rank per step
  CodecConfig codec;
  std::filesystem::path dir;
  bool keep_files = false;
};

struct SweepRow {
  int num_agg = 0;
  int ranks = 0;
  int steps = 0;
  std::uint64_t data_files = 0;
  std::uint64_t payload_bytes = 0;  // raw element bytes handed to the engine
  std::uint64_t bytes_written = 0;  // all engine appends, metadata included
  double write_s = 0;
  double meta_s = 0;
  std::uint64_t meta_ops = 0;
  double write_gibps = 0;
};

std::vector<SweepRow> run_sweep(const SweepSpec& spec);
inline constexpr const char* kSweepCsvHeader =
    "num_agg,ranks,steps,data_files,payload_bytes,bytes_written,write_s,meta_s,meta_ops,write_gibps";
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace pmdio
