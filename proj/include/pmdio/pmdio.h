#ifndef PMDIO_PMDIO_H
#define PMDIO_PMDIO_H

/*
 * C interface to the pmdio library.
 *
 * Every function returns a pmdio_status. On failure the message of the most
 * recent error on the calling thread is available from pmdio_last_error().
 * Strings returned through char** outputs are heap-allocated and must be
 * released with pmdio_free_string().
 *
 * Writers run inside a rank group: pmdio_spawn() calls the rank function once
 * per rank on its own thread. Series calls marked collective must be made by
 * every rank in the same order.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define PMDIO_API __attribute__((visibility("default")))
#else
#define PMDIO_API
#endif

typedef enum pmdio_status {
  PMDIO_OK = 0,
  PMDIO_E_ALREADY_EXISTS = 1,
  PMDIO_E_CORRUPT_INDEX = 2,
  PMDIO_E_COLLECTIVE_MISMATCH = 3,
  PMDIO_E_ITERATION_CLOSED = 4,
  PMDIO_E_ITERATION_BUSY = 5,
  PMDIO_E_ALREADY_DEFINED = 6,
  PMDIO_E_INVALID_EXTENT = 7,
  PMDIO_E_OUT_OF_BOUNDS = 8,
  PMDIO_E_CODEC = 9,
  PMDIO_E_IO = 10,
  PMDIO_E_GROUP_FAULT = 11,
  PMDIO_E_INVALID_CONFIG = 12,
  PMDIO_E_CORRUPT_WRITE = 13,
  PMDIO_E_CORRUPT_CHUNK = 14,
  PMDIO_E_UNKNOWN_CODEC = 15,
  PMDIO_E_DECODE = 16,
  PMDIO_E_PARSE = 17,
  PMDIO_E_NO_CHECKPOINT = 18,
  PMDIO_E_INVALID_ARGUMENT = 19,
  PMDIO_E_NOT_FOUND = 20,
  PMDIO_E_NOT_DEFINED = 21,
  PMDIO_E_INTERNAL = 99
} pmdio_status;

typedef enum pmdio_datatype {
  PMDIO_FLOAT32 = 1,
  PMDIO_FLOAT64 = 2,
  PMDIO_UINT64 = 3,
  PMDIO_INT64 = 4
} pmdio_datatype;

typedef enum pmdio_record_kind { PMDIO_MESH = 0, PMDIO_PARTICLES = 1 } pmdio_record_kind;

#define PMDIO_MAX_DIMS 8

typedef struct pmdio_group pmdio_group;
typedef struct pmdio_config pmdio_config;
typedef struct pmdio_series pmdio_series;
typedef struct pmdio_reader pmdio_reader;

PMDIO_API const char* pmdio_last_error(void);
PMDIO_API const char* pmdio_status_name(pmdio_status status);
PMDIO_API void pmdio_free_string(char* s);
PMDIO_API const char* pmdio_version(void);

/* Rank groups */

/* Returns PMDIO_OK to succeed; anything else faults the whole group. */
typedef pmdio_status (*pmdio_rank_fn)(pmdio_group* group, void* user);

/* Runs fn on n_ranks threads. If any rank fails, returns PMDIO_E_GROUP_FAULT
 * and pmdio_last_error() names the first failing rank and its error. */
PMDIO_API pmdio_status pmdio_spawn(int n_ranks, pmdio_rank_fn fn, void* user);
PMDIO_API int pmdio_group_rank(const pmdio_group* group);
PMDIO_API int pmdio_group_size(const pmdio_group* group);
PMDIO_API pmdio_status pmdio_group_exclusive_prefix_sum(pmdio_group* group, uint64_t local, uint64_t* out);
PMDIO_API pmdio_status pmdio_group_all_reduce_sum(pmdio_group* group, uint64_t local, uint64_t* out);
PMDIO_API pmdio_status pmdio_group_barrier(pmdio_group* group);

/* Engine configuration */

PMDIO_API pmdio_status pmdio_config_new(pmdio_config** out);
PMDIO_API void pmdio_config_free(pmdio_config* config);
/* Applies key/value text in the config file syntax, e.g.
 * "engine.num_aggregators = 2\ncompression.codec = \"blosc-like\"". */
PMDIO_API pmdio_status pmdio_config_parse(pmdio_config* config, const char* text);
PMDIO_API pmdio_status pmdio_config_load(pmdio_config* config, const char* path);
PMDIO_API pmdio_status pmdio_config_set_overwrite(pmdio_config* config, int overwrite);
PMDIO_API pmdio_status pmdio_config_set_monitor_dir(pmdio_config* config, const char* dir);

/* Writing */

typedef struct pmdio_flush_stats {
  uint64_t iteration;
  uint64_t chunk_count;
  uint64_t bytes_raw;
  uint64_t bytes_stored;
  uint64_t bytes_framed;
  double elapsed_s;
} pmdio_flush_stats;

/* Collective. config may be NULL for defaults. */
PMDIO_API pmdio_status pmdio_series_create(pmdio_group* group, const char* path, const pmdio_config* config,
                                           pmdio_series** out);
PMDIO_API pmdio_status pmdio_series_append(pmdio_group* group, const char* path, const pmdio_config* config,
                                           pmdio_series** out);
PMDIO_API pmdio_status pmdio_series_begin_iteration(pmdio_series* series, uint64_t iteration);
PMDIO_API pmdio_status pmdio_series_define(pmdio_series* series, uint64_t iteration, const char* record,
                                           pmdio_record_kind kind, const char* component, pmdio_datatype type,
                                           int ndims, const uint64_t* global_extent);
/* Deferred: data must stay valid and unchanged until the next flush. */
PMDIO_API pmdio_status pmdio_series_store(pmdio_series* series, uint64_t iteration, const char* record,
                                          const char* component, pmdio_datatype type, const void* data, int ndims,
                                          const uint64_t* offset, const uint64_t* extent);
/* Attribute scope: record == NULL sets an iteration attribute; component ==
 * NULL a record attribute; both set a component attribute. */
PMDIO_API pmdio_status pmdio_series_set_attr_f64(pmdio_series* series, uint64_t iteration, const char* record,
                                                 const char* component, const char* key, double value);
PMDIO_API pmdio_status pmdio_series_set_attr_u64(pmdio_series* series, uint64_t iteration, const char* record,
                                                 const char* component, const char* key, uint64_t value);
PMDIO_API pmdio_status pmdio_series_set_attr_string(pmdio_series* series, uint64_t iteration, const char* record,
                                                    const char* component, const char* key, const char* value);
PMDIO_API pmdio_status pmdio_series_set_series_attr_string(pmdio_series* series, const char* key, const char* value);
/* Collective. stats may be NULL. */
PMDIO_API pmdio_status pmdio_series_flush(pmdio_series* series, pmdio_flush_stats* stats);
PMDIO_API pmdio_status pmdio_series_close_iteration(pmdio_series* series, uint64_t iteration,
                                                    pmdio_flush_stats* stats);
/* Collective. Releases the handle whether or not closing succeeded. */
PMDIO_API pmdio_status pmdio_series_close(pmdio_series* series);

/* Reading */

PMDIO_API pmdio_status pmdio_reader_open(const char* path, pmdio_reader** out);
PMDIO_API void pmdio_reader_free(pmdio_reader* reader);
/* Writes up to cap iteration indices; *count receives the total. */
PMDIO_API pmdio_status pmdio_reader_iterations(const pmdio_reader* reader, uint64_t* out, size_t cap,
                                               size_t* count);
/* extent must have room for PMDIO_MAX_DIMS values. */
PMDIO_API pmdio_status pmdio_reader_component(const pmdio_reader* reader, uint64_t iteration, const char* record,
                                              const char* component, pmdio_datatype* type, int* ndims,
                                              uint64_t* extent);
/* offset/extent NULL reads the whole component. out_bytes must match the
 * selection size exactly. */
PMDIO_API pmdio_status pmdio_reader_read(const pmdio_reader* reader, uint64_t iteration, const char* record,
                                         const char* component, int ndims, const uint64_t* offset,
                                         const uint64_t* extent, void* out, size_t out_bytes);

/* Tools. Each returns rendered text (JSON when json != 0). */

PMDIO_API pmdio_status pmdio_inspect(const char* path, int json, char** out);
/* Merges every *.oplog in dir. csv selects CSV over aligned text; json
 * overrides both. */
PMDIO_API pmdio_status pmdio_report(const char* dir, int csv, int json, char** out);
PMDIO_API pmdio_status pmdio_stripe_plan(uint32_t count, uint64_t size, uint64_t file_size, double bandwidth,
                                         double latency, int json, char** out);
/* Parses getstripe text; plan_file_size > 0 also appends a plan for a file of
 * that size. */
PMDIO_API pmdio_status pmdio_stripe_parse(const char* text, uint64_t plan_file_size, double bandwidth,
                                          double latency, int json, char** out);

typedef struct pmdio_bench_spec {
  int tasks;
  int shared; /* 0: file per process */
  uint64_t transfer_size;
  uint64_t block_size;
  int reorder_readback;
  int fsync_on_close;
  int repetitions;
  const char* dir;
  int keep_files;
} pmdio_bench_spec;

PMDIO_API void pmdio_bench_spec_init(pmdio_bench_spec* spec);
PMDIO_API pmdio_status pmdio_bench(const pmdio_bench_spec* spec, int json, char** out);

typedef struct pmdio_sweep_spec {
  int ranks;
  const int* aggregators;
  size_t n_aggregators;
  int steps;
  uint64_t elements_per_rank;
  const char* codec; /* NULL for none */
  int level;
  const char* dir;
  int keep_files;
} pmdio_sweep_spec;

/* Emits CSV with the header
 * num_agg,ranks,steps,data_files,payload_bytes,bytes_written,write_s,meta_s,meta_ops,write_gibps */
PMDIO_API pmdio_status pmdio_bench_sweep(const pmdio_sweep_spec* spec, char** csv);

typedef struct pmdio_run_spec {
  const char* deck; /* NULL for the built-in defaults */
  int ranks;
  const char* out;
  int has_seed;
  uint64_t seed;
  int resume;
  int overwrite;
  const char* monitor_dir; /* NULL: no per-rank op logs */
} pmdio_run_spec;

PMDIO_API void pmdio_run_spec_init(pmdio_run_spec* spec);
PMDIO_API pmdio_status pmdio_run(const pmdio_run_spec* spec, int json, char** out);

#ifdef __cplusplus
}
#endif

#endif
