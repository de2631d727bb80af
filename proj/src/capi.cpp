#include "pmdio/pmdio.h"

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <json.hpp>
#include <sstream>
#include <unistd.h>

#include "pmdio/bench.hpp"
#include "pmdio/comm.hpp"
#include "pmdio/config.hpp"
#include "pmdio/engine.hpp"
#include "pmdio/monitor.hpp"
#include "pmdio/series.hpp"
#include "pmdio/striping.hpp"
#include "pmdio/workload.hpp"

using namespace pmdio;

struct pmdio_group {
  RankGroup* group;
};

struct pmdio_config {
  EngineConfig config;
};

struct pmdio_series {
  std::unique_ptr<Series> series;
};

struct pmdio_reader {
  SeriesReader reader;
};

namespace {

thread_local std::string last_error;

pmdio_status set_error(Errc code, const std::string& message) {
  last_error = message;
  return static_cast<pmdio_status>(code);
}

template <class F>
pmdio_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return PMDIO_OK;
  } catch (const GroupFault& e) {
    // Report what went wrong rather than the fact that the group died.
    return set_error(e.cause(), e.what());
  } catch (const Error& e) {
    return set_error(e.code(), e.what());
  } catch (const std::exception& e) {
    last_error = e.what();
    return PMDIO_E_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) fail(Errc::invalid_argument, what);
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

std::vector<std::uint64_t> dims(int ndims, const uint64_t* v, const char* what) {
  if (ndims < 1 || ndims > PMDIO_MAX_DIMS) fail(Errc::invalid_extent, std::string(what) + ": bad dimension count");
  require(v != nullptr, what);
  return std::vector<std::uint64_t>(v, v + ndims);
}

Datatype to_datatype(pmdio_datatype t) {
  auto d = datatype_from_code(static_cast<std::uint8_t>(t));
  if (!d) fail(Errc::invalid_argument, "unknown datatype code " + std::to_string(static_cast<int>(t)));
  return *d;
}

void set_attr(pmdio_series* s, std::uint64_t iteration, const char* record, const char* component, const char* key,
              format::AttributeValue value) {
  require(s && key, "series and key are required");
  if (!s->series->open_iteration() || *s->series->open_iteration() != iteration)
    fail(Errc::iteration_closed, "iteration " + std::to_string(iteration) + " is not open");
  Iteration it(s->series.get(), iteration);
  if (!record) return it.set_attribute(key, std::move(value));
  auto rec = Record(s->series.get(), iteration, record);
  if (!component) return rec.set_attribute(key, std::move(value));
  rec[component].set_attribute(key, std::move(value));
}

void fill_stats(const FlushStats& f, pmdio_flush_stats* out) {
  if (!out) return;
  out->iteration = f.iteration;
  out->chunk_count = f.chunk_count;
  out->bytes_raw = f.bytes_raw;
  out->bytes_stored = f.bytes_stored;
  out->bytes_framed = f.bytes_framed;
  out->elapsed_s = f.elapsed_s;
}

// Fresh directory under the system temp dir, removed afterwards unless kept.
struct ScratchDir {
  std::filesystem::path path;
  bool keep = false;
  ScratchDir(const char* requested, bool keep_files) : keep(keep_files || requested) {
    if (requested) {
      path = requested;
      return;
    }
    auto tmpl = (std::filesystem::temp_directory_path() / "pmdio-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) fail(Errc::io_error, "mkdtemp " + tmpl + ": " + std::strerror(errno));
    path = tmpl;
  }
  ~ScratchDir() {
    std::error_code ec;
    if (!keep) std::filesystem::remove_all(path, ec);
  }
};

pmdio_status open_series(pmdio_group* group, const char* path, const pmdio_config* config, pmdio_series** out,
                         Access access) {
  return guard([&] {
    require(group && path && out, "group, path and out are required");
    auto s = Series::open(path, access, *group->group, config ? config->config : EngineConfig{});
    *out = new pmdio_series{std::move(s)};
  });
}

}  // namespace

extern "C" {

const char* pmdio_last_error(void) { return last_error.c_str(); }

const char* pmdio_status_name(pmdio_status status) {
  if (status == PMDIO_E_INTERNAL) return "Internal";
  return errc_name(static_cast<Errc>(status)).data();
}

void pmdio_free_string(char* s) { std::free(s); }

const char* pmdio_version(void) { return "0.1.0"; }

pmdio_status pmdio_spawn(int n_ranks, pmdio_rank_fn fn, void* user) {
  try {
    require(fn != nullptr, "rank function is required");
    if (n_ranks < 1) fail(Errc::invalid_config, "a group needs at least one rank");
    spawn_group(n_ranks, [&](RankGroup& g) {
      pmdio_group handle{&g};
      const auto st = fn(&handle, user);
      if (st != PMDIO_OK) {
        const auto code = st == PMDIO_E_INTERNAL ? Errc::invalid_argument : static_cast<Errc>(st);
        fail(code, last_error.empty() ? "rank function returned " + std::string(pmdio_status_name(st)) : last_error);
      }
    });
    last_error.clear();
    return PMDIO_OK;
  } catch (const GroupFault& e) {
    return set_error(Errc::group_fault, e.what());
  } catch (const Error& e) {
    return set_error(e.code(), e.what());
  } catch (const std::exception& e) {
    last_error = e.what();
    return PMDIO_E_INTERNAL;
  }
}

int pmdio_group_rank(const pmdio_group* group) { return group ? group->group->rank() : -1; }
int pmdio_group_size(const pmdio_group* group) { return group ? group->group->size() : 0; }

pmdio_status pmdio_group_exclusive_prefix_sum(pmdio_group* group, uint64_t local, uint64_t* out) {
  return guard([&] {
    require(group && out, "group and out are required");
    *out = group->group->exclusive_prefix_sum(local);
  });
}

pmdio_status pmdio_group_all_reduce_sum(pmdio_group* group, uint64_t local, uint64_t* out) {
  return guard([&] {
    require(group && out, "group and out are required");
    *out = group->group->all_reduce_sum(local);
  });
}

pmdio_status pmdio_group_barrier(pmdio_group* group) {
  return guard([&] {
    require(group != nullptr, "group is required");
    group->group->barrier();
  });
}

pmdio_status pmdio_config_new(pmdio_config** out) {
  return guard([&] {
    require(out != nullptr, "out is required");
    *out = new pmdio_config{};
    apply_profiling_env((*out)->config);
  });
}

void pmdio_config_free(pmdio_config* config) { delete config; }

pmdio_status pmdio_config_parse(pmdio_config* config, const char* text) {
  return guard([&] {
    require(config && text, "config and text are required");
    config->config = engine_config_from(KeyValueFile::parse(text), config->config);
  });
}

pmdio_status pmdio_config_load(pmdio_config* config, const char* path) {
  return guard([&] {
    require(config && path, "config and path are required");
    config->config = engine_config_from(KeyValueFile::load(path), config->config);
  });
}

pmdio_status pmdio_config_set_overwrite(pmdio_config* config, int overwrite) {
  return guard([&] {
    require(config != nullptr, "config is required");
    config->config.overwrite = overwrite != 0;
  });
}

pmdio_status pmdio_config_set_monitor_dir(pmdio_config* config, const char* dir) {
  return guard([&] {
    require(config != nullptr, "config is required");
    config->config.monitor_log_dir = dir ? dir : "";
  });
}

pmdio_status pmdio_series_create(pmdio_group* group, const char* path, const pmdio_config* config,
                                 pmdio_series** out) {
  return open_series(group, path, config, out, Access::create);
}

pmdio_status pmdio_series_append(pmdio_group* group, const char* path, const pmdio_config* config,
                                 pmdio_series** out) {
  return open_series(group, path, config, out, Access::append);
}

pmdio_status pmdio_series_begin_iteration(pmdio_series* series, uint64_t iteration) {
  return guard([&] {
    require(series != nullptr, "series is required");
    series->series->create_iteration(iteration);
  });
}

pmdio_status pmdio_series_define(pmdio_series* series, uint64_t iteration, const char* record,
                                 pmdio_record_kind kind, const char* component, pmdio_datatype type, int ndims,
                                 const uint64_t* global_extent) {
  return guard([&] {
    require(series && record && component, "series, record and component are required");
    auto ext = dims(ndims, global_extent, "global extent");
    if (!series->series->open_iteration() || *series->series->open_iteration() != iteration)
      fail(Errc::iteration_closed, "iteration " + std::to_string(iteration) + " is not open");
    Iteration it(series->series.get(), iteration);
    auto rec = kind == PMDIO_PARTICLES ? it.particles(record) : it.mesh(record);
    rec[component].define(to_datatype(type), ext);
  });
}

pmdio_status pmdio_series_store(pmdio_series* series, uint64_t iteration, const char* record,
                                const char* component, pmdio_datatype type, const void* data, int ndims,
                                const uint64_t* offset, const uint64_t* extent) {
  return guard([&] {
    require(series && record && component && data, "series, record, component and data are required");
    auto off = dims(ndims, offset, "offset");
    auto ext = dims(ndims, extent, "extent");
    const auto dt = to_datatype(type);
    const auto n = element_count(ext);
    RecordComponent rc(series->series.get(), iteration, record, component);
    rc.store_raw(dt, std::span(static_cast<const std::byte*>(data), n * element_size(dt)), n, off, ext, nullptr);
  });
}

pmdio_status pmdio_series_set_attr_f64(pmdio_series* series, uint64_t iteration, const char* record,
                                       const char* component, const char* key, double value) {
  return guard([&] { set_attr(series, iteration, record, component, key, value); });
}

pmdio_status pmdio_series_set_attr_u64(pmdio_series* series, uint64_t iteration, const char* record,
                                       const char* component, const char* key, uint64_t value) {
  return guard([&] { set_attr(series, iteration, record, component, key, std::uint64_t{value}); });
}

pmdio_status pmdio_series_set_attr_string(pmdio_series* series, uint64_t iteration, const char* record,
                                          const char* component, const char* key, const char* value) {
  return guard([&] {
    require(value != nullptr, "value is required");
    set_attr(series, iteration, record, component, key, std::string(value));
  });
}

pmdio_status pmdio_series_set_series_attr_string(pmdio_series* series, const char* key, const char* value) {
  return guard([&] {
    require(series && key && value, "series, key and value are required");
    series->series->set_attribute(key, std::string(value));
  });
}

pmdio_status pmdio_series_flush(pmdio_series* series, pmdio_flush_stats* stats) {
  return guard([&] {
    require(series != nullptr, "series is required");
    fill_stats(series->series->flush(), stats);
  });
}

pmdio_status pmdio_series_close_iteration(pmdio_series* series, uint64_t iteration, pmdio_flush_stats* stats) {
  return guard([&] {
    require(series != nullptr, "series is required");
    fill_stats(series->series->close_iteration(iteration), stats);
  });
}

pmdio_status pmdio_series_close(pmdio_series* series) {
  auto st = guard([&] {
    require(series != nullptr, "series is required");
    series->series->close();
  });
  delete series;
  return st;
}

pmdio_status pmdio_reader_open(const char* path, pmdio_reader** out) {
  return guard([&] {
    require(path && out, "path and out are required");
    *out = new pmdio_reader{SeriesReader::open(path)};
  });
}

void pmdio_reader_free(pmdio_reader* reader) { delete reader; }

pmdio_status pmdio_reader_iterations(const pmdio_reader* reader, uint64_t* out, size_t cap, size_t* count) {
  return guard([&] {
    require(reader && count, "reader and count are required");
    auto its = reader->reader.iterations();
    *count = its.size();
    for (std::size_t i = 0; i < its.size() && i < cap && out; ++i) out[i] = its[i];
  });
}

pmdio_status pmdio_reader_component(const pmdio_reader* reader, uint64_t iteration, const char* record,
                                    const char* component, pmdio_datatype* type, int* ndims, uint64_t* extent) {
  return guard([&] {
    require(reader && record && component, "reader, record and component are required");
    const auto& c = reader->reader.component(iteration, record, component);
    if (type) *type = static_cast<pmdio_datatype>(c.datatype);
    if (ndims) *ndims = static_cast<int>(c.global_extent.size());
    if (extent) std::copy(c.global_extent.begin(), c.global_extent.end(), extent);
  });
}

pmdio_status pmdio_reader_read(const pmdio_reader* reader, uint64_t iteration, const char* record,
                               const char* component, int ndims, const uint64_t* offset, const uint64_t* extent,
                               void* out, size_t out_bytes) {
  return guard([&] {
    require(reader && record && component && out, "reader, record, component and out are required");
    std::optional<Selection> sel;
    if (offset || extent) sel = Selection{dims(ndims, offset, "offset"), dims(ndims, extent, "extent")};
    auto bytes = reader->reader.read(iteration, record, component, sel);
    if (bytes.size() != out_bytes)
      fail(Errc::invalid_argument, "selection is " + std::to_string(bytes.size()) + " bytes, buffer is " +
                                       std::to_string(out_bytes));
    std::memcpy(out, bytes.data(), bytes.size());
  });
}

pmdio_status pmdio_inspect(const char* path, int json, char** out) {
  return guard([&] {
    require(path && out, "path and out are required");
    auto inv = list_contents(path);
    *out = dup(json ? inventory_json(inv) + "\n" : inventory_text(inv));
  });
}

pmdio_status pmdio_report(const char* dir, int csv, int json, char** out) {
  return guard([&] {
    require(dir && out, "dir and out are required");
    auto report = load_report_dir(dir);
    const auto fmt = json ? ReportFormat::json : csv ? ReportFormat::csv : ReportFormat::text;
    *out = dup(render_report(report, fmt));
  });
}

pmdio_status pmdio_stripe_plan(uint32_t count, uint64_t size, uint64_t file_size, double bandwidth, double latency,
                               int json, char** out) {
  return guard([&] {
    require(out != nullptr, "out is required");
    StripeConfig cfg;
    cfg.stripe_count = count;
    cfg.stripe_size = size;
    StripeModel model;
    model.bandwidth = bandwidth;
    model.latency = latency;
    *out = dup(render_stripe_plan(cfg, file_size, model, json != 0));
  });
}

pmdio_status pmdio_stripe_parse(const char* text, uint64_t plan_file_size, double bandwidth, double latency,
                                int json, char** out) {
  return guard([&] {
    require(text && out, "text and out are required");
    auto g = parse_getstripe(text);
    validate(g.config);
    StripeModel model;
    model.bandwidth = bandwidth;
    model.latency = latency;
    if (json) {
      nlohmann::json objects = nlohmann::json::array();
      for (const auto& o : g.objects)
        objects.push_back({{"obdidx", o.obdidx}, {"objid", o.objid}, {"group", o.group}});
      nlohmann::json doc = {{"path", g.path},
                            {"stripe_count", g.config.stripe_count},
                            {"stripe_size", g.config.stripe_size},
                            {"pattern", g.config.pattern},
                            {"layout_gen", g.layout_gen},
                            {"objects", objects}};
      if (g.stripe_offset) doc["stripe_offset"] = *g.stripe_offset;
      if (plan_file_size)
        doc["plan"] = nlohmann::json::parse(render_stripe_plan(g.config, plan_file_size, model, true));
      *out = dup(doc.dump(2) + "\n");
    } else {
      auto text_out = render_getstripe(g);
      if (plan_file_size) text_out += "\n" + render_stripe_plan(g.config, plan_file_size, model, false);
      *out = dup(text_out);
    }
  });
}

void pmdio_bench_spec_init(pmdio_bench_spec* spec) {
  if (!spec) return;
  BenchSpec d;
  spec->tasks = d.tasks;
  spec->shared = 0;
  spec->transfer_size = d.transfer_size;
  spec->block_size = d.block_size;
  spec->reorder_readback = 0;
  spec->fsync_on_close = 0;
  spec->repetitions = d.repetitions;
  spec->dir = nullptr;
  spec->keep_files = 0;
}

pmdio_status pmdio_bench(const pmdio_bench_spec* spec, int json, char** out) {
  return guard([&] {
    require(spec && out, "spec and out are required");
    BenchSpec s;
    s.tasks = spec->tasks;
    s.mode = spec->shared ? BenchMode::shared : BenchMode::file_per_process;
    s.transfer_size = spec->transfer_size;
    s.block_size = spec->block_size;
    s.reorder_readback = spec->reorder_readback != 0;
    s.fsync_on_close = spec->fsync_on_close != 0;
    s.repetitions = spec->repetitions;
    ScratchDir scratch(spec->dir, spec->keep_files != 0);
    s.dir = scratch.path;
    s.keep_files = spec->keep_files != 0;
    auto res = run_bench(s);
    *out = dup(json ? bench_json(res) : bench_text(res));
    if (res.verify_errors())
      fail(Errc::corrupt_chunk, std::to_string(res.verify_errors()) + " words failed pattern verification");
  });
}

pmdio_status pmdio_bench_sweep(const pmdio_sweep_spec* spec, char** csv) {
  return guard([&] {
    require(spec && csv, "spec and csv are required");
    SweepSpec s;
    s.ranks = spec->ranks;
    if (spec->aggregators && spec->n_aggregators)
      s.aggregators.assign(spec->aggregators, spec->aggregators + spec->n_aggregators);
    s.steps = spec->steps;
    s.elements_per_rank = spec->elements_per_rank;
    if (spec->codec) {
      auto id = codec_from_name(spec->codec);
      if (!id) fail(Errc::invalid_config, std::string("unknown codec ") + spec->codec);
      s.codec.id = *id;
    }
    s.codec.level = spec->level;
    ScratchDir scratch(spec->dir, spec->keep_files != 0);
    s.dir = scratch.path;
    s.keep_files = spec->keep_files != 0;
    *csv = dup(sweep_csv(run_sweep(s)));
  });
}

void pmdio_run_spec_init(pmdio_run_spec* spec) {
  if (!spec) return;
  *spec = pmdio_run_spec{nullptr, 1, nullptr, 0, 0, 0, 0, nullptr};
}

pmdio_status pmdio_run(const pmdio_run_spec* spec, int json, char** out) {
  return guard([&] {
    require(spec && spec->out && out, "spec, out path and out are required");
    SimConfig sim;
    EngineConfig engine;
    if (spec->deck) {
      auto deck = KeyValueFile::load(spec->deck);
      sim = sim_config_from(deck);
      engine = engine_config_from(deck);
    } else {
      apply_profiling_env(engine);
    }
    if (spec->has_seed) sim.seed = spec->seed;
    engine.overwrite = spec->overwrite != 0;
    if (spec->monitor_dir) engine.monitor_log_dir = spec->monitor_dir;
    const auto warnings = validate(sim);
    if (spec->ranks < 1) fail(Errc::invalid_config, "--ranks must be >= 1");
    const std::filesystem::path path = spec->out;
    auto results = spawn_group(spec->ranks, [&](RankGroup& g) {
      return run_workload(sim, path, g, engine, spec->resume != 0);
    });
    const auto& r = results[0];
    const auto inv = list_contents(path);
    std::vector<std::uint64_t> iterations;
    for (const auto& it : inv.iterations) iterations.push_back(it.index);
    if (json) {
      nlohmann::json doc = {{"out", path.string()},
                            {"ranks", spec->ranks},
                            {"seed", sim.seed},
                            {"first_step", r.first_step},
                            {"last_step", r.last_step},
                            {"snapshots", r.snapshots},
                            {"averaged", r.averaged},
                            {"checkpoints", r.checkpoints},
                            {"ionizations", r.ionizations},
                            {"alive", {{"e", r.alive[0]}, {"D+", r.alive[1]}, {"D", r.alive[2]}}},
                            {"iterations", iterations},
                            {"file_count", inv.files.size()},
                            {"wall_s", r.wall_s},
                            {"warnings", warnings}};
      *out = dup(doc.dump(2) + "\n");
    } else {
      std::ostringstream o;
      for (const auto& w : warnings) o << "warning: " << w << '\n';
      o << "ran steps " << r.first_step << ".." << r.last_step << " on " << spec->ranks << " ranks (seed "
        << sim.seed << ") in " << r.wall_s << " s\n";
      o << "snapshots " << r.snapshots << ", averaged " << r.averaged << ", checkpoints " << r.checkpoints
        << ", ionizations " << r.ionizations << '\n';
      o << "alive: e " << r.alive[0] << ", D+ " << r.alive[1] << ", D " << r.alive[2] << '\n';
      o << "series " << path.string() << ": " << iterations.size() << " iterations, " << inv.files.size()
        << " files\n";
      *out = dup(o.str());
    }
  });
}

}  // extern "C"
