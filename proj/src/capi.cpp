#include "replan/replan.h"

#include <cmath>
#include <filesystem>
#include <new>
#include <string>

#include "replan/sim_harness.hpp"

struct replan_config {
  replan::ScenarioConfig cfg;
};

struct replan_result {
  replan::ScenarioConfig cfg;
  replan::ScenarioResult result;
  double median_ms = 0.0;
};

struct replan_suite {
  replan::SuiteConfig suite;
};

struct replan_bench {
  replan::BenchResult result;
};

namespace {

thread_local std::string g_last_error;

replan_status fail(replan_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs f, mapping exceptions to status codes.
template <class F>
replan_status guarded(F&& f) {
  try {
    f();
    return REPLAN_OK;
  } catch (const replan::Error& e) {
    return fail(static_cast<replan_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(REPLAN_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(REPLAN_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(REPLAN_ERR_INTERNAL, "unknown exception");
  }
}

#define REPLAN_REQUIRE(cond, what) \
  if (!(cond)) return fail(REPLAN_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* replan_version(void) { return "1.0.0"; }

const char* replan_status_string(replan_status status) {
  switch (status) {
    case REPLAN_OK: return "ok";
    case REPLAN_ERR_INTERNAL: return "internal error";
    default: break;
  }
  const int c = static_cast<int>(status);
  if (c >= 1 && c <= 10) return replan::to_string(static_cast<replan::ErrorCode>(c));
  return "unknown status";
}

const char* replan_last_error(void) { return g_last_error.c_str(); }

replan_status replan_config_new(replan_config** out) {
  REPLAN_REQUIRE(out, "out is NULL");
  *out = nullptr;
  return guarded([&] { *out = new replan_config(); });
}

replan_status replan_config_load(const char* path, replan_config** out) {
  REPLAN_REQUIRE(path && out, "path or out is NULL");
  *out = nullptr;
  return guarded([&] { *out = new replan_config{replan::load_config(path)}; });
}

replan_status replan_config_set(replan_config* cfg, const char* key, const char* value) {
  REPLAN_REQUIRE(cfg && key && value, "cfg, key or value is NULL");
  return guarded([&] {
    replan::ScenarioConfig copy = cfg->cfg;
    copy.set(key, value, std::filesystem::current_path().string());
    cfg->cfg = std::move(copy);
  });
}

void replan_config_free(replan_config* cfg) { delete cfg; }

replan_status replan_run(const replan_config* cfg, replan_result** out) {
  REPLAN_REQUIRE(cfg && out, "cfg or out is NULL");
  *out = nullptr;
  return guarded([&] {
    auto* r = new replan_result{cfg->cfg, replan::run_scenario(cfg->cfg), 0.0};
    r->median_ms = replan::median(r->result.replan_ms);
    *out = r;
  });
}

replan_status replan_result_metrics(const replan_result* res, replan_metrics* out) {
  REPLAN_REQUIRE(res && out, "res or out is NULL");
  const replan::ScenarioResult& r = res->result;
  out->success = r.success ? 1 : 0;
  out->failure_cause = replan::to_string(r.cause);
  out->flight_distance = r.flight_distance;
  out->straight_distance = r.straight_distance;
  out->flight_time = r.flight_time;
  out->energy = r.energy;
  out->min_clearance = r.min_clearance;
  out->median_replan_ms = res->median_ms;
  out->replan_count = r.replan_count;
  out->replan_failures = r.replan_failures;
  out->emergency_stops = r.emergency_stops;
  out->braking_stops = r.braking_stops;
  out->collisions = r.collisions;
  return REPLAN_OK;
}

replan_status replan_result_write(const replan_result* res, const char* dir) {
  REPLAN_REQUIRE(res && dir, "res or dir is NULL");
  return guarded([&] { replan::write_run_outputs(dir, res->result, res->cfg); });
}

void replan_result_free(replan_result* res) { delete res; }

replan_status replan_suite_load(const char* path, replan_suite** out) {
  REPLAN_REQUIRE(path && out, "path or out is NULL");
  *out = nullptr;
  return guarded([&] { *out = new replan_suite{replan::load_suite(path)}; });
}

replan_status replan_suite_set_jobs(replan_suite* suite, int jobs) {
  REPLAN_REQUIRE(suite, "suite is NULL");
  REPLAN_REQUIRE(jobs >= 0, "jobs must be >= 0");
  suite->suite.jobs = jobs;
  return REPLAN_OK;
}

void replan_suite_free(replan_suite* suite) { delete suite; }

replan_status replan_bench_run(const replan_suite* suite, replan_bench** out) {
  REPLAN_REQUIRE(suite && out, "suite or out is NULL");
  *out = nullptr;
  return guarded([&] { *out = new replan_bench{replan::run_benchmark(suite->suite)}; });
}

replan_status replan_bench_cell_count(const replan_bench* bench, size_t* out) {
  REPLAN_REQUIRE(bench && out, "bench or out is NULL");
  *out = bench->result.cells.size();
  return REPLAN_OK;
}

replan_status replan_bench_cell(const replan_bench* bench, size_t index, replan_cell* out) {
  REPLAN_REQUIRE(bench && out, "bench or out is NULL");
  if (index >= bench->result.cells.size()) return fail(REPLAN_ERR_BOUNDS, "cell index out of range");
  const replan::BenchCell& c = bench->result.cells[index];
  out->world = c.world.c_str();
  out->strategy = c.strategy.c_str();
  out->runs = c.runs;
  out->successes = c.successes;
  out->mean_distance = c.mean_distance;
  out->mean_time = c.mean_time;
  out->mean_energy = c.mean_energy;
  out->mean_replans = c.mean_replans;
  return REPLAN_OK;
}

replan_status replan_bench_median_replan_ms(const replan_bench* bench, double* out) {
  REPLAN_REQUIRE(bench && out, "bench or out is NULL");
  *out = bench->result.median_replan_ms;
  return REPLAN_OK;
}

replan_status replan_bench_write(const replan_bench* bench, const char* dir) {
  REPLAN_REQUIRE(bench && dir, "bench or dir is NULL");
  return guarded([&] { replan::write_bench_outputs(dir, bench->result); });
}

void replan_bench_free(replan_bench* bench) { delete bench; }

replan_status replan_gen_map(double density, uint64_t seed, const char* path) {
  REPLAN_REQUIRE(path, "path is NULL");
  REPLAN_REQUIRE(std::isfinite(density) && density >= 0.0, "density must be finite and >= 0");
  return guarded([&] {
    replan::MapGenConfig g;
    g.density = density;
    const replan::Scene scene = replan::generate_scene(g, seed);
    if (std::filesystem::path(path).extension() == ".vox")
      replan::save_vox(path, replan::rasterize(scene));
    else
      replan::save_scene(path, scene);
  });
}

}  // extern "C"
