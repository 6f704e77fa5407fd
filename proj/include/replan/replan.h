#ifndef REPLAN_REPLAN_H
#define REPLAN_REPLAN_H

/* C interface to the local replanner and its simulation harness.
 *
 * Every call returns a replan_status. On failure, replan_last_error() gives the message of the
 * most recent failing call on the calling thread (valid until the next failing call there).
 * Handles are opaque; each *_free accepts NULL. Strings handed out by a handle stay valid as
 * long as the handle does. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define REPLAN_API __declspec(dllexport)
#else
#define REPLAN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum replan_status {
  REPLAN_OK = 0,
  REPLAN_ERR_INVALID_ARGUMENT = 1,
  REPLAN_ERR_BOUNDS = 2,
  REPLAN_ERR_STALE_MAP = 3,
  REPLAN_ERR_DOMAIN = 4,
  REPLAN_ERR_IO = 5,
  REPLAN_ERR_PARSE = 6,
  REPLAN_ERR_GENERATION = 7,
  REPLAN_ERR_INFEASIBLE = 8,
  REPLAN_ERR_NUMERICAL = 9,
  REPLAN_ERR_CONFIG = 10,
  REPLAN_ERR_INTERNAL = 99
} replan_status;

typedef struct replan_config replan_config;
typedef struct replan_result replan_result;
typedef struct replan_suite replan_suite;
typedef struct replan_bench replan_bench;

typedef struct replan_metrics {
  int success;
  const char* failure_cause; /* "none", "collision", "emergency_stop_deadlock", "timeout", "planner_infeasible" */
  double flight_distance;    /* m */
  double straight_distance;  /* m */
  double flight_time;        /* s */
  double energy;             /* integral of squared jerk */
  double min_clearance;      /* m */
  double median_replan_ms;   /* wall clock */
  int replan_count;
  int replan_failures;
  int emergency_stops;
  int braking_stops;
  int collisions;
} replan_metrics;

typedef struct replan_cell {
  const char* world;
  const char* strategy;
  int runs;
  int successes;
  double mean_distance; /* NaN when no run succeeded */
  double mean_time;
  double mean_energy;
  double mean_replans;
} replan_cell;

REPLAN_API const char* replan_version(void);
REPLAN_API const char* replan_status_string(replan_status status);
REPLAN_API const char* replan_last_error(void);

/* Scenario configuration. Keys are those of the `key = value` config file format. */
REPLAN_API replan_status replan_config_new(replan_config** out);
REPLAN_API replan_status replan_config_load(const char* path, replan_config** out);
REPLAN_API replan_status replan_config_set(replan_config* cfg, const char* key, const char* value);
REPLAN_API void replan_config_free(replan_config* cfg);

/* One closed-loop flight. Planner failures are part of the result, not an error status. */
REPLAN_API replan_status replan_run(const replan_config* cfg, replan_result** out);
REPLAN_API replan_status replan_result_metrics(const replan_result* res, replan_metrics* out);
/* result.json, replans.jsonl, trajectory.csv (deterministic) and timing.json. */
REPLAN_API replan_status replan_result_write(const replan_result* res, const char* dir);
REPLAN_API void replan_result_free(replan_result* res);

/* Benchmark suites: seeds x densities (and scene files) x strategies. */
REPLAN_API replan_status replan_suite_load(const char* path, replan_suite** out);
REPLAN_API replan_status replan_suite_set_jobs(replan_suite* suite, int jobs);
REPLAN_API void replan_suite_free(replan_suite* suite);
REPLAN_API replan_status replan_bench_run(const replan_suite* suite, replan_bench** out);
REPLAN_API replan_status replan_bench_cell_count(const replan_bench* bench, size_t* out);
REPLAN_API replan_status replan_bench_cell(const replan_bench* bench, size_t index, replan_cell* out);
REPLAN_API replan_status replan_bench_median_replan_ms(const replan_bench* bench, double* out);
/* runs.csv, summary.csv, result.json (deterministic) and timing.json. */
REPLAN_API replan_status replan_bench_write(const replan_bench* bench, const char* dir);
REPLAN_API void replan_bench_free(replan_bench* bench);

/* Random world with the default generator parameters at `density` obstacles per m^2.
 * Written as a scene file, or as a binary voxel dump when `path` ends in ".vox". */
REPLAN_API replan_status replan_gen_map(double density, uint64_t seed, const char* path);

#ifdef __cplusplus
}
#endif

#endif
