// Command-line front end. Talks to the planner through the C interface only.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <string>

#include "replan/replan.h"

namespace {

int report(replan_status s, const char* what) {
  std::fprintf(stderr, "error: %s: %s (%s)\n", what, replan_last_error(), replan_status_string(s));
  return 1;
}

int cmd_run(const std::string& config, const std::string& seed, const std::string& out) {
  replan_config* cfg = nullptr;
  replan_status s = replan_config_load(config.c_str(), &cfg);
  if (s != REPLAN_OK) return report(s, "loading config");
  if (!seed.empty() && (s = replan_config_set(cfg, "seed", seed.c_str())) != REPLAN_OK) {
    replan_config_free(cfg);
    return report(s, "--seed");
  }
  replan_result* res = nullptr;
  s = replan_run(cfg, &res);
  replan_config_free(cfg);
  if (s != REPLAN_OK) return report(s, "run");

  replan_metrics m{};
  replan_result_metrics(res, &m);
  std::printf("success=%d cause=%s distance=%.3f time=%.2f energy=%.3f replans=%d median_replan_ms=%.1f\n",
              m.success, m.failure_cause, m.flight_distance, m.flight_time, m.energy, m.replan_count,
              m.median_replan_ms);
  if (!out.empty() && (s = replan_result_write(res, out.c_str())) != REPLAN_OK) {
    replan_result_free(res);
    return report(s, "writing outputs");
  }
  replan_result_free(res);
  return 0;
}

int cmd_bench(const std::string& suite_path, const std::string& out, int jobs) {
  replan_suite* suite = nullptr;
  replan_status s = replan_suite_load(suite_path.c_str(), &suite);
  if (s != REPLAN_OK) return report(s, "loading suite");
  if (jobs >= 0) replan_suite_set_jobs(suite, jobs);
  replan_bench* bench = nullptr;
  s = replan_bench_run(suite, &bench);
  replan_suite_free(suite);
  if (s != REPLAN_OK) return report(s, "bench");

  size_t n = 0;
  replan_bench_cell_count(bench, &n);
  std::printf("%-22s %-22s %8s %10s %9s %10s\n", "world", "strategy", "success", "distance", "time", "energy");
  for (size_t i = 0; i < n; ++i) {
    replan_cell c{};
    replan_bench_cell(bench, i, &c);
    std::printf("%-22s %-22s %4d/%-3d %10.2f %9.2f %10.1f\n", c.world, c.strategy, c.successes, c.runs,
                c.mean_distance, c.mean_time, c.mean_energy);
  }
  double med = 0.0;
  replan_bench_median_replan_ms(bench, &med);
  std::printf("median replan: %.1f ms\n", med);
  s = replan_bench_write(bench, out.c_str());
  replan_bench_free(bench);
  return s == REPLAN_OK ? 0 : report(s, "writing outputs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perception-aware local replanner: simulation and benchmarks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(replan_version()));

  std::string config, seed, run_out;
  auto* run = app.add_subcommand("run", "fly one scenario");
  run->add_option("--config", config, "scenario config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "override the config seed")->check(CLI::NonNegativeNumber);
  run->add_option("--out", run_out, "directory for result.json, replans.jsonl, trajectory.csv, timing.json");

  std::string suite, bench_out;
  int jobs = -1;
  auto* bench = app.add_subcommand("bench", "run a benchmark suite");
  bench->add_option("--suite", suite, "suite file")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", bench_out, "output directory")->required();
  bench->add_option("--jobs", jobs, "parallel scenarios (0: all cores, default from the suite)")
      ->check(CLI::NonNegativeNumber);

  double density = 0.0;
  std::uint64_t map_seed = 0;
  std::string map_out;
  auto* gen = app.add_subcommand("gen-map", "write a random world (.scene text, or .vox voxel dump)");
  gen->add_option("--density", density, "obstacles per square metre")->required()->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", map_seed, "generator seed")->required();
  gen->add_option("--out", map_out, "output file")->required();

  CLI11_PARSE(app, argc, argv);

  if (*run) return cmd_run(config, seed, run_out);
  if (*bench) return cmd_bench(suite, bench_out, jobs);
  const replan_status s = replan_gen_map(density, map_seed, map_out.c_str());
  return s == REPLAN_OK ? 0 : report(s, "gen-map");
}
