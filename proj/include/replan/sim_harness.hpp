#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "replan/pgo.hpp"
#include "replan/refine.hpp"
#include "replan/scene.hpp"
#include "replan/topo.hpp"
#include "replan/yaw.hpp"

namespace replan {

struct ScenarioConfig {
  // World: a scene file, or a generated map on top of `scene` (bounds/start/goal).
  std::string scene_file;
  Scene scene;
  bool generate = true;
  MapGenConfig gen;
  std::uint64_t seed = 0;

  double horizon = 7.0;          // m
  double knot_span = 0.15;       // s
  double cruise_fraction = 0.8;  // seed speed as a fraction of v_max
  bool risk_aware = true;
  bool active_yaw = true;

  double sim_step = 0.05;         // s
  double sense_period = 0.1;      // s
  double replan_period = 0.2;     // s
  double lookahead = 3.0;         // s of the current trajectory checked against the belief map
  double estop_distance = 0.5;    // m
  double collision_radius = 0.3;  // m, drone radius used for collisions
  double goal_tolerance = 0.5;    // m
  double timeout = 120.0;         // s simulated
  double stall_time = 2.0;        // s stopped with failing replans -> planner_infeasible
  double goal_clearance = 0.3;    // m (planning map), local goals are moved until this far from obstacles
  double inflation = 0.2;          // m, occupied voxels are dilated by this much for planning
  double unknown_inflation = 0.5;  // m, and this much into Unknown voxels

  SensorModel sensor;
  TopoConfig topo;
  PgoConfig pgo;
  RefineConfig refine;
  YawPlannerConfig yaw;

  ScenarioConfig();
  void validate() const;
  /// Sets one key from the config file format; raises kConfig for unknown keys or bad values.
  void set(const std::string& key, const std::string& value, const std::string& base_dir = ".");
  std::string strategy_label() const;
};

/// Line-oriented `key = value` text, '#' comments. Relative paths resolve against `base_dir`.
ScenarioConfig parse_config(std::istream& is, const std::string& base_dir = ".");
ScenarioConfig load_config(const std::string& path);
/// Applies `key = value` lines onto an existing config.
void apply_config(ScenarioConfig& cfg, std::istream& is, const std::string& base_dir = ".");

/// The world the scenario flies in (loaded or generated), plus its scene description.
Scene scenario_scene(const ScenarioConfig& cfg);

/// Polyline reference with arc-length lookup.
class Reference {
 public:
  explicit Reference(std::vector<Vec3> points);
  double length() const { return arc_.back(); }
  Vec3 at(double s) const;
  /// Arc length of the closest point (first one on ties).
  double project(const Vec3& p) const;
  const Vec3& goal() const { return pts_.back(); }

 private:
  std::vector<Vec3> pts_;
  std::vector<double> arc_;
};

struct PlannerState {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  YawState yaw;
};

struct ReplanDiagnostics {
  int index = 0;
  double t = 0.0;
  std::string trigger;
  bool ok = false;
  std::string error;
  Vec3 start = Vec3::Zero();
  Vec3 local_goal = Vec3::Zero();
  int roadmap_nodes = 0;
  int raw_paths = 0;
  int guides = 0;
  int chosen = -1;
  double pgo_cost = 0.0;
  double stretch = 1.0;
  bool refined = false;
  RefineDiagnostics refine;
  double yaw_path_cost = 0.0;
  double duration = 0.0;
  // Wall-clock timings; kept out of deterministic outputs.
  double wall_ms = 0.0;
  double topo_ms = 0.0, pgo_ms = 0.0, refine_ms = 0.0, yaw_ms = 0.0;
};

struct ReplanOutput {
  UniformBSpline position;
  UniformBSpline yaw;
  ReplanDiagnostics diag;
};

/// Local goal on the reference `horizon` ahead of the projection of p, moved back / sideways
/// until it keeps `goal_clearance` from known obstacles. Raises kInfeasible if none is found.
Vec3 local_goal(const Reference& ref, const Vec3& p, const VoxelMap& belief, const ScenarioConfig& cfg);
/// Straight seed from the state to `goal` ending at rest.
UniformBSpline straight_seed(const PlannerState& s, const Vec3& goal, const ScenarioConfig& cfg);

/// topo -> pgo -> (risk_aware ? refine) -> (active_yaw ? yaw planner : velocity-tracking yaw).
/// Position planning runs on the belief inflated by cfg.inflation; the yaw planner counts
/// Unknown voxels of the raw belief. Errors propagate (kInfeasible etc).
ReplanOutput replan_once(const PlannerState& state, const VoxelMap& belief, const Reference& ref,
                         const ScenarioConfig& cfg, std::uint64_t seed);

enum class FailureCause { kNone, kCollision, kEmergencyStop, kTimeout, kPlannerInfeasible };
const char* to_string(FailureCause c);

struct TrajectorySample {
  double t;
  Vec3 p;
  double yaw;
};

struct ScenarioResult {
  bool success = false;
  FailureCause cause = FailureCause::kNone;
  double flight_distance = 0.0;
  double flight_time = 0.0;
  double energy = 0.0;              // trapezoid rule
  double energy_closed_form = 0.0;  // per-span quadrature
  double straight_distance = 0.0;
  int replan_count = 0;
  int replan_failures = 0;
  int emergency_stops = 0;
  int braking_stops = 0;  // replan failed with a known hazard ahead, so the vehicle braked
  int collisions = 0;
  int refine_fallbacks = 0;
  double min_clearance = 0.0;  // smallest true distance to obstacles along the flight
  Vec3 final_position = Vec3::Zero();
  std::vector<double> replan_ms;
  std::vector<ReplanDiagnostics> replans;
  std::vector<TrajectorySample> trajectory;
};

ScenarioResult run_scenario(const ScenarioConfig& cfg);

// Output writers. Everything but timing.json is deterministic for a fixed config and seed.
void write_result_json(std::ostream& os, const ScenarioResult& r, const ScenarioConfig& cfg);
void write_replans_jsonl(std::ostream& os, const ScenarioResult& r);
void write_trajectory_csv(std::ostream& os, const ScenarioResult& r);
void write_timing_json(std::ostream& os, const ScenarioResult& r);
void write_run_outputs(const std::string& dir, const ScenarioResult& r, const ScenarioConfig& cfg);

struct Strategy {
  std::string label;
  bool risk_aware = true;
  bool active_yaw = true;
};
/// "full", "optimistic", or "<risk|optimistic>+<active|velocity>".
Strategy parse_strategy(const std::string& name);

/// Suite file (key = value): base (config path), densities, seeds (list or a..b), strategies,
/// scenes (scene files flown once each with seed 0), jobs, plus any ScenarioConfig key as an override.
struct SuiteConfig {
  ScenarioConfig base;
  std::vector<double> densities;
  std::vector<std::uint64_t> seeds;
  std::vector<Strategy> strategies;
  std::vector<std::string> scenes;
  int jobs = 0;  // 0: hardware concurrency
};
SuiteConfig load_suite(const std::string& path);
SuiteConfig parse_suite(std::istream& is, const std::string& base_dir = ".");

struct BenchRun {
  std::string world;  // "density=<d>" or the scene file name
  double density = 0.0;
  std::uint64_t seed = 0;
  std::string strategy;
  ScenarioResult result;
  std::string error;  // set if the run could not even start
};

struct BenchCell {
  std::string world;
  std::string strategy;
  int runs = 0;
  int successes = 0;
  // Means over successful runs (NaN when none succeeded).
  double mean_distance = 0.0;
  double mean_time = 0.0;
  double mean_energy = 0.0;
  double mean_replans = 0.0;
};

struct BenchResult {
  std::vector<BenchRun> runs;
  std::vector<BenchCell> cells;
  double median_replan_ms = 0.0;
};

BenchResult run_benchmark(const SuiteConfig& suite);
std::vector<BenchCell> aggregate(const std::vector<BenchRun>& runs, const std::vector<Strategy>& order);
/// runs.csv, summary.csv, result.json (deterministic) and timing.json.
void write_bench_outputs(const std::string& dir, const BenchResult& r);

double median(std::vector<double> v);

}  // namespace replan
