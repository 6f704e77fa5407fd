#include <doctest.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "replan/sim_harness.hpp"

using namespace replan;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{};
}

std::string what_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

Scene sample_scene() {
  Scene s;
  s.lo = Vec3(-1, -1, 0);
  s.hi = Vec3(9, 7, 2.5);
  s.resolution = 0.2;
  s.start = Vec3(0, 3, 1);
  s.goal = Vec3(8, 3.5, 1.2);
  s.waypoints = {Vec3(4, 5, 1)};
  s.obstacles = {Obstacle::box(Vec3(2, 1, 0), Vec3(3, 2.5, 2.5)), Obstacle::cylinder(5.5, 3, 0.45, 0, 2)};
  return s;
}

ScenarioConfig empty_world(const std::string& strategy) {
  ScenarioConfig cfg;
  cfg.set("density", "0");
  cfg.set("strategy", strategy);
  return cfg;
}

BenchRun fake_run(const std::string& world, const std::string& strategy, bool ok, double dist, double time,
                  double energy, int replans) {
  BenchRun r;
  r.world = world;
  r.strategy = strategy;
  r.result.success = ok;
  r.result.flight_distance = dist;
  r.result.flight_time = time;
  r.result.energy = energy;
  r.result.replan_count = replans;
  return r;
}

}  // namespace

TEST_CASE("scene text round-trips exactly") {
  const Scene s = sample_scene();
  std::stringstream ss;
  write_scene(ss, s);
  const Scene r = parse_scene(ss);
  CHECK(r.lo == s.lo);
  CHECK(r.hi == s.hi);
  CHECK(r.resolution == s.resolution);
  CHECK(r.start == s.start);
  CHECK(r.goal == s.goal);
  REQUIRE(r.waypoints.size() == 1);
  CHECK(r.waypoints[0] == s.waypoints[0]);
  REQUIRE(r.obstacles.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r.obstacles[i].kind == s.obstacles[i].kind);
    CHECK(r.obstacles[i].lo == s.obstacles[i].lo);
    CHECK(r.obstacles[i].hi == s.obstacles[i].hi);
    CHECK(r.obstacles[i].radius == s.obstacles[i].radius);
  }
}

TEST_CASE("scene parse errors carry the line") {
  auto parse = [](const std::string& text) {
    std::istringstream is(text);
    return parse_scene(is);
  };
  CHECK(code_of([&] { parse("start 0 0 1\nfrobnicate 1 2\n"); }) == ErrorCode::kParse);
  CHECK(what_of([&] { parse("start 0 0 1\nfrobnicate 1 2\n"); }).find("line 2") != std::string::npos);
  CHECK(code_of([&] { parse("box 1 2 3\n"); }) == ErrorCode::kParse);
  CHECK(code_of([&] { parse("resolution abc\n"); }) == ErrorCode::kParse);
  CHECK(code_of([&] { parse("cylinder 1 1 -0.5 0 2\n"); }) != ErrorCode{});
  // comments and blank lines are fine
  CHECK_NOTHROW(parse("# nothing\n\n  start 0 0 1 # trailing\n"));
}

TEST_CASE("rasterize marks voxel centers inside obstacles") {
  const Scene s = sample_scene();
  const VoxelMap m = rasterize(s);
  for (std::size_t n = 0; n < m.size(); ++n) {
    const Vec3 c = m.center(m.unravel(n));
    bool inside = false;
    for (const Obstacle& o : s.obstacles) inside = inside || o.contains(c);
    REQUIRE((m.state(n) == VoxelState::kOccupied) == inside);
  }
}

TEST_CASE("vox dump round-trips and rejects garbage") {
  VoxelMap m = rasterize(sample_scene());
  m.set_state(Idx3(0, 0, 0), VoxelState::kUnknown);
  std::stringstream ss;
  write_vox(ss, m);
  const VoxelMap r = read_vox(ss);
  CHECK(r.same_geometry(m));
  CHECK(r.states() == m.states());

  std::istringstream bad("XXXX0000000000000000000000000000");
  CHECK(code_of([&] { read_vox(bad); }) == ErrorCode::kParse);
  std::string text = ss.str();
  text.resize(text.size() - 5);
  std::istringstream cut(text);
  CHECK(code_of([&] { read_vox(cut); }) == ErrorCode::kParse);
}

TEST_CASE("generator: count, determinism, clear start and goal") {
  MapGenConfig g;
  g.density = 0.4;
  CHECK(g.count() == 40);
  const Scene a = generate_scene(g, 7), b = generate_scene(g, 7), c = generate_scene(g, 8);
  REQUIRE(a.obstacles.size() == 40);
  bool differs = false;
  for (std::size_t i = 0; i < a.obstacles.size(); ++i) {
    CHECK(a.obstacles[i].lo == b.obstacles[i].lo);
    CHECK(a.obstacles[i].hi == b.obstacles[i].hi);
    CHECK(a.obstacles[i].radius == b.obstacles[i].radius);
    differs = differs || a.obstacles[i].lo != c.obstacles[i].lo;
  }
  CHECK(differs);
  for (const Obstacle& o : a.obstacles) {
    CHECK(o.footprint_distance(a.start.x(), a.start.y()) >= g.clear_radius);
    CHECK(o.footprint_distance(a.goal.x(), a.goal.y()) >= g.clear_radius);
    CHECK(o.lo.z() == a.lo.z());
    CHECK(o.hi.z() == a.hi.z());
  }
  CHECK(generate_map(g, 7).states() == rasterize(a).states());

  g.density = 0.0;
  const VoxelMap empty = generate_map(g, 3);
  for (std::size_t n = 0; n < empty.size(); ++n) REQUIRE(empty.state(n) == VoxelState::kFree);
}

TEST_CASE("generator gives up on impossible placements") {
  MapGenConfig g;
  g.area_x0 = 0;
  g.area_x1 = 1;
  g.area_y0 = 4.5;
  g.area_y1 = 5.5;
  g.density = 5;
  g.max_retries = 50;
  Scene base;
  base.start = Vec3(0.5, 5, 1.5);
  CHECK(code_of([&] { generate_scene(g, 0, base); }) == ErrorCode::kGeneration);
}

TEST_CASE("config keys, strategies and errors") {
  std::istringstream is("# comment\nhorizon = 5\nstrategy = optimistic+active\nv_max = 2.5\nseeds_typo = 3\n");
  CHECK(code_of([&] { parse_config(is); }) == ErrorCode::kConfig);
  std::istringstream is2("horizon = 5\nstrategy = optimistic+active\nv_max = 2.5\n");
  const ScenarioConfig c = parse_config(is2);
  CHECK(c.horizon == 5);
  CHECK(!c.risk_aware);
  CHECK(c.active_yaw);
  CHECK(c.pgo.v_max == 2.5);
  CHECK(c.strategy_label() == "optimistic+active");

  std::istringstream bad_line("horizon = 5\nhorizon 6\n");
  CHECK(what_of([&] { parse_config(bad_line); }).find("line 2") != std::string::npos);
  std::istringstream negative("horizon = -1\n");
  CHECK(code_of([&] { parse_config(negative); }) == ErrorCode::kConfig);
  std::istringstream nan_number("v_max = fast\n");
  CHECK(code_of([&] { parse_config(nan_number); }) == ErrorCode::kConfig);

  CHECK(parse_strategy("full").risk_aware);
  CHECK(parse_strategy("full").active_yaw);
  CHECK(!parse_strategy("baseline").risk_aware);
  CHECK(parse_strategy("risk+velocity").label == "risk+velocity");
  CHECK(code_of([] { parse_strategy("reckless"); }) == ErrorCode::kConfig);
}

TEST_CASE("suite parsing: seed ranges and overrides") {
  std::istringstream is("densities = 0.2, 0.4\nseeds = 3..5\nstrategies = full optimistic\nhorizon = 4\n");
  const SuiteConfig s = parse_suite(is);
  CHECK(s.densities == std::vector<double>{0.2, 0.4});
  CHECK(s.seeds == std::vector<std::uint64_t>{3, 4, 5});
  REQUIRE(s.strategies.size() == 2);
  CHECK(s.strategies[0].label == "risk+active");
  CHECK(s.strategies[1].label == "optimistic+velocity");
  CHECK(s.base.horizon == 4);
  std::istringstream none("seeds = 1\n");
  CHECK(code_of([&] { parse_suite(none); }) == ErrorCode::kConfig);
  std::istringstream backwards("densities = 0.1\nseeds = 5..3\n");
  CHECK(code_of([&] { parse_suite(backwards); }) == ErrorCode::kConfig);
}

TEST_CASE("reference polyline lookup") {
  const Reference r({Vec3(0, 0, 1), Vec3(3, 0, 1), Vec3(3, 4, 1)});
  CHECK(r.length() == doctest::Approx(7));
  CHECK((r.at(5) - Vec3(3, 2, 1)).norm() < 1e-12);
  CHECK((r.at(-1) - Vec3(0, 0, 1)).norm() < 1e-12);
  CHECK((r.at(99) - Vec3(3, 4, 1)).norm() < 1e-12);
  CHECK(r.project(Vec3(1, 0.5, 1)) == doctest::Approx(1));
  CHECK(r.project(Vec3(4, 3, 1)) == doctest::Approx(6));
}

TEST_CASE("straight seed keeps the start state and stops at the goal") {
  ScenarioConfig cfg;
  PlannerState st;
  st.t = 2.0;
  st.p = Vec3(0, 0, 1);
  st.v = Vec3(1.2, 0.3, 0);
  st.a = Vec3(0.2, 0, 0);
  const Vec3 goal(6, 1, 1);
  const UniformBSpline s = straight_seed(st, goal, cfg);
  CHECK(s.t_begin() == doctest::Approx(2.0));
  CHECK((s.evaluate(s.t_begin()) - st.p).norm() < 1e-9);
  CHECK((s.evaluate(s.t_begin(), 1) - st.v).norm() < 1e-9);
  CHECK((s.evaluate(s.t_begin(), 2) - st.a).norm() < 1e-9);
  CHECK((s.evaluate(s.t_end()) - goal).norm() < 1e-9);
  CHECK(s.evaluate(s.t_end(), 1).norm() < 1e-9);
}

TEST_CASE("replan_once on a known empty map flies nearly straight") {
  ScenarioConfig cfg;
  cfg.set("strategy", "optimistic");
  VoxelMap belief(Vec3(-2, -2, 0), 0.1, Idx3(140, 140, 30));
  belief.fill(VoxelState::kFree);
  belief.compute_esdf();
  const Reference ref({Vec3(-1, 5, 1.5), Vec3(11, 5, 1.5)});
  PlannerState st;
  st.p = Vec3(-1, 5, 1.5);
  const ReplanOutput out = replan_once(st, belief, ref, cfg, 11);
  CHECK(out.diag.ok);
  const Vec3 lg = out.diag.local_goal;
  CHECK((lg - Vec3(6, 5, 1.5)).norm() < 1e-9);
  double dev = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double t = out.position.t_begin() + out.position.duration() * i / 200;
    const Vec3 p = out.position.evaluate(t);
    dev = std::max(dev, std::hypot(p.y() - 5, p.z() - 1.5));
  }
  CHECK(dev < 0.02);
  CHECK((out.position.evaluate(out.position.t_end()) - lg).norm() < 1e-6);

  // Same control points snapped onto the reference line: the analytic straight spline with the
  // same timing. Projection can only lower the cost, and the output must be within 1% of it.
  Eigen::MatrixXd snapped = out.position.control_points();
  snapped.col(1).setConstant(5.0);
  snapped.col(2).setConstant(1.5);
  const double c_line = phase2_cost_grad(snapped, 3, out.position.knot_span(), belief, cfg.pgo, nullptr, nullptr);
  const double c_out = phase2_cost_grad(out.position.control_points(), 3, out.position.knot_span(), belief, cfg.pgo,
                                        nullptr, nullptr);
  CHECK(c_line <= c_out + 1e-12);
  CHECK(c_out <= 1.01 * c_line + 1e-9);

  const ReplanOutput again = replan_once(st, belief, ref, cfg, 11);
  CHECK(again.position.control_points() == out.position.control_points());
  CHECK(again.yaw.control_points() == out.yaw.control_points());
}

TEST_CASE("risk_aware = false is exactly the pipeline without refinement") {
  ScenarioConfig cfg;
  cfg.set("strategy", "optimistic+velocity");
  Scene sc;
  sc.obstacles = {Obstacle::box(Vec3(3, 4.3, 0), Vec3(4, 5.5, 3))};
  VoxelMap belief = rasterize(sc);
  belief.compute_esdf();
  const Reference ref(sc.reference());
  PlannerState st;
  st.p = sc.start;
  st.v = Vec3(1, 0, 0);
  const ReplanOutput out = replan_once(st, belief, ref, cfg, 5);

  VoxelMap plan = inflated(belief, cfg.inflation, cfg.unknown_inflation);
  plan.compute_esdf();
  const Vec3 lg = local_goal(ref, st.p, plan, cfg);
  TopoConfig topo = cfg.topo;
  topo.seed = 5;
  const TopoResult paths = find_guide_paths(plan, st.p, lg, topo);
  const PgoOutput pgo = pgo_parallel(straight_seed(st, lg, cfg), paths.selected, plan, cfg.pgo);
  CHECK(out.position.control_points() == pgo.best.control_points());
  CHECK(out.position.knot_span() == pgo.best.knot_span());
  CHECK(!out.diag.refined);
}

TEST_CASE("empty world: success, near-straight distance, exact energy bookkeeping") {
  const ScenarioConfig cfg = empty_world("optimistic");
  const ScenarioResult r = run_scenario(cfg);
  CHECK(r.success);
  CHECK(r.cause == FailureCause::kNone);
  CHECK(r.collisions == 0);
  CHECK(r.flight_distance >= r.straight_distance - cfg.goal_tolerance);
  CHECK(std::abs(r.flight_distance - r.straight_distance) <= 0.05 * r.straight_distance);
  CHECK(r.energy >= 0);
  CHECK(std::abs(r.energy - r.energy_closed_form) <= 1e-6 * std::max(1.0, r.energy_closed_form));
  CHECK(r.replan_count == static_cast<int>(r.replan_ms.size()));
  CHECK(r.replan_count == static_cast<int>(r.replans.size()));

  const ScenarioResult again = run_scenario(cfg);
  std::ostringstream a, b;
  write_result_json(a, r, cfg);
  write_result_json(b, again, cfg);
  CHECK(a.str() == b.str());
  std::ostringstream ta, tb;
  write_trajectory_csv(ta, r);
  write_trajectory_csv(tb, again);
  CHECK(ta.str() == tb.str());
}

TEST_CASE("a wall across the whole world cannot be passed") {
  ScenarioConfig cfg;
  cfg.set("strategy", "optimistic");
  cfg.generate = false;
  cfg.scene_file = "wall";
  cfg.scene.obstacles = {Obstacle::box(Vec3(4, -2, 0), Vec3(4.6, 12, 3))};
  const ScenarioResult r = run_scenario(cfg);
  CHECK(!r.success);
  const bool expected = r.cause == FailureCause::kPlannerInfeasible || r.cause == FailureCause::kEmergencyStop;
  CHECK(expected);
  CHECK(r.collisions == 0);
  CHECK(r.final_position.x() < 4.0 - cfg.collision_radius);
}

TEST_CASE("aggregate means match a manual mean over successful runs") {
  std::vector<BenchRun> runs = {
      fake_run("density=0.4", "risk+active", true, 12, 6, 100, 30),
      fake_run("density=0.4", "risk+active", false, 3, 2, 999, 10),
      fake_run("density=0.4", "risk+active", true, 14, 8, 300, 40),
      fake_run("density=0.4", "optimistic+velocity", false, 5, 3, 50, 12),
  };
  const std::vector<Strategy> order = {parse_strategy("full"), parse_strategy("optimistic")};
  const std::vector<BenchCell> cells = aggregate(runs, order);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].strategy == "risk+active");
  CHECK(cells[0].runs == 3);
  CHECK(cells[0].successes == 2);
  CHECK(cells[0].mean_distance == doctest::Approx((12.0 + 14.0) / 2));
  CHECK(cells[0].mean_time == doctest::Approx(7.0));
  CHECK(cells[0].mean_energy == doctest::Approx(200.0));
  CHECK(cells[0].mean_replans == doctest::Approx(35.0));
  CHECK(cells[1].strategy == "optimistic+velocity");
  CHECK(cells[1].successes == 0);
  CHECK(std::isnan(cells[1].mean_distance));
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}
