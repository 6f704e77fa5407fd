#include "replan/sim_harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>

namespace replan {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Vec3 at3(const UniformBSpline& s, double t, int order = 0) { return s.evaluate(s.clamp_time(t), order); }

// Derivatives vanish once the curve has ended: the vehicle hovers at the last point.
Vec3 deriv3(const UniformBSpline& s, double t, int order) {
  if (t >= s.t_end()) return Vec3::Zero();
  return at3(s, t, order);
}

double scalar(const UniformBSpline& s, double t, int order = 0) {
  if (order > 0 && t >= s.t_end()) return 0.0;
  return s.evaluate(s.clamp_time(t), order)[0];
}

UniformBSpline hover_spline(const Vec3& p, double t0, double dt) {
  Eigen::MatrixXd q(4, 3);
  for (int i = 0; i < 4; ++i) q.row(i) = p.transpose();
  return UniformBSpline(q, 3, dt, t0);
}

UniformBSpline constant_yaw(double phi, double t0, double dt) {
  return UniformBSpline(Eigen::MatrixXd::Constant(4, 1, phi), 3, dt, t0);
}

UniformBSpline velocity_yaw_spline(const UniformBSpline& traj, const YawState& current, const YawPlannerConfig& cfg,
                                   std::vector<double>* xi_out) {
  const double a = traj.t_begin();
  std::vector<double> times = {a}, xi = {current.phi};
  double ref = current.phi;
  for (int i = 1; i <= cfg.layers; ++i) {
    const double t = a + traj.duration() * i / cfg.layers;
    ref = velocity_tracking_yaw(traj, t, ref);
    times.push_back(t);
    xi.push_back(xi.back() + wrap_pi(ref - xi.back()));
  }
  if (xi_out) *xi_out = xi;
  return optimize_yaw_bspline(xi, times, cfg.opt, current);
}

// Straight-line stop at a_max from the current state, as a spline so the loop can keep flying it.
UniformBSpline braking_spline(const Vec3& p, const Vec3& v, const Vec3& a, double t0, double a_max, double dt) {
  const double speed = v.norm();
  if (speed < 1e-6) return hover_spline(p, t0, dt);
  const Vec3 dir = v / speed;
  const double t_brake = speed / a_max;
  const int k = std::max(3, static_cast<int>(std::ceil(t_brake / dt)));
  const double h = t_brake / k;
  std::vector<Eigen::VectorXd> pts;
  for (int i = 0; i <= k; ++i) {
    const double s = i * h;
    pts.push_back(p + dir * (speed * s - 0.5 * a_max * s * s));
  }
  BoundaryDerivatives bd{v, Vec3::Zero(), Eigen::VectorXd(a), Eigen::VectorXd(Vec3::Zero())};
  return fit_through_points(pts, bd, h, 3, t0).spline;
}

}  // namespace

const char* to_string(FailureCause c) {
  switch (c) {
    case FailureCause::kNone: return "none";
    case FailureCause::kCollision: return "collision";
    case FailureCause::kEmergencyStop: return "emergency_stop_deadlock";
    case FailureCause::kTimeout: return "timeout";
    case FailureCause::kPlannerInfeasible: return "planner_infeasible";
  }
  return "unknown";
}

Reference::Reference(std::vector<Vec3> points) {
  for (const Vec3& p : points)
    if (pts_.empty() || (p - pts_.back()).norm() > 1e-9) pts_.push_back(p);
  if (pts_.size() < 2) raise(ErrorCode::kInvalidArgument, "reference needs two distinct points");
  arc_.push_back(0.0);
  for (std::size_t i = 1; i < pts_.size(); ++i) arc_.push_back(arc_.back() + (pts_[i] - pts_[i - 1]).norm());
}

Vec3 Reference::at(double s) const {
  s = std::clamp(s, 0.0, length());
  std::size_t i = 1;
  while (i + 1 < pts_.size() && arc_[i] < s) ++i;
  const double f = (s - arc_[i - 1]) / (arc_[i] - arc_[i - 1]);
  return pts_[i - 1] + (pts_[i] - pts_[i - 1]) * f;
}

double Reference::project(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity(), s_best = 0.0;
  for (std::size_t i = 1; i < pts_.size(); ++i) {
    const Vec3 d = pts_[i] - pts_[i - 1];
    const double f = std::clamp((p - pts_[i - 1]).dot(d) / d.squaredNorm(), 0.0, 1.0);
    const double dist = (pts_[i - 1] + d * f - p).squaredNorm();
    if (dist < best) {
      best = dist;
      s_best = arc_[i - 1] + f * (arc_[i] - arc_[i - 1]);
    }
  }
  return s_best;
}

Vec3 local_goal(const Reference& ref, const Vec3& p, const VoxelMap& belief, const ScenarioConfig& cfg) {
  const double s_p = ref.project(p);
  const double s_h = std::min(ref.length(), s_p + cfg.horizon);
  auto ok = [&](const Vec3& c) { return belief.inside(c) && belief.distance(c) >= cfg.goal_clearance; };
  for (double back = 0.0; s_h - back >= s_p - 1e-9; back += 0.25) {
    const double s = s_h - back;
    const Vec3 base = ref.at(s);
    Vec3 dir = ref.at(std::min(ref.length(), s + 0.05)) - ref.at(std::max(0.0, s - 0.05));
    Vec3 side(-dir.y(), dir.x(), 0.0);
    side = side.norm() > 1e-9 ? side.normalized() : Vec3::UnitY();
    for (int k = 0; k <= 14; ++k) {
      const double lat = (k % 2 == 1 ? 1.0 : -1.0) * 0.3 * ((k + 1) / 2);
      const Vec3 c = base + side * lat;
      const bool final_goal = back == 0.0 && k == 0 && s_h >= ref.length();
      if (ok(c) && ((c - p).norm() >= 1.0 || final_goal)) return c;
    }
  }
  raise(ErrorCode::kInfeasible, "no reachable local goal on the reference");
}

UniformBSpline straight_seed(const PlannerState& s, const Vec3& goal, const ScenarioConfig& cfg) {
  const double len = (goal - s.p).norm();
  if (len < 1e-3) raise(ErrorCode::kInfeasible, "local goal coincides with the current position");
  const Vec3 dir = (goal - s.p) / len;
  // Trapezoidal speed profile along the segment: accelerate to cruise, brake to rest at the goal.
  const double vc = cfg.cruise_fraction * cfg.pgo.v_max;
  const double acc = cfg.cruise_fraction * cfg.pgo.a_max;
  const double u0 = std::clamp(s.v.dot(dir), 0.0, vc);
  double peak = vc;
  if ((vc * vc - u0 * u0) / (2 * acc) + vc * vc / (2 * acc) > len) peak = std::sqrt(acc * len + 0.5 * u0 * u0);
  double dec = acc;
  if (u0 * u0 / (2 * acc) > len) {
    peak = u0;
    dec = u0 * u0 / (2 * len);
  }
  const double t1 = (peak - u0) / acc;
  const double d1 = (peak * peak - u0 * u0) / (2 * acc);
  const double d3 = peak * peak / (2 * dec);
  const double t2 = std::max(0.0, len - d1 - d3) / peak;
  const double t3 = peak / dec;
  const double total = t1 + t2 + t3;
  auto dist = [&](double t) {
    if (t <= t1) return u0 * t + 0.5 * acc * t * t;
    if (t <= t1 + t2) return d1 + peak * (t - t1);
    const double r = std::min(t - t1 - t2, t3);
    return std::min(len, d1 + peak * t2 + peak * r - 0.5 * dec * r * r);
  };
  const int k = std::max(3, static_cast<int>(std::ceil(total / cfg.knot_span)));
  const double dt = total / k;
  std::vector<Eigen::VectorXd> pts;
  for (int i = 0; i <= k; ++i) pts.push_back(s.p + dir * dist(i * dt));
  pts.back() = goal;
  BoundaryDerivatives bd{s.v, Vec3::Zero(), Eigen::VectorXd(s.a), Eigen::VectorXd(Vec3::Zero())};
  return fit_through_points(pts, bd, dt, 3, s.t).spline;
}

ReplanOutput replan_once(const PlannerState& state, const VoxelMap& belief, const Reference& ref,
                         const ScenarioConfig& cfg, std::uint64_t seed) {
  const auto t_all = Clock::now();
  ReplanOutput out;
  ReplanDiagnostics& d = out.diag;
  d.t = state.t;
  d.start = state.p;
  VoxelMap plan_map = inflated(belief, cfg.inflation, cfg.unknown_inflation);
  plan_map.compute_esdf();

  d.local_goal = local_goal(ref, state.p, plan_map, cfg);
  const UniformBSpline seed_spline = straight_seed(state, d.local_goal, cfg);

  auto t0 = Clock::now();
  TopoConfig topo = cfg.topo;
  topo.seed = seed;
  const TopoResult paths = find_guide_paths(plan_map, state.p, d.local_goal, topo);
  d.topo_ms = ms_since(t0);
  d.roadmap_nodes = static_cast<int>(paths.roadmap.nodes.size());
  d.raw_paths = static_cast<int>(paths.raw.size());
  d.guides = static_cast<int>(paths.selected.size());
  if (paths.selected.empty()) raise(ErrorCode::kInfeasible, "no guide path to the local goal");

  t0 = Clock::now();
  // A vehicle that stopped close to an obstacle must still be able to leave: relax the acceptance
  // clearance down to its current one, but never below what the true collision radius allows.
  PgoConfig pgo_cfg = cfg.pgo;
  const double floor = std::max(0.0, cfg.collision_radius - cfg.inflation);
  pgo_cfg.feasible_clearance = std::min(pgo_cfg.feasible_clearance, std::max(floor, plan_map.distance(state.p) - 0.02));
  const PgoOutput pgo = pgo_parallel(seed_spline, paths.selected, plan_map, pgo_cfg);
  d.pgo_ms = ms_since(t0);
  d.chosen = pgo.chosen;
  d.pgo_cost = pgo.guides[pgo.chosen].cost;
  d.stretch = pgo.guides[pgo.chosen].stretch;
  out.position = pgo.best;

  if (cfg.risk_aware) {
    t0 = Clock::now();
    RefineResult r = refine_trajectory(pgo.best, plan_map, pgo_cfg, cfg.refine);
    d.refine_ms = ms_since(t0);
    d.refined = true;
    d.refine = r.diag;
    out.position = std::move(r.spline);
  }
  d.duration = out.position.duration();

  t0 = Clock::now();
  if (cfg.active_yaw) {
    const YawPlan plan = plan_yaw(out.position, out.position.t_begin(), belief, cfg.sensor, state.yaw, cfg.yaw);
    d.yaw_path_cost = plan.path.cost;
    out.yaw = plan.spline;
  } else {
    out.yaw = velocity_yaw_spline(out.position, state.yaw, cfg.yaw, nullptr);
  }
  d.yaw_ms = ms_since(t0);
  d.ok = true;
  d.wall_ms = ms_since(t_all);
  return out;
}

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const Scene scene = scenario_scene(cfg);
  VoxelMap world = rasterize(scene);
  world.compute_esdf();
  VoxelMap belief(world.origin(), world.resolution(), world.dims(), world.esdf_clamp());
  belief.compute_esdf();
  const Reference ref(scene.reference());
  const Vec3 goal = ref.goal();

  ScenarioResult res;
  res.straight_distance = (scene.goal - scene.start).norm();
  res.min_clearance = std::numeric_limits<double>::infinity();

  const Vec3 first_dir = ref.at(0.1) - ref.at(0.0);
  UniformBSpline traj = hover_spline(scene.start, 0.0, cfg.knot_span);
  UniformBSpline yaw = constant_yaw(std::atan2(first_dir.y(), first_dir.x()), 0.0, cfg.yaw.opt.knot_span);
  double seg_start = 0.0;
  auto close_segment = [&](double t_end) {
    const double b = std::min(t_end, traj.t_end());
    if (b > seg_start) {
      res.energy += jerk_energy_trapezoid(traj, seg_start, b);
      res.energy_closed_form += jerk_energy(traj, seg_start, b);
    }
  };

  double t = 0.0;
  double last_sense = -1e9, last_replan = -1e9, last_success = 0.0;
  int replan_index = 0;
  bool braking = false;
  const int substeps = 5;

  auto true_clearance = [&](const Vec3& p) { return world.inside(p) ? world.distance(p) : -1.0; };
  auto record = [&](const Vec3& p, double y) { res.trajectory.push_back({t, p, wrap_pi(y)}); };

  while (true) {
    const Vec3 p = at3(traj, t);
    const double phi = scalar(yaw, t);
    record(p, phi);
    const double clear = true_clearance(p);
    res.min_clearance = std::min(res.min_clearance, clear);
    if (clear < cfg.collision_radius) {
      res.cause = FailureCause::kCollision;
      res.collisions = 1;
      break;
    }
    if ((p - goal).norm() <= cfg.goal_tolerance) {
      res.success = true;
      break;
    }
    if (t >= cfg.timeout) {
      res.cause = FailureCause::kTimeout;
      break;
    }

    if (t - last_sense >= cfg.sense_period - 1e-9) {
      last_sense = t;
      if (sense(belief, world, Pose{p, phi}, cfg.sensor) > 0) belief.compute_esdf();
    }

    std::string trigger;
    if (t - last_replan >= cfg.replan_period - 1e-9)
      trigger = replan_index == 0 ? "initial" : "period";

    // Known obstacles on the path ahead: replan, or stop when already too close.
    std::optional<Vec3> hazard;
    if (t < traj.t_end()) {
      const double t_stop = std::min(traj.t_end(), t + cfg.lookahead);
      const double step = world.resolution() / (2.0 * cfg.pgo.v_max);
      for (double s = t; s <= t_stop + 1e-12; s += step) {
        const Vec3 q = at3(traj, s);
        if (!belief.inside(q) || belief.distance(q) < cfg.collision_radius) {
          hazard = q;
          break;
        }
      }
    }
    if (hazard && !braking && (*hazard - p).norm() < cfg.estop_distance) {
      // Brake at a_max along the current velocity until stopped.
      res.emergency_stops = 1;
      const Vec3 v = deriv3(traj, t, 1);
      const double speed = v.norm();
      const Vec3 dir = speed > 1e-9 ? Vec3(v / speed) : Vec3::Zero();
      const double t_brake = speed / cfg.pgo.a_max;
      close_segment(t);
      Vec3 prev = p;
      bool hit = false;
      double s = 0.0;
      for (double tau = cfg.sim_step;; tau += cfg.sim_step) {
        s = std::min(tau, t_brake);
        const Vec3 q = p + dir * (speed * s - 0.5 * cfg.pgo.a_max * s * s);
        res.flight_distance += (q - prev).norm();
        prev = q;
        res.trajectory.push_back({t + s, q, wrap_pi(phi)});
        const double c = true_clearance(q);
        res.min_clearance = std::min(res.min_clearance, c);
        if (c < cfg.collision_radius) {
          hit = true;
          break;
        }
        if (s >= t_brake) break;
      }
      t += s;
      res.cause = hit ? FailureCause::kCollision : FailureCause::kEmergencyStop;
      res.collisions = hit ? 1 : 0;
      res.final_position = prev;
      res.flight_time = t;
      return res;
    }
    if (hazard && trigger.empty()) trigger = "collision";

    if (!trigger.empty()) {
      last_replan = t;
      PlannerState st;
      st.t = t;
      st.p = p;
      st.v = deriv3(traj, t, 1);
      st.a = deriv3(traj, t, 2);
      st.yaw = YawState{phi, scalar(yaw, t, 1), scalar(yaw, t, 2)};
      const std::uint64_t seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(replan_index);
      ReplanDiagnostics diag;
      const auto t0 = Clock::now();
      try {
        ReplanOutput out = replan_once(st, belief, ref, cfg, seed);
        close_segment(t);
        seg_start = t;
        traj = std::move(out.position);
        yaw = std::move(out.yaw);
        diag = out.diag;
        last_success = t;
        braking = false;
        if (diag.refined && diag.refine.fallback_stretch) ++res.refine_fallbacks;
      } catch (const Error& e) {
        diag.t = t;
        diag.start = p;
        diag.ok = false;
        diag.error = e.what();
        ++res.replan_failures;
        // No way around a known obstacle ahead: start stopping now instead of flying on.
        if (hazard && !braking) {
          close_segment(t);
          seg_start = t;
          traj = braking_spline(p, st.v, st.a, t, cfg.pgo.a_max, cfg.knot_span);
          yaw = constant_yaw(phi, t, cfg.yaw.opt.knot_span);
          braking = true;
          ++res.braking_stops;
        }
      }
      diag.wall_ms = ms_since(t0);
      diag.index = replan_index++;
      diag.trigger = trigger;
      res.replan_ms.push_back(diag.wall_ms);
      res.replans.push_back(diag);
      ++res.replan_count;

      if (!diag.ok && t >= traj.t_end() && t - last_success >= cfg.stall_time) {
        res.cause = FailureCause::kPlannerInfeasible;
        break;
      }
    }

    // Advance along the commanded spline.
    Vec3 prev = at3(traj, t);
    for (int k = 1; k <= substeps; ++k) {
      const Vec3 q = at3(traj, t + cfg.sim_step * k / substeps);
      res.flight_distance += (q - prev).norm();
      prev = q;
    }
    t += cfg.sim_step;
  }
  close_segment(t);
  res.final_position = res.trajectory.back().p;
  res.flight_time = t;
  return res;
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

// NaN/inf are not valid JSON.
nlohmann::json num_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

void write_result_json(std::ostream& os, const ScenarioResult& r, const ScenarioConfig& cfg) {
  nlohmann::ordered_json j;
  j["strategy"] = cfg.strategy_label();
  j["seed"] = cfg.seed;
  j["world"] = cfg.generate ? "generated" : cfg.scene_file;
  j["density"] = cfg.generate ? num_json(cfg.gen.density) : nlohmann::json(nullptr);
  j["success"] = r.success;
  j["failure_cause"] = to_string(r.cause);
  j["flight_distance"] = r.flight_distance;
  j["straight_distance"] = r.straight_distance;
  j["flight_time"] = r.flight_time;
  j["energy"] = r.energy;
  j["energy_closed_form"] = r.energy_closed_form;
  j["replan_count"] = r.replan_count;
  j["replan_failures"] = r.replan_failures;
  j["emergency_stops"] = r.emergency_stops;
  j["braking_stops"] = r.braking_stops;
  j["collisions"] = r.collisions;
  j["refine_fallbacks"] = r.refine_fallbacks;
  j["min_clearance"] = num_json(r.min_clearance);
  j["final_position"] = vec_json(r.final_position);
  os << j.dump(2) << "\n";
}

void write_replans_jsonl(std::ostream& os, const ScenarioResult& r) {
  for (const ReplanDiagnostics& d : r.replans) {
    nlohmann::ordered_json j;
    j["index"] = d.index;
    j["t"] = d.t;
    j["trigger"] = d.trigger;
    j["ok"] = d.ok;
    if (!d.ok) j["error"] = d.error;
    j["start"] = vec_json(d.start);
    if (d.ok) {
      j["local_goal"] = vec_json(d.local_goal);
      j["roadmap_nodes"] = d.roadmap_nodes;
      j["raw_paths"] = d.raw_paths;
      j["guides"] = d.guides;
      j["chosen"] = d.chosen;
      j["pgo_cost"] = d.pgo_cost;
      j["stretch"] = d.stretch;
      j["duration"] = d.duration;
      if (d.refined) {
        const RefineDiagnostics& f = d.refine;
        j["refine"] = {{"has_frontier", f.has_frontier},     {"already_safe", f.already_safe},
                       {"optimized", f.optimized},           {"success", f.success},
                       {"fallback_stretch", f.fallback_stretch}, {"hard_failure", f.hard_failure},
                       {"iterations", f.iterations},         {"iteration_cap", f.iteration_cap},
                       {"v_s", f.v_s},                       {"d_sf", f.d_sf},
                       {"slack", num_json(f.slack)}};
      }
      j["yaw_path_cost"] = d.yaw_path_cost;
    }
    os << j.dump() << "\n";
  }
}

void write_trajectory_csv(std::ostream& os, const ScenarioResult& r) {
  os << "t,x,y,z,yaw\n";
  char buf[160];
  for (const TrajectorySample& s : r.trajectory) {
    std::snprintf(buf, sizeof buf, "%.4f,%.6f,%.6f,%.6f,%.6f\n", s.t, s.p.x(), s.p.y(), s.p.z(), s.yaw);
    os << buf;
  }
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_timing_json(std::ostream& os, const ScenarioResult& r) {
  nlohmann::ordered_json j;
  j["replan_ms"] = r.replan_ms;
  j["median_replan_ms"] = num_json(median(r.replan_ms));
  std::vector<double> topo, pgo, refine, yaw;
  for (const auto& d : r.replans) {
    if (!d.ok) continue;
    topo.push_back(d.topo_ms);
    pgo.push_back(d.pgo_ms);
    refine.push_back(d.refine_ms);
    yaw.push_back(d.yaw_ms);
  }
  j["median_stage_ms"] = {{"topo", num_json(median(topo))},
                          {"pgo", num_json(median(pgo))},
                          {"refine", num_json(median(refine))},
                          {"yaw", num_json(median(yaw))}};
  os << j.dump(2) << "\n";
}

void write_run_outputs(const std::string& dir, const ScenarioResult& r, const ScenarioConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise(ErrorCode::kIo, "cannot create output directory " + dir);
  auto open = [&](const char* name) {
    std::ofstream f(std::filesystem::path(dir) / name);
    if (!f) raise(ErrorCode::kIo, std::string("cannot write ") + name);
    return f;
  };
  {
    auto f = open("result.json");
    write_result_json(f, r, cfg);
  }
  {
    auto f = open("replans.jsonl");
    write_replans_jsonl(f, r);
  }
  {
    auto f = open("trajectory.csv");
    write_trajectory_csv(f, r);
  }
  {
    auto f = open("timing.json");
    write_timing_json(f, r);
  }
}

}  // namespace replan
