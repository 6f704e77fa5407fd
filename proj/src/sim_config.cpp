#include <charconv>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "replan/sim_harness.hpp"

namespace replan {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<double> numbers(const std::string& key, const std::string& value, std::size_t n) {
  std::vector<double> out;
  std::istringstream is(value);
  for (std::string tok; is >> tok;) {
    if (!tok.empty() && tok.back() == ',') tok.pop_back();
    double x = 0.0;
    const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
      raise(ErrorCode::kConfig, key + ": bad number '" + tok + "'");
    out.push_back(x);
  }
  if (n > 0 && out.size() != n) raise(ErrorCode::kConfig, key + " expects " + std::to_string(n) + " numbers");
  return out;
}

double number(const std::string& key, const std::string& value) { return numbers(key, value, 1)[0]; }

int integer(const std::string& key, const std::string& value) {
  const double x = number(key, value);
  if (x != std::floor(x) || std::abs(x) > 1e9) raise(ErrorCode::kConfig, key + " must be an integer");
  return static_cast<int>(x);
}

bool boolean(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  raise(ErrorCode::kConfig, key + " must be true or false");
}

Vec3 vec3(const std::string& key, const std::string& value) {
  const auto v = numbers(key, value, 3);
  return Vec3(v[0], v[1], v[2]);
}

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

ScenarioConfig::ScenarioConfig() {
  topo.n_max = 300;
  topo.inflation = Vec3(2.5, 2.5, 0.5);
  topo.clearance = 0.0;
  pgo.feasible_clearance = 0.15;
  // Collision cost only sees control points, so they must be dense and the penalty must dominate
  // the dynamic terms or the curve cuts through thin obstacles between them.
  pgo.lambda_c = 1000.0;
  pgo.optimizer.max_iterations = 400;
  yaw.opt.dphi_max = 2.0;
  yaw.opt.ddphi_max = 3.0;
}

void ScenarioConfig::validate() const {
  if (!(horizon > 0.0)) raise(ErrorCode::kConfig, "horizon must be > 0");
  if (!(knot_span > 0.0)) raise(ErrorCode::kConfig, "knot_span must be > 0");
  if (!(cruise_fraction > 0.0 && cruise_fraction <= 1.0)) raise(ErrorCode::kConfig, "cruise_fraction outside (0, 1]");
  if (!(sim_step > 0.0) || !(sense_period > 0.0) || !(replan_period > 0.0))
    raise(ErrorCode::kConfig, "sim_step, sense_period and replan_period must be > 0");
  if (lookahead < 0.0 || estop_distance < 0.0 || collision_radius < 0.0 || goal_tolerance <= 0.0)
    raise(ErrorCode::kConfig, "lookahead, estop_distance, collision_radius must be >= 0 and goal_tolerance > 0");
  if (!(timeout > 0.0) || stall_time < 0.0) raise(ErrorCode::kConfig, "bad timeout or stall_time");
  if (goal_clearance < 0.0 || inflation < 0.0 || unknown_inflation < 0.0) raise(ErrorCode::kConfig, "goal_clearance and inflation must be >= 0");
  sensor.validate();
  topo.validate();
  pgo.validate();
  yaw.ig.validate();
  if (yaw.layers < 1 || yaw.candidates < 1) raise(ErrorCode::kConfig, "yaw_layers and yaw_candidates must be >= 1");
  if (!generate && scene_file.empty()) raise(ErrorCode::kConfig, "generate = false needs a scene file");
  if (generate) gen.validate();
  scene.validate();
}

std::string ScenarioConfig::strategy_label() const {
  return std::string(risk_aware ? "risk" : "optimistic") + "+" + (active_yaw ? "active" : "velocity");
}

void ScenarioConfig::set(const std::string& key, const std::string& value, const std::string& base_dir) {
  const std::string& k = key;
  const std::string& v = value;
  if (k == "scene") {
    const std::filesystem::path p(v);
    scene_file = p.is_absolute() ? v : (std::filesystem::path(base_dir) / p).lexically_normal().string();
    scene = load_scene(scene_file);
    generate = false;
  } else if (k == "generate") {
    generate = boolean(k, v);
  } else if (k == "seed") {
    const double x = number(k, v);
    if (x < 0 || x != std::floor(x)) raise(ErrorCode::kConfig, "seed must be a non-negative integer");
    seed = static_cast<std::uint64_t>(x);
  } else if (k == "density") {
    gen.density = number(k, v);
  } else if (k == "area") {
    const auto a = numbers(k, v, 4);
    gen.area_x0 = a[0], gen.area_y0 = a[1], gen.area_x1 = a[2], gen.area_y1 = a[3];
  } else if (k == "box_size") {
    const auto a = numbers(k, v, 2);
    gen.box_min = a[0], gen.box_max = a[1];
  } else if (k == "cylinder_radius") {
    const auto a = numbers(k, v, 2);
    gen.radius_min = a[0], gen.radius_max = a[1];
  } else if (k == "cylinder_fraction") {
    gen.cylinder_fraction = number(k, v);
  } else if (k == "clear_radius") {
    gen.clear_radius = number(k, v);
  } else if (k == "bounds") {
    const auto a = numbers(k, v, 6);
    scene.lo = Vec3(a[0], a[1], a[2]);
    scene.hi = Vec3(a[3], a[4], a[5]);
  } else if (k == "resolution") {
    scene.resolution = number(k, v);
  } else if (k == "start") {
    scene.start = vec3(k, v);
  } else if (k == "goal") {
    scene.goal = vec3(k, v);
  } else if (k == "strategy") {
    const Strategy s = parse_strategy(v);
    risk_aware = s.risk_aware;
    active_yaw = s.active_yaw;
  } else if (k == "risk_aware") {
    risk_aware = boolean(k, v);
  } else if (k == "active_yaw") {
    active_yaw = boolean(k, v);
  } else if (k == "horizon") {
    horizon = number(k, v);
  } else if (k == "knot_span") {
    knot_span = number(k, v);
  } else if (k == "cruise_fraction") {
    cruise_fraction = number(k, v);
  } else if (k == "sim_step") {
    sim_step = number(k, v);
  } else if (k == "sense_period") {
    sense_period = number(k, v);
  } else if (k == "replan_period") {
    replan_period = number(k, v);
  } else if (k == "lookahead") {
    lookahead = number(k, v);
  } else if (k == "estop_distance") {
    estop_distance = number(k, v);
  } else if (k == "collision_radius") {
    collision_radius = number(k, v);
  } else if (k == "goal_tolerance") {
    goal_tolerance = number(k, v);
  } else if (k == "timeout") {
    timeout = number(k, v);
  } else if (k == "stall_time") {
    stall_time = number(k, v);
  } else if (k == "inflation") {
    inflation = number(k, v);
  } else if (k == "unknown_inflation") {
    unknown_inflation = number(k, v);
  } else if (k == "goal_clearance") {
    goal_clearance = number(k, v);
  } else if (k == "sensor_hfov_deg") {
    sensor.horizontal_fov = number(k, v) * kDeg;
  } else if (k == "sensor_vfov_deg") {
    sensor.vertical_fov = number(k, v) * kDeg;
  } else if (k == "sensor_range") {
    sensor.max_range = number(k, v);
  } else if (k == "v_max") {
    pgo.v_max = number(k, v);
  } else if (k == "a_max") {
    pgo.a_max = number(k, v);
  } else if (k == "lambda_s") {
    pgo.lambda_s = number(k, v);
  } else if (k == "lambda_g") {
    pgo.lambda_g = number(k, v);
  } else if (k == "lambda_c") {
    pgo.lambda_c = number(k, v);
  } else if (k == "lambda_d") {
    pgo.lambda_d = number(k, v);
  } else if (k == "d_min") {
    pgo.d_min = number(k, v);
  } else if (k == "feasible_clearance") {
    pgo.feasible_clearance = number(k, v);
  } else if (k == "optimizer_iterations") {
    pgo.optimizer.max_iterations = integer(k, v);
  } else if (k == "topo_n_max") {
    topo.n_max = integer(k, v);
  } else if (k == "topo_k_max") {
    topo.k_max = integer(k, v);
  } else if (k == "topo_r_max") {
    topo.r_max = number(k, v);
  } else if (k == "topo_inflation") {
    topo.inflation = vec3(k, v);
  } else if (k == "topo_clearance") {
    topo.clearance = number(k, v);
  } else if (k == "refine_psi_min") {
    refine.psi_min = number(k, v);
  } else if (k == "refine_delta_v") {
    refine.delta_v = number(k, v);
  } else if (k == "refine_r_q") {
    refine.r_q = number(k, v);
  } else if (k == "refine_alpha") {
    refine.alpha = number(k, v);
  } else if (k == "refine_lambda") {
    refine.lambda_r = number(k, v);
  } else if (k == "refine_w_r") {
    refine.w_r = number(k, v);
  } else if (k == "refine_max_outer") {
    refine.max_outer = integer(k, v);
  } else if (k == "yaw_layers") {
    yaw.layers = integer(k, v);
  } else if (k == "yaw_candidates") {
    yaw.candidates = integer(k, v);
  } else if (k == "yaw_window_deg") {
    yaw.window = number(k, v) * kDeg;
  } else if (k == "yaw_mu") {
    yaw.mu = number(k, v);
  } else if (k == "yaw_gamma1") {
    yaw.opt.gamma1 = number(k, v);
  } else if (k == "yaw_gamma2") {
    yaw.opt.gamma2 = number(k, v);
  } else if (k == "yaw_dphi_max") {
    yaw.opt.dphi_max = number(k, v);
  } else if (k == "yaw_ddphi_max") {
    yaw.opt.ddphi_max = number(k, v);
  } else if (k == "yaw_knot_span") {
    yaw.opt.knot_span = number(k, v);
  } else if (k == "ig_stride") {
    yaw.ig.stride = integer(k, v);
  } else if (k == "ig_w_l") {
    yaw.ig.w_l = number(k, v);
  } else if (k == "ig_w_s") {
    yaw.ig.w_s = number(k, v);
  } else {
    raise(ErrorCode::kConfig, "unknown config key '" + k + "'");
  }
}

void apply_config(ScenarioConfig& cfg, std::istream& is, const std::string& base_dir) {
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    raw = trim(raw);
    if (raw.empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string::npos) raise(ErrorCode::kConfig, "config line " + std::to_string(line) + ": expected key = value");
    try {
      cfg.set(trim(raw.substr(0, eq)), trim(raw.substr(eq + 1)), base_dir);
    } catch (const Error& e) {
      raise(e.code(), "config line " + std::to_string(line) + ": " + e.what());
    }
  }
}

ScenarioConfig parse_config(std::istream& is, const std::string& base_dir) {
  ScenarioConfig cfg;
  apply_config(cfg, is, base_dir);
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(ErrorCode::kIo, "cannot open config " + path);
  return parse_config(f, std::filesystem::path(path).parent_path().string());
}

Strategy parse_strategy(const std::string& name) {
  const std::string n = trim(name);
  if (n == "full") return {"risk+active", true, true};
  if (n == "optimistic" || n == "baseline") return {"optimistic+velocity", false, false};
  const auto plus = n.find('+');
  if (plus == std::string::npos) raise(ErrorCode::kConfig, "unknown strategy '" + n + "'");
  const std::string a = n.substr(0, plus), b = n.substr(plus + 1);
  Strategy s;
  if (a == "risk")
    s.risk_aware = true;
  else if (a == "optimistic")
    s.risk_aware = false;
  else
    raise(ErrorCode::kConfig, "unknown strategy '" + n + "'");
  if (b == "active")
    s.active_yaw = true;
  else if (b == "velocity")
    s.active_yaw = false;
  else
    raise(ErrorCode::kConfig, "unknown strategy '" + n + "'");
  s.label = a + "+" + b;
  return s;
}

Scene scenario_scene(const ScenarioConfig& cfg) {
  if (!cfg.generate) return cfg.scene;
  return generate_scene(cfg.gen, cfg.seed, cfg.scene);
}

}  // namespace replan
