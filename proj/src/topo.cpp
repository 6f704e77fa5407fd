#include "replan/topo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

#include <json.hpp>

namespace replan {

PolyPath::PolyPath(std::vector<Vec3> waypoints) {
  for (const Vec3& p : waypoints)
    if (pts_.empty() || (p - pts_.back()).norm() > 1e-12) pts_.push_back(p);
  if (pts_.size() < 2) raise(ErrorCode::kInvalidArgument, "path needs at least two distinct waypoints");
  cum_.assign(pts_.size(), 0.0);
  for (std::size_t i = 1; i < pts_.size(); ++i) cum_[i] = cum_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
}

Vec3 PolyPath::at(double s) const {
  const double d = std::clamp(s, 0.0, 1.0) * length();
  auto it = std::upper_bound(cum_.begin(), cum_.end(), d);
  if (it == cum_.end()) return pts_.back();
  const std::size_t i = static_cast<std::size_t>(it - cum_.begin());
  const double seg = cum_[i] - cum_[i - 1];
  return pts_[i - 1] + (pts_[i] - pts_[i - 1]) * ((d - cum_[i - 1]) / seg);
}

std::vector<Vec3> PolyPath::sample(int steps) const {
  std::vector<Vec3> out;
  out.reserve(steps + 1);
  for (int i = 0; i <= steps; ++i) out.push_back(at(static_cast<double>(i) / steps));
  return out;
}

void TopoConfig::validate() const {
  if (uvd_steps < 2) raise(ErrorCode::kConfig, "uvd_steps must be >= 2");
  if (!(r_max > 1.0)) raise(ErrorCode::kConfig, "r_max must be > 1");
  if (k_max < 1) raise(ErrorCode::kConfig, "k_max must be >= 1");
  if (n_max < 0) raise(ErrorCode::kConfig, "n_max must be >= 0");
  if (raw_path_cap < 1) raise(ErrorCode::kConfig, "raw_path_cap must be >= 1");
  if ((inflation.array() < 0.0).any()) raise(ErrorCode::kConfig, "inflation must be >= 0");
}

bool visible(const VoxelMap& map, const Vec3& a, const Vec3& b, double clearance) {
  bool ok = true;
  map.walk(a, b, [&](const Idx3& idx) {
    if (map.state(idx) == VoxelState::kOccupied || (clearance > 0.0 && map.esdf(idx) < clearance)) ok = false;
    return ok;
  });
  return ok;
}

bool uvd_equivalent(const PolyPath& a, const PolyPath& b, const VoxelMap& map, int steps) {
  if (steps < 2) raise(ErrorCode::kInvalidArgument, "uvd steps must be >= 2");
  const double tol = 0.5 * map.resolution();
  if ((a.front() - b.front()).norm() > tol || (a.back() - b.back()).norm() > tol)
    raise(ErrorCode::kInvalidArgument, "uvd check needs paths with shared endpoints");
  for (int i = 0; i <= steps; ++i) {
    const double s = static_cast<double>(i) / steps;
    if (!map.segment_free(a.at(s), b.at(s))) return false;
  }
  return true;
}

int Roadmap::add_node(RoadmapNode::Kind kind, const Vec3& p) {
  nodes.push_back(RoadmapNode{kind, p, {}});
  return static_cast<int>(nodes.size()) - 1;
}

void Roadmap::connect(int a, int b) {
  nodes[a].neighbors.push_back(b);
  nodes[b].neighbors.push_back(a);
}

namespace {

PolyPath via(const Roadmap& g, int a, const Vec3& mid, int b) {
  return PolyPath({g.nodes[a].position, mid, g.nodes[b].position});
}

bool blocked_point(const VoxelMap& map, const Vec3& p, double clearance) {
  const Idx3 idx = map.index_of(p);
  return map.state(idx) == VoxelState::kOccupied || (clearance > 0.0 && map.esdf(idx) < clearance);
}

}  // namespace

Roadmap build_roadmap(const VoxelMap& map, const Vec3& start, const Vec3& goal, const TopoConfig& cfg) {
  cfg.validate();
  if (!map.inside(start) || !map.inside(goal)) raise(ErrorCode::kBounds, "start or goal outside the map");
  if (blocked_point(map, start, cfg.clearance) || blocked_point(map, goal, cfg.clearance))
    raise(ErrorCode::kInfeasible, "start or goal in collision");

  Roadmap g;
  g.start = g.add_node(RoadmapNode::Kind::kGuard, start);
  g.goal = g.add_node(RoadmapNode::Kind::kGuard, goal);
  std::vector<int> guards = {g.start, g.goal};

  // Sample box: start-goal bounding box inflated, kept strictly inside the map.
  const double eps = 1e-6 * map.resolution();
  const Vec3 lo = (start.cwiseMin(goal) - cfg.inflation).cwiseMax(map.origin() + Vec3::Constant(eps));
  const Vec3 hi = (start.cwiseMax(goal) + cfg.inflation).cwiseMin(map.upper() - Vec3::Constant(eps));
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto t_begin = std::chrono::steady_clock::now();

  for (int n = 0; n < cfg.n_max; ++n) {
    if (cfg.t_max > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count() > cfg.t_max)
      break;
    ++g.samples;
    const Vec3 p = lo + (hi - lo).cwiseProduct(Vec3(unit(rng), unit(rng), unit(rng)));
    if (blocked_point(map, p, cfg.clearance)) continue;

    std::vector<int> seen;
    for (int id : guards) {
      if (visible(map, p, g.nodes[id].position, cfg.clearance)) {
        seen.push_back(id);
        if (seen.size() > 2) break;
      }
    }
    if (seen.empty()) {
      guards.push_back(g.add_node(RoadmapNode::Kind::kGuard, p));
      continue;
    }
    if (seen.size() != 2) continue;

    const int g0 = seen[0], g1 = seen[1];
    const PolyPath path1 = via(g, g0, p, g1);
    bool distinct = true;
    for (int c : g.nodes[g0].neighbors) {
      const auto& nb = g.nodes[c].neighbors;
      if (std::find(nb.begin(), nb.end(), g1) == nb.end()) continue;
      const PolyPath path2 = via(g, g0, g.nodes[c].position, g1);
      if (uvd_equivalent(path1, path2, map, cfg.uvd_steps)) {
        distinct = false;
        if (path1.length() < path2.length()) {
          g.nodes[c].position = p;
          ++g.replacements;
        }
        break;
      }
    }
    if (distinct) {
      const int c = g.add_node(RoadmapNode::Kind::kConnector, p);
      g.connect(g0, c);
      g.connect(c, g1);
    }
  }
  return g;
}

std::vector<std::vector<int>> extract_node_paths(const Roadmap& g, int cap) {
  std::vector<std::vector<int>> out;
  if (g.nodes.empty()) return out;
  std::vector<char> visited(g.nodes.size(), 0);
  std::vector<int> stack = {g.start};
  visited[g.start] = 1;
  auto dfs = [&](auto&& self, int u) -> void {
    for (int v : g.nodes[u].neighbors) {
      if (static_cast<int>(out.size()) >= cap) return;
      if (visited[v]) continue;
      stack.push_back(v);
      if (v == g.goal) {
        out.push_back(stack);
      } else {
        visited[v] = 1;
        self(self, v);
        visited[v] = 0;
      }
      stack.pop_back();
    }
  };
  if (g.start == g.goal) return out;
  dfs(dfs, g.start);
  return out;
}

std::vector<PolyPath> extract_paths(const Roadmap& g, int cap) {
  std::vector<PolyPath> out;
  for (const auto& ids : extract_node_paths(g, cap)) {
    std::vector<Vec3> pts;
    for (int id : ids) pts.push_back(g.nodes[id].position);
    out.emplace_back(std::move(pts));
  }
  return out;
}

PolyPath shorten_path(const PolyPath& path, const VoxelMap& map, int uvd_steps) {
  const double res = map.resolution();
  const int n = std::max(1, static_cast<int>(std::ceil(path.length() / res)));
  const std::vector<Vec3> pd = path.sample(n);
  std::vector<Vec3> ps = {pd.front()};

  for (std::size_t i = 1; i < pd.size(); ++i) {
    const auto block = map.first_occupied(ps.back(), pd[i]);
    if (!block) continue;
    const Vec3 pb = map.center(*block);
    const Vec3 ld = (pd[i] - ps.back()).normalized();
    const Vec3 grad = map.distance_and_gradient(pb).second;
    Vec3 dir = grad - grad.dot(ld) * ld;
    // Gradient along the line (head-on hit of a face): push toward the side the
    // input path takes around the block.
    if (dir.norm() < 1e-6) {
      const Vec3 side = pd[i - 1] - pb;
      dir = side - side.dot(ld) * ld;
    }
    if (dir.norm() < 1e-9) return path;
    dir.normalize();
    bool ok = false;
    Vec3 po = pb;
    for (int k = 1; k <= 10 && !ok; ++k) {
      po = pb + k * res * dir;
      ok = map.inside(po) && map.state_at(po) != VoxelState::kOccupied && map.segment_free(ps.back(), po);
    }
    if (!ok) return path;
    ps.push_back(po);
  }
  ps.push_back(pd.back());

  PolyPath out(ps);
  const auto& w = out.waypoints();
  for (std::size_t i = 1; i < w.size(); ++i)
    if (!map.segment_free(w[i - 1], w[i])) return path;
  if (out.length() > path.length() + 1e-9) return path;
  // Validate on a grid at least as fine as a quarter voxel along the longer path.
  const int fine = std::max(uvd_steps, static_cast<int>(std::ceil(4.0 * path.length() / res)));
  if (!uvd_equivalent(out, path, map, fine)) return path;
  return out;
}

std::vector<PolyPath> prune_and_select(std::vector<PolyPath> paths, const VoxelMap& map, const TopoConfig& cfg) {
  cfg.validate();
  std::vector<PolyPath> kept;
  if (paths.empty()) return kept;
  std::stable_sort(paths.begin(), paths.end(),
                   [](const PolyPath& a, const PolyPath& b) { return a.length() < b.length(); });
  const double limit = cfg.r_max * paths.front().length();
  for (const PolyPath& p : paths) {
    if (p.length() > limit) break;
    bool dup = false;
    for (const PolyPath& k : kept)
      if (uvd_equivalent(p, k, map, cfg.uvd_steps)) {
        dup = true;
        break;
      }
    if (dup) continue;
    kept.push_back(p);
    if (static_cast<int>(kept.size()) >= cfg.k_max) break;
  }
  return kept;
}

TopoResult find_guide_paths(const VoxelMap& map, const Vec3& start, const Vec3& goal, const TopoConfig& cfg) {
  TopoResult r;
  r.roadmap = build_roadmap(map, start, goal, cfg);
  r.raw = extract_paths(r.roadmap, cfg.raw_path_cap);
  std::vector<PolyPath> shortened;
  shortened.reserve(r.raw.size());
  for (const PolyPath& p : r.raw) shortened.push_back(shorten_path(p, map, cfg.uvd_steps));
  r.selected = prune_and_select(std::move(shortened), map, cfg);
  return r;
}

void write_roadmap_dump(std::ostream& os, const Roadmap& g, const std::vector<PolyPath>& paths) {
  using nlohmann::json;
  auto vec = [](const Vec3& p) { return json::array({p.x(), p.y(), p.z()}); };
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    os << json{{"type", "node"},
               {"id", i},
               {"kind", n.kind == RoadmapNode::Kind::kGuard ? "guard" : "connector"},
               {"position", vec(n.position)}}
              .dump()
       << '\n';
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    for (int j : g.nodes[i].neighbors)
      if (static_cast<int>(i) < j) os << json{{"type", "edge"}, {"a", i}, {"b", j}}.dump() << '\n';
  for (std::size_t k = 0; k < paths.size(); ++k) {
    json pts = json::array();
    for (const Vec3& p : paths[k].waypoints()) pts.push_back(vec(p));
    os << json{{"type", "path"}, {"class", k}, {"length", paths[k].length()}, {"waypoints", pts}}.dump() << '\n';
  }
}

}  // namespace replan
