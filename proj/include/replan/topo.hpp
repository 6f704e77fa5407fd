#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "replan/grid_map.hpp"

namespace replan {

/// Piecewise-linear path, parameterized uniformly by arc length on s in [0, 1].
class PolyPath {
 public:
  PolyPath() = default;
  /// Consecutive duplicate waypoints are merged; fewer than two distinct points is an error.
  explicit PolyPath(std::vector<Vec3> waypoints);

  const std::vector<Vec3>& waypoints() const { return pts_; }
  const Vec3& front() const { return pts_.front(); }
  const Vec3& back() const { return pts_.back(); }
  double length() const { return cum_.back(); }
  Vec3 at(double s) const;
  /// Points at s = i / steps, i = 0..steps.
  std::vector<Vec3> sample(int steps) const;

 private:
  std::vector<Vec3> pts_;
  std::vector<double> cum_;
};

struct TopoConfig {
  double t_max = 0.0;  // seconds, <= 0 disables the time limit
  int n_max = 1000;    // samples
  int k_max = 4;
  double r_max = 2.0;
  int uvd_steps = 32;
  Vec3 inflation = Vec3(3.0, 3.0, 3.0);  // sample box margin around the start-goal segment
  double clearance = 0.0;                // visibility margin, needs a current ESDF when > 0
  int raw_path_cap = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Segment visibility used by the roadmap: no Occupied voxel crossed (Unknown is free),
/// and when clearance > 0 every crossed voxel center keeps at least that distance.
bool visible(const VoxelMap& map, const Vec3& a, const Vec3& b, double clearance = 0.0);

/// True iff the segments between a(i/K) and b(i/K), i = 0..K, are all collision-free.
bool uvd_equivalent(const PolyPath& a, const PolyPath& b, const VoxelMap& map, int steps);

struct RoadmapNode {
  enum class Kind { kGuard, kConnector };
  Kind kind = Kind::kGuard;
  Vec3 position;
  std::vector<int> neighbors;
};

struct Roadmap {
  std::vector<RoadmapNode> nodes;
  int start = 0;
  int goal = 1;
  int samples = 0;
  int replacements = 0;

  int add_node(RoadmapNode::Kind kind, const Vec3& p);
  void connect(int a, int b);
};

Roadmap build_roadmap(const VoxelMap& map, const Vec3& start, const Vec3& goal, const TopoConfig& cfg);

/// Simple start-to-goal paths by depth-first search, at most `cap` of them.
std::vector<PolyPath> extract_paths(const Roadmap& roadmap, int cap = 64);
/// Same search, returning node id sequences.
std::vector<std::vector<int>> extract_node_paths(const Roadmap& roadmap, int cap = 64);

/// Shortcut keeping the path's UVD class. Needs a current ESDF. Returns the input
/// when the shortcut cannot be validated.
PolyPath shorten_path(const PolyPath& path, const VoxelMap& map, int uvd_steps = 32);

/// Distinct classes only, sorted by length, at most k_max, none longer than r_max x shortest.
std::vector<PolyPath> prune_and_select(std::vector<PolyPath> paths, const VoxelMap& map, const TopoConfig& cfg);

/// Whole pipeline: roadmap, extraction, shortening, pruning.
struct TopoResult {
  Roadmap roadmap;
  std::vector<PolyPath> raw;
  std::vector<PolyPath> selected;
};
TopoResult find_guide_paths(const VoxelMap& map, const Vec3& start, const Vec3& goal, const TopoConfig& cfg);

/// Line-delimited JSON: one record per node, edge and selected path.
void write_roadmap_dump(std::ostream& os, const Roadmap& roadmap, const std::vector<PolyPath>& paths);

}  // namespace replan
