#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "replan/grid_map.hpp"

namespace replan {

// Axis-aligned box [lo, hi] or vertical cylinder (center.xy, radius, z in [lo.z, hi.z]).
struct Obstacle {
  enum class Kind { kBox, kCylinder };
  Kind kind = Kind::kBox;
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  double radius = 0.0;  // cylinders only; center is (lo.x, lo.y)

  static Obstacle box(const Vec3& lo, const Vec3& hi);
  static Obstacle cylinder(double cx, double cy, double radius, double z0, double z1);
  bool contains(const Vec3& p) const;
  /// Horizontal distance from (x, y) to the footprint; 0 inside.
  double footprint_distance(double x, double y) const;
};

/// Human-editable world description. Text format, one statement per line, '#' comments:
///   bounds x0 y0 z0 x1 y1 z1
///   resolution r
///   start x y z
///   waypoint x y z        (zero or more, in order)
///   goal x y z
///   box x0 y0 z0 x1 y1 z1
///   cylinder cx cy radius z0 z1
struct Scene {
  Vec3 lo = Vec3(-2.0, -2.0, 0.0);
  Vec3 hi = Vec3(12.0, 12.0, 3.0);
  double resolution = 0.1;
  Vec3 start = Vec3(-1.0, 5.0, 1.5);
  Vec3 goal = Vec3(11.0, 5.0, 1.5);
  std::vector<Vec3> waypoints;
  std::vector<Obstacle> obstacles;

  /// start, waypoints..., goal
  std::vector<Vec3> reference() const;
  void validate() const;
};

Scene parse_scene(std::istream& is);
Scene load_scene(const std::string& path);
void write_scene(std::ostream& os, const Scene& scene);
void save_scene(const std::string& path, const Scene& scene);

/// Every voxel whose center lies inside an obstacle is Occupied; the rest Free.
VoxelMap rasterize(const Scene& scene);

/// Binary voxel dump: "RPVX", u32 version (1), f64 origin[3], f64 resolution, i32 dims[3],
/// then one u8 state per voxel (0 unknown, 1 free, 2 occupied), x fastest. Little-endian.
void write_vox(std::ostream& os, const VoxelMap& map);
VoxelMap read_vox(std::istream& is);
void save_vox(const std::string& path, const VoxelMap& map);
VoxelMap load_vox(const std::string& path);

struct MapGenConfig {
  double density = 0.4;                 // obstacles per m^2 of the area
  double area_x0 = 0.0, area_y0 = 0.0;  // obstacle centers are drawn in this rectangle
  double area_x1 = 10.0, area_y1 = 10.0;
  double box_min = 0.4, box_max = 1.0;  // box edge length range (m)
  double radius_min = 0.2, radius_max = 0.5;
  double cylinder_fraction = 0.5;
  double clear_radius = 1.0;  // start/goal kept free within this horizontal distance
  int max_retries = 1000;     // per obstacle

  double area() const { return (area_x1 - area_x0) * (area_y1 - area_y0); }
  int count() const;
  void validate() const;
};

/// Adds round(density * area) full-height obstacles to `base` (bounds, start, goal kept).
Scene generate_scene(const MapGenConfig& cfg, std::uint64_t seed, const Scene& base = Scene{});
inline VoxelMap generate_map(const MapGenConfig& cfg, std::uint64_t seed, const Scene& base = Scene{}) {
  return rasterize(generate_scene(cfg, seed, base));
}

}  // namespace replan
