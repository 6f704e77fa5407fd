#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "replan/errors.hpp"

namespace replan {

using Vec3 = Eigen::Vector3d;
using Idx3 = Eigen::Vector3i;

enum class VoxelState : std::uint8_t { kUnknown = 0, kFree = 1, kOccupied = 2 };

/// Depth sensor with a yaw-only mount (pitch and roll are zero).
struct SensorModel {
  double horizontal_fov = 1.5707963267948966;
  double vertical_fov = 1.0471975511965976;
  double max_range = 4.5;

  void validate() const;
};

struct Pose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
};

/// True when `point` lies inside the sensor frustum and range at the given pose.
bool in_frustum(const Vec3& sensor, double yaw, const SensorModel& sensor_model, const Vec3& point);

/// Regular voxel grid holding occupancy states and a Euclidean signed distance
/// field. Voxel (i, j, k) covers [origin + (i, j, k) * res, origin + (i+1, j+1, k+1) * res)
/// and is stored at linear index i + nx * (j + ny * k).
class VoxelMap {
 public:
  VoxelMap(const Vec3& origin, double resolution, const Idx3& dims, double esdf_clamp = 10.0);

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Idx3& dims() const { return dims_; }
  double esdf_clamp() const { return esdf_clamp_; }
  std::size_t size() const { return states_.size(); }
  Vec3 upper() const { return origin_ + dims_.cast<double>() * resolution_; }
  bool same_geometry(const VoxelMap& other) const;

  bool inside(const Vec3& p) const;
  bool inside(const Idx3& idx) const;
  /// Containing voxel; points on the upper faces map to the last layer.
  Idx3 index_of(const Vec3& p) const;
  Vec3 center(const Idx3& idx) const;
  std::size_t linear(const Idx3& idx) const {
    return static_cast<std::size_t>(idx.x()) +
           static_cast<std::size_t>(dims_.x()) *
               (static_cast<std::size_t>(idx.y()) + static_cast<std::size_t>(dims_.y()) * idx.z());
  }
  Idx3 unravel(std::size_t linear_index) const;

  VoxelState state(const Idx3& idx) const { return states_[linear(idx)]; }
  VoxelState state(std::size_t linear_index) const { return states_[linear_index]; }
  void set_state(const Idx3& idx, VoxelState s);
  void set_state(std::size_t linear_index, VoxelState s);
  VoxelState state_at(const Vec3& p) const;
  void fill(VoxelState s);
  const std::vector<VoxelState>& states() const { return states_; }

  bool esdf_dirty() const { return esdf_dirty_; }
  /// Exact Euclidean distance transform at voxel centers, Unknown counted as free.
  void compute_esdf();
  double esdf(const Idx3& idx) const;
  double esdf(std::size_t linear_index) const;

  /// Trilinear interpolation of the field and its analytic gradient.
  std::pair<double, Vec3> distance_and_gradient(const Vec3& p) const;
  double distance(const Vec3& p) const { return distance_and_gradient(p).first; }

  /// Voxels crossed by the segment, in traversal order, both endpoint voxels included.
  std::vector<Idx3> raycast(const Vec3& from, const Vec3& to) const;

  /// Calls `visit(idx)` for each voxel crossed by the segment; stops early when it returns false.
  template <typename Visitor>
  void walk(const Vec3& from, const Vec3& to, Visitor&& visit) const;

  /// First Occupied voxel along the segment, if any. Unknown voxels do not block.
  std::optional<Idx3> first_occupied(const Vec3& from, const Vec3& to) const;
  bool segment_free(const Vec3& from, const Vec3& to) const { return !first_occupied(from, to); }

 private:
  void require_inside(const Vec3& p, const char* what) const;

  Vec3 origin_;
  double resolution_;
  Idx3 dims_;
  double esdf_clamp_;
  std::vector<VoxelState> states_;
  std::vector<double> esdf_;
  bool esdf_dirty_ = true;
};

/// Copies every voxel in the frustum that is visible from the pose from `world`
/// into `belief`. Returns the number of voxels that were Unknown before.
std::size_t sense(VoxelMap& belief, const VoxelMap& world, const Pose& pose, const SensorModel& sensor);

/// Copy of `map` with every voxel within `radius` of an Occupied voxel center marked Occupied,
/// and Unknown voxels within `unknown_radius` too (ESDF left dirty). Seals the gaps and hollow
/// interiors that partial observations leave behind obstacle faces.
VoxelMap inflated(const VoxelMap& map, double radius, double unknown_radius = 0.0);

/// Squared-distance transform of a 1D sampled function (lower envelope of parabolas).
/// `f` holds 0 at sites and +inf elsewhere; the result is written back in place.
void distance_transform_1d(std::vector<double>& f, std::vector<int>& v, std::vector<double>& z,
                           std::vector<double>& out);

template <typename Visitor>
void VoxelMap::walk(const Vec3& from, const Vec3& to, Visitor&& visit) const {
  require_inside(from, "raycast start");
  require_inside(to, "raycast end");
  Idx3 cur = index_of(from);
  const Idx3 last = index_of(to);
  const Vec3 dir = to - from;

  Idx3 step;
  Vec3 t_max;
  Vec3 t_delta;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0.0) {
      step[a] = 1;
      const double boundary = origin_[a] + (cur[a] + 1) * resolution_;
      t_max[a] = (boundary - from[a]) / dir[a];
      t_delta[a] = resolution_ / dir[a];
    } else if (dir[a] < 0.0) {
      step[a] = -1;
      const double boundary = origin_[a] + cur[a] * resolution_;
      t_max[a] = (boundary - from[a]) / dir[a];
      t_delta[a] = -resolution_ / dir[a];
    } else {
      step[a] = 0;
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }

  if (!visit(cur)) return;
  // Exactly one axis advances per step, so the walk length is the Manhattan
  // distance between the endpoint voxels.
  int remaining = (last - cur).cwiseAbs().sum();
  while (remaining-- > 0) {
    int axis = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      if (cur[a] == last[a]) continue;
      if (axis < 0 || t_max[a] < best) {
        best = t_max[a];
        axis = a;
      }
    }
    cur[axis] += step[axis];
    t_max[axis] += t_delta[axis];
    if (!visit(cur)) return;
  }
}

}  // namespace replan
