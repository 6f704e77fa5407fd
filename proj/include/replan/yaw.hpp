#pragma once

#include <optional>
#include <unordered_map>
#include <vector>

#include "replan/bspline.hpp"
#include "replan/grid_map.hpp"
#include "replan/optimizer.hpp"

namespace replan {

struct IgConfig {
  double w_l = 0.5;  // 1/m
  double w_s = 0.1;  // 1/m
  int stride = 2;    // voxels

  void validate() const;
};

/// Dense samples of a trajectory from a start time, for lateral/longitudinal distances.
class TrajectoryProfile {
 public:
  TrajectoryProfile(const UniformBSpline& traj, double t_from, double step);
  /// (D_l, D_s): distance to the nearest sample and arc length up to it.
  std::pair<double, double> distances(const Vec3& m) const;

 private:
  std::vector<Vec3> pts_;
  std::vector<double> arc_;
};

/// Biased gain of unknown, visible, subsampled voxels in the sensor frustum.
class GainEvaluator {
 public:
  GainEvaluator(const VoxelMap& map, const SensorModel& sensor, const TrajectoryProfile& profile, const IgConfig& cfg);

  /// Gains for several yaws at one position. With `memoize`, voxel visibility is raycast
  /// once per position and shared across the yaws.
  std::vector<double> gains_at(const Vec3& position, const std::vector<double>& yaws, bool memoize = true) const;
  double gain(const Vec3& position, double yaw) const { return gains_at(position, {yaw}, false)[0]; }
  /// Voxels considered (subsampled, Unknown, in range) around a position, in visit order.
  std::vector<std::size_t> candidates(const Vec3& position) const;
  bool visible_from(const Vec3& position, std::size_t voxel) const;
  double weight(std::size_t voxel) const;

 private:
  const VoxelMap& map_;
  SensorModel sensor_;
  const TrajectoryProfile& profile_;
  IgConfig cfg_;
};

/// One-shot gain with no caching.
double information_gain(const VoxelMap& map, const Vec3& position, double yaw, const UniformBSpline& traj,
                        double t_from, const SensorModel& sensor, const IgConfig& cfg);

/// Wraps to (-pi, pi].
double wrap_pi(double a);

/// Layered graph: layer 0 has one node (angle `start`); layer i >= 1 has nodes with
/// angles[i-1][j] and gains gains[i-1][j].
struct YawGraph {
  double start = 0.0;
  std::vector<std::vector<double>> angles;
  std::vector<std::vector<double>> gains;
  double mu = 1.0;
};

struct YawPath {
  std::vector<int> indices;  // chosen j per layer 1..M
  std::vector<double> xi;    // xi_0 .. xi_M
  double cost = 0.0;
};

double yaw_path_cost(const YawGraph& g, const std::vector<int>& indices);
/// Dijkstra over the layered graph.
YawPath search_yaw_graph(const YawGraph& g);

/// atan2(v_y, v_x) at t, or `previous` when the horizontal speed is below 1e-3.
double velocity_tracking_yaw(const UniformBSpline& traj, double t, double previous = 0.0);

struct YawOptConfig {
  double gamma1 = 100.0;
  double gamma2 = 10.0;
  double dphi_max = 2.0;   // rad/s
  double ddphi_max = 3.0;  // rad/s^2
  double knot_span = 0.3;  // s
  MinimizeOptions optimizer;
};

/// Yaw start state; when given, the first three control points are fixed to match it.
struct YawState {
  double phi = 0.0;
  double dphi = 0.0;
  double ddphi = 0.0;
};

/// Objective value and gradient (same shape as phi) over a control vector.
double yaw_objective(const Eigen::VectorXd& phi, double dt, double t0, const std::vector<double>& times,
                     const std::vector<double>& xi, const YawOptConfig& cfg, Eigen::VectorXd* grad = nullptr);

/// xi must be unwrapped; times increasing. Result is hull-feasible (knot span stretched if needed).
UniformBSpline optimize_yaw_bspline(const std::vector<double>& xi, const std::vector<double>& times,
                                    const YawOptConfig& cfg, const std::optional<YawState>& start = std::nullopt);

struct YawPlannerConfig {
  int layers = 6;  // M
  int candidates = 8;  // J
  double window = 1.5707963267948966;
  double mu = 1.0;
  IgConfig ig;
  YawOptConfig opt;
};

struct YawPlan {
  UniformBSpline spline;
  YawPath path;
  std::vector<double> times;
  std::vector<std::vector<double>> gains;
};

/// Graph search along the position trajectory from t_from, then yaw B-spline optimization.
YawPlan plan_yaw(const UniformBSpline& traj, double t_from, const VoxelMap& map, const SensorModel& sensor,
                 const YawState& current, const YawPlannerConfig& cfg);

}  // namespace replan
