#pragma once

#include <optional>

#include "replan/pgo.hpp"

namespace replan {

struct RefineConfig {
  double psi_min = 0.2;   // m
  double delta_v = 0.2;   // m
  double r_q = 0.3;       // m
  double alpha = 1.2;
  double lambda_r = 10.0;
  double w_r = 1.0;
  double step = 0.0;      // s, <= 0 means knot_span / 4
  int max_outer = 6;

  void validate() const;
};

struct FrontierHit {
  double t_f;
  Vec3 p_f;
};

struct VisibilityStatus {
  double t_f = 0.0;
  Vec3 p_f = Vec3::Zero();
  bool visible_always = false;
  bool degenerate = false;  // p_f never reaches psi_min before t_f; t_c = t_f
  double t_c = 0.0;
  Vec3 p_c = Vec3::Zero();
  Vec3 v_c = Vec3::UnitX();
};

/// First sampled time whose position is Unknown (or outside the map).
std::optional<FrontierHit> frontier_intersection(const UniformBSpline& traj, const VoxelMap& map, double step);

/// Smallest interpolated signed distance along the segment p -> p_f, sampled half a voxel apart.
double visibility_level(const Vec3& p, const Vec3& p_f, const VoxelMap& map);

VisibilityStatus critical_view(const UniformBSpline& traj, const Vec3& p_f, double t_f, const VoxelMap& map,
                               const RefineConfig& cfg);

/// v^2 / (2 a_max) <= d - R_q.
inline bool worst_case_safe(double v, double d, double a_max, double r_q) { return v * v / (2.0 * a_max) <= d - r_q; }

/// f_dv + w_r * f_dsf at t_s; gradient has the shape of q.
double fdv_fdsf_cost_grad(const UniformBSpline& traj, const Eigen::MatrixXd& q, const Vec3& p_f, const Vec3& v_c,
                          double t_s, double d_s, double delta_v, double w_r, Eigen::MatrixXd* grad = nullptr,
                          double* dv_norm = nullptr);

struct RefineDiagnostics {
  bool has_frontier = false;
  VisibilityStatus vis;
  bool already_safe = false;
  bool optimized = false;
  bool success = true;
  bool fallback_stretch = false;
  bool hard_failure = false;
  int iterations = 0;
  int iteration_cap = 0;
  double v_hat0 = 0.0;
  double t_s = 0.0;
  double v_s = 0.0;
  double d_sf = 0.0;
  double dv_norm = 0.0;
  double slack = 0.0;  // d_sf - R_q - v_s^2 / (2 a_max) at exit
};

struct RefineResult {
  UniformBSpline spline;
  RefineDiagnostics diag;
};

/// Risk-aware refinement loop. On an iteration-cap failure the input is slowed down by a
/// knot-span stretch until the criterion holds at the critical view (success = false,
/// fallback_stretch = true); when even that is impossible hard_failure is set.
RefineResult refine_trajectory(const UniformBSpline& best, const VoxelMap& map, const PgoConfig& pgo_cfg,
                               const RefineConfig& cfg);

}  // namespace replan
