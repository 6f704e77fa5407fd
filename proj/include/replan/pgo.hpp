#pragma once

#include <functional>
#include <string>
#include <vector>

#include "replan/bspline.hpp"
#include "replan/grid_map.hpp"
#include "replan/optimizer.hpp"
#include "replan/topo.hpp"

namespace replan {

struct PgoConfig {
  double lambda_s = 1.0;
  double lambda_g = 0.5;
  double lambda_c = 10.0;
  double lambda_d = 1.0;
  double d_min = 0.5;
  double v_max = 3.0;
  double a_max = 2.5;
  MinimizeOptions optimizer;
  // Result acceptance: densely sampled positions must keep this ESDF distance.
  double feasible_clearance = 0.15;

  void validate() const;
};

/// F(x, y) = (x - y)^2 if x <= y, else 0.
inline double penalty(double x, double y) { return x <= y ? (x - y) * (x - y) : 0.0; }
/// dF/dx.
inline double penalty_dx(double x, double y) { return x <= y ? 2.0 * (x - y) : 0.0; }

/// Indices [first, last] of the control points that the optimizers move.
struct FreeRange {
  int first;
  int last;
  int count() const { return last - first + 1; }
};
FreeRange free_range(const UniformBSpline& s);

/// One attractor per free control point, sampled along the path at the control
/// points' Greville abscissae mapped uniformly onto arc length.
std::vector<Vec3> guide_points(const PolyPath& path, const UniformBSpline& seed);

/// lambda_s * f_s + lambda_g * f_g over the given control points.
double phase1_cost(const Eigen::MatrixXd& q, int degree, const std::vector<Vec3>& guide, const PgoConfig& cfg,
                   Eigen::MatrixXd* grad = nullptr);

/// Exact minimizer of the phase-1 cost over the free control points.
UniformBSpline phase1_closed_form(const UniformBSpline& seed, const std::vector<Vec3>& guide, const PgoConfig& cfg);

struct Phase2Terms {
  double smooth = 0.0;
  double collision = 0.0;
  double velocity = 0.0;
  double acceleration = 0.0;
};

/// Weighted phase-2 cost. The gradient has the shape of q with the fixed rows zeroed.
double phase2_cost_grad(const Eigen::MatrixXd& q, int degree, double dt, const VoxelMap& map, const PgoConfig& cfg,
                        Eigen::MatrixXd* grad = nullptr, Phase2Terms* terms = nullptr);

/// Extra cost on the free control points, added to phase 2 by the refinement stage.
using ExtraCost = std::function<double(const Eigen::MatrixXd& q, Eigen::MatrixXd& grad)>;

struct Phase2Result {
  UniformBSpline spline;
  double initial_cost = 0.0;
  double cost = 0.0;
  int iterations = 0;
  std::vector<double> cost_history;
};

Phase2Result phase2_optimize(const UniformBSpline& warmup, const VoxelMap& map, const PgoConfig& cfg,
                             const ExtraCost& extra = {});

/// Dense-sample clearance test on the ESDF, plus hull feasibility.
bool trajectory_clear(const UniformBSpline& s, const VoxelMap& map, double clearance, double step);

struct GuideResult {
  UniformBSpline spline;
  double cost = 0.0;
  int iterations = 0;
  double stretch = 1.0;
  double length = 0.0;
  double wall_ms = 0.0;
  bool feasible = false;
  std::string error;
};

struct PgoOutput {
  UniformBSpline best;
  int chosen = -1;
  std::vector<GuideResult> guides;
};

/// Phase 1 + phase 2 per guide (concurrently when `parallel`), time-stretch repair,
/// then the feasible result with the lowest cost (ties: shorter). Raises an
/// infeasible error when no guide gives a feasible trajectory.
PgoOutput pgo_parallel(const UniformBSpline& seed, const std::vector<PolyPath>& guides, const VoxelMap& map,
                       const PgoConfig& cfg, bool parallel = true);

}  // namespace replan
