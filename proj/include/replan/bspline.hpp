#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

#include "replan/errors.hpp"

namespace replan {

/// Linear map from the active control points to a value (or derivative) of the
/// curve at one time: value = sum_j weights[j] * q[first + j].
struct BasisWeights {
  int first = 0;
  Eigen::VectorXd weights;
};

/// Uniform B-spline of arbitrary dimension. Control points are stored one per
/// row. With N + 1 control points and degree p the curve is defined on
/// [t0, t0 + (N - p + 1) * dt]; control points q_m .. q_{m+p} are active on the
/// m-th knot interval.
class UniformBSpline {
 public:
  UniformBSpline() = default;
  UniformBSpline(Eigen::MatrixXd control_points, int degree, double knot_span, double t0 = 0.0);

  int degree() const { return degree_; }
  int dim() const { return static_cast<int>(ctrl_.cols()); }
  int num_control_points() const { return static_cast<int>(ctrl_.rows()); }
  double knot_span() const { return dt_; }
  double t0() const { return t0_; }
  double t_begin() const { return t0_; }
  double t_end() const { return t0_ + (num_control_points() - degree_) * dt_; }
  double duration() const { return t_end() - t_begin(); }
  const Eigen::MatrixXd& control_points() const { return ctrl_; }
  Eigen::MatrixXd& mutable_control_points() { return ctrl_; }

  bool in_domain(double t) const;
  /// Clamps t into the domain.
  double clamp_time(double t) const;

  /// Value (order 0) or derivative of the given order at t. Orders above the
  /// degree are rejected; t outside the domain raises a domain error.
  Eigen::VectorXd evaluate(double t, int order = 0) const;
  BasisWeights basis(double t, int order = 0) const;

  /// Spline of degree p - 1 whose control points are the first differences / dt.
  UniformBSpline derivative() const;
  /// Same control points, knot span multiplied by `factor` (slows the curve down).
  UniformBSpline time_stretched(double factor) const;

  /// Curve length by dense sampling.
  double length(int samples_per_span = 10) const;

 private:
  Eigen::MatrixXd ctrl_;
  int degree_ = 3;
  double dt_ = 1.0;
  double t0_ = 0.0;
};

/// Uniform B-spline basis of the given degree on the local parameter u in [0, 1].
/// Entry j multiplies the j-th active control point.
Eigen::VectorXd uniform_basis(int degree, double u);

/// Control points of the velocity (order 1) or acceleration (order 2) curve.
Eigen::MatrixXd derivative_ctrl_points(const Eigen::MatrixXd& q, double dt, int order);
Eigen::MatrixXd derivative_ctrl_points(const UniformBSpline& spline, int order);

/// Per axis: true iff every velocity control point is within v_max and every
/// acceleration control point within a_max in absolute value.
std::vector<bool> hull_feasible(const UniformBSpline& spline, double v_max, double a_max);
bool hull_feasible_all(const UniformBSpline& spline, double v_max, double a_max);

/// Smallest knot-span multiplier (>= 1) after which the hull check passes.
double feasibility_stretch_factor(const UniformBSpline& spline, double v_max, double a_max);

/// Boundary derivatives for fitting. Velocities are required; accelerations are optional.
struct BoundaryDerivatives {
  Eigen::VectorXd start_velocity;
  Eigen::VectorXd end_velocity;
  std::optional<Eigen::VectorXd> start_acceleration;
  std::optional<Eigen::VectorXd> end_acceleration;
};

struct FitResult {
  UniformBSpline spline;
  bool fallback = false;  // system was singular; straight-line control polygon returned
};

/// Least-squares fit through waypoints spaced dt apart in time. Boundary positions and
/// the given boundary derivatives are interpolated exactly; interior waypoints are approximated.
FitResult fit_through_points(const std::vector<Eigen::VectorXd>& waypoints, const BoundaryDerivatives& boundary,
                             double dt, int degree = 3, double t0 = 0.0);

/// Integral of the squared jerk over [a, b] (clamped into the domain), by Gauss-Legendre
/// quadrature per knot interval. Exact for polynomial pieces.
double jerk_energy(const UniformBSpline& spline, double a, double b);
/// Same integral by the trapezoid rule with `steps_per_span` steps per knot interval.
double jerk_energy_trapezoid(const UniformBSpline& spline, double a, double b, int steps_per_span = 10);

}  // namespace replan
