#include "replan/bspline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace replan {

namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Weights over q_m .. q_{m+p} for derivative `order` at local parameter u of span m.
Eigen::VectorXd span_weights(int degree, int order, double u, double dt) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(degree + 1);
  if (order > degree) return w;
  const Eigen::VectorXd beta = uniform_basis(degree - order, u);
  const double scale = 1.0 / std::pow(dt, order);
  for (int j = 0; j <= degree - order; ++j)
    for (int k = 0; k <= order; ++k) {
      const double sign = ((order - k) % 2 == 0) ? 1.0 : -1.0;
      w[j + k] += beta[j] * sign * binomial(order, k) * scale;
    }
  return w;
}

}  // namespace

Eigen::VectorXd uniform_basis(int degree, double u) {
  Eigen::VectorXd b = Eigen::VectorXd::Ones(1);
  for (int d = 1; d <= degree; ++d) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(d + 1);
    for (int j = 0; j <= d; ++j) {
      double acc = 0.0;
      if (j - 1 >= 0) acc += (u + d - j) * b[j - 1];
      if (j <= d - 1) acc += (j + 1 - u) * b[j];
      next[j] = acc / d;
    }
    b = std::move(next);
  }
  return b;
}

UniformBSpline::UniformBSpline(Eigen::MatrixXd control_points, int degree, double knot_span, double t0)
    : ctrl_(std::move(control_points)), degree_(degree), dt_(knot_span), t0_(t0) {
  if (degree_ < 0) raise(ErrorCode::kInvalidArgument, "spline degree must be non-negative");
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) raise(ErrorCode::kInvalidArgument, "knot span must be positive");
  if (ctrl_.rows() < degree_ + 1) {
    std::ostringstream os;
    os << "degree " << degree_ << " spline needs at least " << degree_ + 1 << " control points, got " << ctrl_.rows();
    raise(ErrorCode::kInvalidArgument, os.str());
  }
  if (ctrl_.cols() < 1) raise(ErrorCode::kInvalidArgument, "control points need at least one dimension");
}

bool UniformBSpline::in_domain(double t) const {
  const double eps = 1e-9 * std::max(1.0, std::abs(t));
  return t >= t_begin() - eps && t <= t_end() + eps;
}

double UniformBSpline::clamp_time(double t) const { return std::clamp(t, t_begin(), t_end()); }

BasisWeights UniformBSpline::basis(double t, int order) const {
  if (order < 0 || order > degree_) {
    std::ostringstream os;
    os << "derivative order " << order << " not in [0, " << degree_ << "]";
    raise(ErrorCode::kInvalidArgument, os.str());
  }
  if (!in_domain(t)) {
    std::ostringstream os;
    os << "t = " << t << " outside [" << t_begin() << ", " << t_end() << "]";
    raise(ErrorCode::kDomain, os.str());
  }
  const int spans = num_control_points() - degree_;
  const double s = (clamp_time(t) - t0_) / dt_;
  const int m = std::clamp(static_cast<int>(std::floor(s)), 0, spans - 1);
  const double u = std::clamp(s - m, 0.0, 1.0);
  return {m, span_weights(degree_, order, u, dt_)};
}

Eigen::VectorXd UniformBSpline::evaluate(double t, int order) const {
  const BasisWeights b = basis(t, order);
  return (ctrl_.middleRows(b.first, degree_ + 1).transpose() * b.weights).eval();
}

UniformBSpline UniformBSpline::derivative() const {
  if (degree_ < 1) raise(ErrorCode::kInvalidArgument, "cannot differentiate a degree 0 spline");
  return UniformBSpline(derivative_ctrl_points(ctrl_, dt_, 1), degree_ - 1, dt_, t0_);
}

UniformBSpline UniformBSpline::time_stretched(double factor) const {
  if (!(factor > 0.0)) raise(ErrorCode::kInvalidArgument, "stretch factor must be positive");
  return UniformBSpline(ctrl_, degree_, dt_ * factor, t0_);
}

double UniformBSpline::length(int samples_per_span) const {
  const int n = std::max(1, samples_per_span * (num_control_points() - degree_));
  double len = 0.0;
  Eigen::VectorXd prev = evaluate(t_begin());
  for (int i = 1; i <= n; ++i) {
    const double t = t_begin() + duration() * i / n;
    Eigen::VectorXd cur = evaluate(t);
    len += (cur - prev).norm();
    prev = std::move(cur);
  }
  return len;
}

Eigen::MatrixXd derivative_ctrl_points(const Eigen::MatrixXd& q, double dt, int order) {
  if (order < 1 || order > 2) raise(ErrorCode::kInvalidArgument, "derivative order must be 1 or 2");
  if (q.rows() <= order) raise(ErrorCode::kInvalidArgument, "too few control points for derivative");
  if (order == 1) return (q.bottomRows(q.rows() - 1) - q.topRows(q.rows() - 1)) / dt;
  const auto n = q.rows() - 2;
  return (q.bottomRows(n) - 2.0 * q.middleRows(1, n) + q.topRows(n)) / (dt * dt);
}

Eigen::MatrixXd derivative_ctrl_points(const UniformBSpline& s, int order) {
  return derivative_ctrl_points(s.control_points(), s.knot_span(), order);
}

std::vector<bool> hull_feasible(const UniformBSpline& s, double v_max, double a_max) {
  std::vector<bool> ok(s.dim(), true);
  const Eigen::MatrixXd& q = s.control_points();
  if (q.rows() >= 2) {
    const Eigen::MatrixXd v = derivative_ctrl_points(q, s.knot_span(), 1);
    for (int a = 0; a < s.dim(); ++a)
      if (v.col(a).cwiseAbs().maxCoeff() > v_max) ok[a] = false;
  }
  if (q.rows() >= 3) {
    const Eigen::MatrixXd acc = derivative_ctrl_points(q, s.knot_span(), 2);
    for (int a = 0; a < s.dim(); ++a)
      if (acc.col(a).cwiseAbs().maxCoeff() > a_max) ok[a] = false;
  }
  return ok;
}

bool hull_feasible_all(const UniformBSpline& s, double v_max, double a_max) {
  const auto ok = hull_feasible(s, v_max, a_max);
  return std::all_of(ok.begin(), ok.end(), [](bool b) { return b; });
}

double feasibility_stretch_factor(const UniformBSpline& s, double v_max, double a_max) {
  const Eigen::MatrixXd& q = s.control_points();
  double factor = 1.0;
  if (q.rows() >= 2) {
    const double vm = derivative_ctrl_points(q, s.knot_span(), 1).cwiseAbs().maxCoeff();
    factor = std::max(factor, vm / v_max);
  }
  if (q.rows() >= 3) {
    const double am = derivative_ctrl_points(q, s.knot_span(), 2).cwiseAbs().maxCoeff();
    factor = std::max(factor, std::sqrt(am / a_max));
  }
  if (factor > 1.0) {
    // Nudge past rounding so the stretched spline passes the strict check.
    double f = factor * (1.0 + 1e-12);
    while (!hull_feasible_all(s.time_stretched(f), v_max, a_max)) f *= 1.0 + 1e-9;
    factor = f;
  }
  return factor;
}

FitResult fit_through_points(const std::vector<Eigen::VectorXd>& waypoints, const BoundaryDerivatives& boundary,
                             double dt, int degree, double t0) {
  if (waypoints.size() < 2) raise(ErrorCode::kInvalidArgument, "fit needs at least two waypoints");
  if (degree < 2) raise(ErrorCode::kInvalidArgument, "fit needs degree >= 2");
  const int dim = static_cast<int>(waypoints.front().size());
  const int k_last = static_cast<int>(waypoints.size()) - 1;
  const int n = k_last + degree;  // control point count
  const double t_end = t0 + k_last * dt;

  // Row builder over the full control vector.
  auto row_at = [&](double t, int order) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
    const int spans = n - degree;
    const double s = (t - t0) / dt;
    const int m = std::clamp(static_cast<int>(std::floor(s)), 0, spans - 1);
    const double u = std::clamp(s - m, 0.0, 1.0);
    row.segment(m, degree + 1) = span_weights(degree, order, u, dt).transpose();
    return row;
  };

  std::vector<Eigen::RowVectorXd> eq_rows, ls_rows;
  std::vector<Eigen::VectorXd> eq_rhs, ls_rhs;
  eq_rows.push_back(row_at(t0, 0));
  eq_rhs.push_back(waypoints.front());
  eq_rows.push_back(row_at(t_end, 0));
  eq_rhs.push_back(waypoints.back());
  eq_rows.push_back(row_at(t0, 1));
  eq_rhs.push_back(boundary.start_velocity);
  eq_rows.push_back(row_at(t_end, 1));
  eq_rhs.push_back(boundary.end_velocity);
  if (boundary.start_acceleration) {
    eq_rows.push_back(row_at(t0, 2));
    eq_rhs.push_back(*boundary.start_acceleration);
  }
  if (boundary.end_acceleration) {
    eq_rows.push_back(row_at(t_end, 2));
    eq_rhs.push_back(*boundary.end_acceleration);
  }
  for (int k = 1; k < k_last; ++k) {
    ls_rows.push_back(row_at(t0 + k * dt, 0));
    ls_rhs.push_back(waypoints[k]);
  }
  for (const auto& r : eq_rhs)
    if (r.size() != dim) raise(ErrorCode::kInvalidArgument, "boundary derivative dimension mismatch");

  const int m_eq = static_cast<int>(eq_rows.size());
  const int m_ls = static_cast<int>(ls_rows.size());
  Eigen::MatrixXd a_ls(m_ls, n), b_ls(m_ls, dim), c(m_eq, n), d(m_eq, dim);
  for (int i = 0; i < m_ls; ++i) {
    a_ls.row(i) = ls_rows[i];
    b_ls.row(i) = ls_rhs[i].transpose();
  }
  for (int i = 0; i < m_eq; ++i) {
    c.row(i) = eq_rows[i];
    d.row(i) = eq_rhs[i].transpose();
  }
  // Small third-difference regularizer keeps the system definite when the
  // waypoints underdetermine the control points.
  Eigen::MatrixXd reg = Eigen::MatrixXd::Zero(std::max(0, n - 3), n);
  for (int i = 0; i + 3 < n; ++i) reg.row(i).segment(i, 4) << -1.0, 3.0, -3.0, 1.0;
  const double eps = 1e-9;

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m_eq, n + m_eq);
  kkt.topLeftCorner(n, n) = 2.0 * (a_ls.transpose() * a_ls + eps * reg.transpose() * reg);
  kkt.topRightCorner(n, m_eq) = c.transpose();
  kkt.bottomLeftCorner(m_eq, n) = c;
  Eigen::MatrixXd rhs(n + m_eq, dim);
  rhs.topRows(n) = 2.0 * a_ls.transpose() * b_ls;
  rhs.bottomRows(m_eq) = d;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  bool singular = !lu.isInvertible();
  Eigen::MatrixXd ctrl;
  if (!singular) {
    const Eigen::MatrixXd sol = lu.solve(rhs);
    ctrl = sol.topRows(n);
    const double residual = (c * ctrl - d).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
    singular = !ctrl.allFinite() || residual > 1e-8 * scale;
  }
  if (singular) {
    // Control points evenly along the chord line at their Greville abscissae, so the
    // curve runs from a to b at constant speed.
    ctrl.resize(n, dim);
    const Eigen::RowVectorXd a = waypoints.front().transpose();
    const Eigen::RowVectorXd b = waypoints.back().transpose();
    for (int i = 0; i < n; ++i) {
      const double s = (i - 0.5 * (degree - 1)) / k_last;
      ctrl.row(i) = a + s * (b - a);
    }
    return {UniformBSpline(ctrl, degree, dt, t0), true};
  }
  return {UniformBSpline(ctrl, degree, dt, t0), false};
}

namespace {

template <typename Rule>
double integrate_jerk(const UniformBSpline& s, double a, double b, Rule&& rule) {
  if (s.degree() < 3) return 0.0;
  a = s.clamp_time(a);
  b = s.clamp_time(b);
  if (b <= a) return 0.0;
  const int spans = s.num_control_points() - s.degree();
  const double dt = s.knot_span();
  const Eigen::MatrixXd& q = s.control_points();
  double total = 0.0;
  for (int m = 0; m < spans; ++m) {
    const double lo = std::max(a, s.t0() + m * dt);
    const double hi = std::min(b, s.t0() + (m + 1) * dt);
    if (hi <= lo) continue;
    auto jerk_sq = [&](double t) {
      const double u = std::clamp((t - s.t0()) / dt - m, 0.0, 1.0);
      const Eigen::VectorXd w = span_weights(s.degree(), 3, u, dt);
      return (q.middleRows(m, s.degree() + 1).transpose() * w).squaredNorm();
    };
    total += rule(jerk_sq, lo, hi);
  }
  return total;
}

constexpr std::array<double, 5> kGaussX = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                          0.9061798459386640};
constexpr std::array<double, 5> kGaussW = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                          0.4786286704993665, 0.2369268850561891};

}  // namespace

double jerk_energy(const UniformBSpline& s, double a, double b) {
  return integrate_jerk(s, a, b, [](auto&& f, double lo, double hi) {
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    double acc = 0.0;
    for (int i = 0; i < 5; ++i) acc += kGaussW[i] * f(mid + half * kGaussX[i]);
    return acc * half;
  });
}

double jerk_energy_trapezoid(const UniformBSpline& s, double a, double b, int steps_per_span) {
  const double h_nominal = s.knot_span() / std::max(1, steps_per_span);
  return integrate_jerk(s, a, b, [&](auto&& f, double lo, double hi) {
    const int n = std::max(1, static_cast<int>(std::ceil((hi - lo) / h_nominal - 1e-9)));
    const double h = (hi - lo) / n;
    double acc = 0.5 * (f(lo) + f(hi));
    for (int i = 1; i < n; ++i) acc += f(lo + i * h);
    return acc * h;
  });
}

}  // namespace replan
