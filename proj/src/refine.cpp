#include "replan/refine.hpp"

#include <cmath>
#include <limits>

namespace replan {

void RefineConfig::validate() const {
  if (!(alpha > 1.0)) raise(ErrorCode::kConfig, "alpha must be > 1");
  if (!(psi_min > 0.0)) raise(ErrorCode::kConfig, "psi_min must be > 0");
  if (r_q < 0.0) raise(ErrorCode::kConfig, "R_q must be >= 0");
  if (delta_v < 0.0 || lambda_r < 0.0 || w_r < 0.0) raise(ErrorCode::kConfig, "refine weights must be >= 0");
  if (max_outer < 1) raise(ErrorCode::kConfig, "max_outer must be >= 1");
}

namespace {

double step_of(const UniformBSpline& s, const RefineConfig& cfg) {
  return cfg.step > 0.0 ? cfg.step : s.knot_span() / 4.0;
}

// Sample times t_begin, t_begin + step, ..., up to `until` (inclusive, clamped to the domain).
std::vector<double> sample_times(const UniformBSpline& s, double until, double step) {
  std::vector<double> ts;
  const double end = std::min(until, s.t_end());
  for (int k = 0;; ++k) {
    const double t = s.t_begin() + k * step;
    if (t > end + 1e-12) break;
    ts.push_back(std::min(t, end));
  }
  if (ts.empty() || ts.back() < end - 1e-12) ts.push_back(end);
  return ts;
}

}  // namespace

std::optional<FrontierHit> frontier_intersection(const UniformBSpline& traj, const VoxelMap& map, double step) {
  for (double t : sample_times(traj, traj.t_end(), step)) {
    const Vec3 p = traj.evaluate(t);
    if (!map.inside(p) || map.state_at(p) == VoxelState::kUnknown) return FrontierHit{t, p};
  }
  return std::nullopt;
}

double visibility_level(const Vec3& p, const Vec3& p_f, const VoxelMap& map) {
  if (!map.inside(p) || !map.inside(p_f)) raise(ErrorCode::kBounds, "visibility segment leaves the map");
  const int n = std::max(1, static_cast<int>(std::ceil(2.0 * (p_f - p).norm() / map.resolution())));
  double psi = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) psi = std::min(psi, map.distance(p + (p_f - p) * (static_cast<double>(i) / n)));
  return psi;
}

VisibilityStatus critical_view(const UniformBSpline& traj, const Vec3& p_f, double t_f, const VoxelMap& map,
                               const RefineConfig& cfg) {
  VisibilityStatus v;
  v.t_f = t_f;
  v.p_f = p_f;
  const std::vector<double> ts = sample_times(traj, t_f, step_of(traj, cfg));
  int last_below = -1;
  for (int k = 0; k < static_cast<int>(ts.size()); ++k)
    if (visibility_level(traj.evaluate(ts[k]), p_f, map) < cfg.psi_min) last_below = k;
  if (last_below < 0) {
    v.visible_always = true;
    return v;
  }
  if (last_below + 1 < static_cast<int>(ts.size()) && ts[last_below + 1] < t_f - 1e-12) {
    v.t_c = ts[last_below + 1];
  } else {
    v.t_c = t_f;
    v.degenerate = true;
  }
  v.p_c = traj.evaluate(v.t_c);
  const Vec3 d = v.p_c - p_f;
  if (d.norm() > 1e-9) {
    v.v_c = d.normalized();
  } else {
    // Looking back along the path into where the vehicle comes from.
    const Vec3 vel = traj.evaluate(t_f, 1);
    v.v_c = vel.norm() > 1e-9 ? Vec3(-vel.normalized()) : Vec3::UnitX();
    v.degenerate = true;
  }
  return v;
}

double fdv_fdsf_cost_grad(const UniformBSpline& traj, const Eigen::MatrixXd& q, const Vec3& p_f, const Vec3& v_c,
                          double t_s, double d_s, double delta_v, double w_r, Eigen::MatrixXd* grad, double* dv_norm) {
  const BasisWeights b = traj.basis(t_s, 0);
  const int k = static_cast<int>(b.weights.size());
  const Vec3 p = q.middleRows(b.first, k).transpose() * b.weights;
  const Vec3 e = p - p_f;
  const Eigen::Matrix3d proj = Eigen::Matrix3d::Identity() - v_c * v_c.transpose();
  const Vec3 dv = proj * e;
  const double ndv = dv.norm(), ne = e.norm();
  if (dv_norm) *dv_norm = ndv;
  const double cost = penalty(delta_v, ndv) + w_r * penalty(ne, d_s);

  if (grad) {
    grad->setZero(q.rows(), q.cols());
    Vec3 dp = Vec3::Zero();
    if (ndv > delta_v && ndv > 0.0) dp += (2.0 * (ndv - delta_v) / ndv) * (proj * dv);
    if (ne <= d_s && ne > 0.0) dp += w_r * (2.0 * (ne - d_s) / ne) * e;
    for (int j = 0; j < k; ++j) grad->row(b.first + j) += b.weights[j] * dp.transpose();
  }
  return cost;
}

RefineResult refine_trajectory(const UniformBSpline& best, const VoxelMap& map, const PgoConfig& pgo_cfg,
                               const RefineConfig& cfg) {
  cfg.validate();
  RefineResult out{best, {}};
  RefineDiagnostics& d = out.diag;
  const double step = step_of(best, cfg);
  const double a_max = pgo_cfg.a_max;

  const auto hit = frontier_intersection(best, map, step);
  if (!hit) return out;
  d.has_frontier = true;
  d.vis = critical_view(best, hit->p_f, hit->t_f, map, cfg);
  if (d.vis.visible_always) return out;

  const double v_c = best.evaluate(d.vis.t_c, 1).norm();
  const double d_cf = (d.vis.p_c - d.vis.p_f).norm();
  if (worst_case_safe(v_c, d_cf, a_max, cfg.r_q)) {
    d.already_safe = true;
    return out;
  }

  // Average speed on [t_0, t_f].
  const std::vector<double> pre = sample_times(best, d.vis.t_f, step);
  double v_hat = 0.0;
  for (double t : pre) v_hat += best.evaluate(t, 1).norm();
  v_hat /= static_cast<double>(pre.size());
  d.v_hat0 = v_hat;
  const int bound = v_hat > 0.0 && pgo_cfg.v_max > v_hat
                        ? static_cast<int>(std::ceil(std::log(pgo_cfg.v_max / v_hat) / std::log(cfg.alpha))) + 1
                        : 1;
  d.iteration_cap = std::min(cfg.max_outer, bound);
  d.optimized = true;

  const Vec3 p_f = d.vis.p_f, vc = d.vis.v_c;
  const double clear_step = map.resolution() / (2.0 * pgo_cfg.v_max);
  UniformBSpline cur = best;
  for (int it = 1; it <= d.iteration_cap; ++it) {
    d.iterations = it;
    const double d_s = v_hat * v_hat / (2.0 * a_max) + cfg.r_q;

    // t_s: least constraint violation on the current trajectory, t in [t_0, t_c].
    double t_s = cur.t_begin(), best_v = std::numeric_limits<double>::infinity();
    for (double t : sample_times(cur, std::min(d.vis.t_c, cur.t_end()), step)) {
      const double c = fdv_fdsf_cost_grad(cur, cur.control_points(), p_f, vc, t, d_s, cfg.delta_v, cfg.w_r);
      if (c < best_v) {
        best_v = c;
        t_s = t;
      }
    }

    const UniformBSpline frame = cur;
    const ExtraCost extra = [&](const Eigen::MatrixXd& q, Eigen::MatrixXd& g) {
      const double c = fdv_fdsf_cost_grad(frame, q, p_f, vc, t_s, d_s, cfg.delta_v, cfg.w_r, &g);
      g *= cfg.lambda_r;
      return cfg.lambda_r * c;
    };
    UniformBSpline refined = phase2_optimize(cur, map, pgo_cfg, extra).spline;
    const double r = feasibility_stretch_factor(refined, pgo_cfg.v_max, a_max);
    double t_eval = t_s;
    if (r > 1.0) {
      refined = refined.time_stretched(r);
      t_eval = refined.t0() + r * (t_s - refined.t0());
    }
    d.t_s = t_eval;
    d.v_s = refined.evaluate(t_eval, 1).norm();
    d.d_sf = (refined.evaluate(t_eval) - p_f).norm();
    fdv_fdsf_cost_grad(refined, refined.control_points(), p_f, vc, t_eval, d_s, cfg.delta_v, cfg.w_r, nullptr,
                       &d.dv_norm);
    d.slack = d.d_sf - cfg.r_q - d.v_s * d.v_s / (2.0 * a_max);
    const bool clear = trajectory_clear(refined, map, pgo_cfg.feasible_clearance, clear_step);
    if (clear && worst_case_safe(d.v_s, d.d_sf, a_max, cfg.r_q)) {
      d.success = true;
      out.spline = refined;
      return out;
    }
    if (clear) cur = refined;
    v_hat *= cfg.alpha;
  }

  // Iteration cap: slow the input down until the criterion holds at the critical view.
  d.success = false;
  if (d_cf <= cfg.r_q) {
    d.hard_failure = true;
    return out;
  }
  const double r = std::max(1.0, v_c / std::sqrt(2.0 * a_max * (d_cf - cfg.r_q)) * (1.0 + 1e-9));
  out.spline = best.time_stretched(r);
  d.fallback_stretch = true;
  d.t_s = best.t0() + r * (d.vis.t_c - best.t0());
  d.v_s = out.spline.evaluate(d.t_s, 1).norm();
  d.d_sf = d_cf;
  d.slack = d.d_sf - cfg.r_q - d.v_s * d.v_s / (2.0 * a_max);
  return out;
}

}  // namespace replan
