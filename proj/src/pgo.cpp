#include "replan/pgo.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <thread>

namespace replan {

void PgoConfig::validate() const {
  if (lambda_s < 0 || lambda_g < 0 || lambda_c < 0 || lambda_d < 0)
    raise(ErrorCode::kConfig, "pgo weights must be >= 0");
  if (!(d_min > 0)) raise(ErrorCode::kConfig, "d_min must be > 0");
  if (!(v_max > 0) || !(a_max > 0)) raise(ErrorCode::kConfig, "v_max and a_max must be > 0");
}

FreeRange free_range(const UniformBSpline& s) {
  const int n = s.num_control_points() - 1;
  const FreeRange r{s.degree(), n - s.degree()};
  if (r.count() < 1) raise(ErrorCode::kInvalidArgument, "spline has no free control points");
  return r;
}

std::vector<Vec3> guide_points(const PolyPath& path, const UniformBSpline& seed) {
  const FreeRange fr = free_range(seed);
  const int p = seed.degree();
  const int spans = seed.num_control_points() - p;
  std::vector<Vec3> g;
  g.reserve(fr.count());
  for (int i = fr.first; i <= fr.last; ++i) {
    const double greville = (i - 0.5 * (p - 1)) / spans;
    g.push_back(path.at(std::clamp(greville, 0.0, 1.0)));
  }
  return g;
}

double phase1_cost(const Eigen::MatrixXd& q, int degree, const std::vector<Vec3>& guide, const PgoConfig& cfg,
                   Eigen::MatrixXd* grad) {
  const int n = static_cast<int>(q.rows()) - 1;
  const int p = degree;
  if (static_cast<int>(guide.size()) != n - 2 * p + 1) raise(ErrorCode::kInvalidArgument, "guide size mismatch");
  if (grad) grad->setZero(q.rows(), q.cols());
  double cost = 0.0;
  for (int i = p - 1; i <= n - p + 1; ++i) {
    const Eigen::RowVectorXd d = q.row(i + 1) - 2.0 * q.row(i) + q.row(i - 1);
    cost += cfg.lambda_s * d.squaredNorm();
    if (grad) {
      const Eigen::RowVectorXd g = 2.0 * cfg.lambda_s * d;
      grad->row(i + 1) += g;
      grad->row(i) -= 2.0 * g;
      grad->row(i - 1) += g;
    }
  }
  for (int i = p; i <= n - p; ++i) {
    const Eigen::RowVectorXd d = q.row(i) - guide[i - p].transpose();
    cost += cfg.lambda_g * d.squaredNorm();
    if (grad) grad->row(i) += 2.0 * cfg.lambda_g * d;
  }
  if (grad) {
    grad->topRows(p).setZero();
    grad->bottomRows(p).setZero();
  }
  return cost;
}

UniformBSpline phase1_closed_form(const UniformBSpline& seed, const std::vector<Vec3>& guide, const PgoConfig& cfg) {
  const FreeRange fr = free_range(seed);
  const int p = seed.degree();
  const int n = seed.num_control_points() - 1;
  if (static_cast<int>(guide.size()) != fr.count()) raise(ErrorCode::kInvalidArgument, "guide size mismatch");
  if (seed.dim() != 3) raise(ErrorCode::kInvalidArgument, "phase 1 expects a 3D spline");

  // Second differences D over all control points, split into free and fixed columns.
  const int rows = n - 2 * p + 3;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, n + 1);
  for (int r = 0; r < rows; ++r) {
    const int i = p - 1 + r;
    d(r, i - 1) = 1.0;
    d(r, i) = -2.0;
    d(r, i + 1) = 1.0;
  }
  const int m = fr.count();
  const Eigen::MatrixXd d_free = d.middleCols(fr.first, m);
  Eigen::MatrixXd d_fixed(rows, n + 1 - m);
  d_fixed << d.leftCols(p), d.rightCols(p);
  const Eigen::MatrixXd& q = seed.control_points();
  Eigen::MatrixXd q_fixed(n + 1 - m, 3);
  q_fixed << q.topRows(p), q.bottomRows(p);

  Eigen::MatrixXd g(m, 3);
  for (int k = 0; k < m; ++k) g.row(k) = guide[k].transpose();

  const Eigen::MatrixXd h = cfg.lambda_s * d_free.transpose() * d_free + cfg.lambda_g * Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd rhs = cfg.lambda_g * g - cfg.lambda_s * d_free.transpose() * (d_fixed * q_fixed);
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success || !(cfg.lambda_s > 0 || cfg.lambda_g > 0))
    raise(ErrorCode::kConfig, "phase 1 system is singular (lambda_s = lambda_g = 0?)");
  Eigen::MatrixXd out = q;
  out.middleRows(fr.first, m) = llt.solve(rhs);
  return UniformBSpline(out, p, seed.knot_span(), seed.t0());
}

double phase2_cost_grad(const Eigen::MatrixXd& q, int degree, double dt, const VoxelMap& map, const PgoConfig& cfg,
                        Eigen::MatrixXd* grad, Phase2Terms* terms) {
  const int n = static_cast<int>(q.rows()) - 1;
  const int p = degree;
  const int dim = static_cast<int>(q.cols());
  if (n - 2 * p < 0) raise(ErrorCode::kInvalidArgument, "spline has no free control points");
  if (grad) grad->setZero(q.rows(), q.cols());
  Phase2Terms t;

  for (int i = p - 1; i <= n - p + 1; ++i) {
    const Eigen::RowVectorXd d = q.row(i + 1) - 2.0 * q.row(i) + q.row(i - 1);
    t.smooth += d.squaredNorm();
    if (grad) {
      const Eigen::RowVectorXd g = 2.0 * cfg.lambda_s * d;
      grad->row(i + 1) += g;
      grad->row(i) -= 2.0 * g;
      grad->row(i - 1) += g;
    }
  }

  for (int i = p; i <= n - p; ++i) {
    const Vec3 pt = q.row(i).transpose();
    if (!map.inside(pt)) continue;
    const auto [dist, dgrad] = map.distance_and_gradient(pt);
    t.collision += penalty(dist, cfg.d_min);
    if (grad) grad->row(i) += cfg.lambda_c * penalty_dx(dist, cfg.d_min) * dgrad.transpose();
  }

  const double v2 = cfg.v_max * cfg.v_max, a2 = cfg.a_max * cfg.a_max;
  for (int i = p - 1; i <= n - p; ++i) {
    for (int a = 0; a < dim; ++a) {
      const double v = (q(i + 1, a) - q(i, a)) / dt;
      t.velocity += penalty(v2, v * v);
      if (grad && v * v >= v2) {
        const double dv = cfg.lambda_d * 2.0 * (v2 - v * v) * (-2.0 * v) / dt;
        (*grad)(i + 1, a) += dv;
        (*grad)(i, a) -= dv;
      }
    }
  }
  for (int i = p - 2; i <= n - p; ++i) {
    for (int a = 0; a < dim; ++a) {
      const double acc = (q(i + 2, a) - 2.0 * q(i + 1, a) + q(i, a)) / (dt * dt);
      t.acceleration += penalty(a2, acc * acc);
      if (grad && acc * acc >= a2) {
        const double da = cfg.lambda_d * 2.0 * (a2 - acc * acc) * (-2.0 * acc) / (dt * dt);
        (*grad)(i + 2, a) += da;
        (*grad)(i + 1, a) -= 2.0 * da;
        (*grad)(i, a) += da;
      }
    }
  }
  if (grad) {
    grad->topRows(p).setZero();
    grad->bottomRows(p).setZero();
  }
  if (terms) *terms = t;
  return cfg.lambda_s * t.smooth + cfg.lambda_c * t.collision + cfg.lambda_d * (t.velocity + t.acceleration);
}

Phase2Result phase2_optimize(const UniformBSpline& warmup, const VoxelMap& map, const PgoConfig& cfg,
                             const ExtraCost& extra) {
  cfg.validate();
  const FreeRange fr = free_range(warmup);
  const int dim = warmup.dim();
  const int p = warmup.degree();
  const double dt = warmup.knot_span();
  Eigen::MatrixXd q = warmup.control_points();

  auto unpack = [&](const Eigen::VectorXd& x) {
    for (int k = 0; k < fr.count(); ++k)
      for (int a = 0; a < dim; ++a) q(fr.first + k, a) = x[k * dim + a];
  };
  Eigen::MatrixXd g, ge;
  auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    unpack(x);
    double c = phase2_cost_grad(q, p, dt, map, cfg, &g);
    if (extra) {
      ge.setZero(q.rows(), q.cols());
      c += extra(q, ge);
      g += ge;
    }
    for (int k = 0; k < fr.count(); ++k)
      for (int a = 0; a < dim; ++a) grad[k * dim + a] = g(fr.first + k, a);
    return c;
  };

  Eigen::VectorXd x0(fr.count() * dim);
  for (int k = 0; k < fr.count(); ++k)
    for (int a = 0; a < dim; ++a) x0[k * dim + a] = warmup.control_points()(fr.first + k, a);
  const MinimizeResult r = minimize_lbfgs(fn, x0, cfg.optimizer);
  q = warmup.control_points();
  unpack(r.x);
  Phase2Result out;
  out.spline = UniformBSpline(q, p, dt, warmup.t0());
  out.initial_cost = r.initial_cost;
  out.cost = r.cost;
  out.iterations = r.iterations;
  out.cost_history = r.cost_history;
  return out;
}

bool trajectory_clear(const UniformBSpline& s, const VoxelMap& map, double clearance, double step) {
  const int n = std::max(1, static_cast<int>(std::ceil(s.duration() / step)));
  for (int i = 0; i <= n; ++i) {
    const Vec3 pt = s.evaluate(s.t_begin() + s.duration() * i / n);
    if (!map.inside(pt) || map.distance(pt) < clearance) return false;
  }
  return true;
}

PgoOutput pgo_parallel(const UniformBSpline& seed, const std::vector<PolyPath>& guides, const VoxelMap& map,
                       const PgoConfig& cfg, bool parallel) {
  cfg.validate();
  if (guides.empty()) raise(ErrorCode::kInvalidArgument, "pgo needs at least one guide");
  PgoOutput out;
  out.guides.resize(guides.size());
  const double step = map.resolution() / (2.0 * cfg.v_max);

  auto run = [&](std::size_t k) {
    GuideResult& r = out.guides[k];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const UniformBSpline warm = phase1_closed_form(seed, guide_points(guides[k], seed), cfg);
      const Phase2Result p2 = phase2_optimize(warm, map, cfg);
      r.iterations = p2.iterations;
      r.stretch = feasibility_stretch_factor(p2.spline, cfg.v_max, cfg.a_max);
      r.spline = r.stretch > 1.0 ? p2.spline.time_stretched(r.stretch) : p2.spline;
      r.cost = r.stretch > 1.0 ? phase2_cost_grad(r.spline.control_points(), r.spline.degree(), r.spline.knot_span(),
                                                  map, cfg)
                               : p2.cost;
      r.length = r.spline.length();
      if (!std::isfinite(r.cost))
        r.error = "non-finite cost";
      else if (!hull_feasible_all(r.spline, cfg.v_max, cfg.a_max))
        r.error = "dynamics";
      else if (!trajectory_clear(r.spline, map, cfg.feasible_clearance, step))
        r.error = "clearance";
      r.feasible = r.error.empty();
    } catch (const Error& e) {
      r.error = e.what();
      r.feasible = false;
    }
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };

  if (parallel && guides.size() > 1) {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < guides.size(); ++k) pool.emplace_back(run, k);
    for (auto& th : pool) th.join();
  } else {
    for (std::size_t k = 0; k < guides.size(); ++k) run(k);
  }

  for (std::size_t k = 0; k < guides.size(); ++k) {
    const GuideResult& r = out.guides[k];
    if (!r.feasible) continue;
    if (out.chosen < 0) {
      out.chosen = static_cast<int>(k);
      continue;
    }
    const GuideResult& b = out.guides[out.chosen];
    const double tol = 1e-12 * std::max(1.0, std::abs(b.cost));
    if (r.cost < b.cost - tol || (std::abs(r.cost - b.cost) <= tol && r.length < b.length))
      out.chosen = static_cast<int>(k);
  }
  if (out.chosen < 0) {
    std::string why;
    for (std::size_t k = 0; k < guides.size(); ++k) why += (k ? ", " : "") + out.guides[k].error;
    raise(ErrorCode::kInfeasible, "no guide produced a feasible trajectory (" + why + ")");
  }
  out.best = out.guides[out.chosen].spline;
  return out;
}

}  // namespace replan
