#include <doctest.h>

#include <cmath>
#include <random>

#include "replan/pgo.hpp"

using namespace replan;

namespace {

VoxelMap empty_map() {
  VoxelMap map(Vec3::Zero(), 0.1, Idx3(80, 60, 30));
  map.fill(VoxelState::kFree);
  map.compute_esdf();
  return map;
}

VoxelMap box_map() {
  VoxelMap map(Vec3::Zero(), 0.1, Idx3(80, 60, 30));
  map.fill(VoxelState::kFree);
  for (std::size_t n = 0; n < map.size(); ++n) {
    const Vec3 c = map.center(map.unravel(n));
    if (c.x() > 3.5 && c.x() < 4.5 && c.y() > 2.0 && c.y() < 4.0) map.set_state(n, VoxelState::kOccupied);
  }
  map.compute_esdf();
  return map;
}

// Evenly spaced control points on the segment; the curve runs a -> b at constant speed.
UniformBSpline line_seed(const Vec3& a, const Vec3& b, int n_ctrl, double dt) {
  Eigen::MatrixXd q(n_ctrl, 3);
  const int spans = n_ctrl - 3;
  for (int i = 0; i < n_ctrl; ++i) q.row(i) = (a + (b - a) * ((i - 1.0) / spans)).transpose();
  return UniformBSpline(q, 3, dt);
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(1e-6, b.norm());
}

// Central differences over the free rows.
template <typename F>
Eigen::MatrixXd numeric_grad(const Eigen::MatrixXd& q, int p, F&& f, double h = 1e-6) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  for (int i = p; i < q.rows() - p; ++i)
    for (int a = 0; a < q.cols(); ++a) {
      Eigen::MatrixXd qp = q, qm = q;
      qp(i, a) += h;
      qm(i, a) -= h;
      g(i, a) = (f(qp) - f(qm)) / (2.0 * h);
    }
  return g;
}

const Vec3 kStart(1.0, 3.0, 1.5), kGoal(7.0, 3.0, 1.5);

}  // namespace

TEST_CASE("penalty function") {
  CHECK(penalty(1.0, 2.0) == 1.0);
  CHECK(penalty(3.0, 2.0) == 0.0);
  CHECK(penalty(2.0, 2.0) == 0.0);
  CHECK(penalty_dx(2.0, 2.0) == 0.0);
  CHECK(penalty_dx(2.0 - 1e-9, 2.0) == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(penalty_dx(2.0 + 1e-9, 2.0) == 0.0);
}

TEST_CASE("phase 1 examples") {
  const UniformBSpline seed = line_seed(kStart, kGoal, 12, 0.3);
  std::vector<Vec3> guide;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 3; i <= 8; ++i) guide.push_back(Vec3(g(rng), g(rng), g(rng)));
  PgoConfig cfg;
  cfg.lambda_s = 0.0;
  const UniformBSpline w = phase1_closed_form(seed, guide, cfg);
  for (int i = 3; i <= 8; ++i) CHECK((w.control_points().row(i).transpose() - guide[i - 3]).norm() < 1e-12);
  CHECK(w.control_points().topRows(3) == seed.control_points().topRows(3));
  CHECK(w.control_points().bottomRows(3) == seed.control_points().bottomRows(3));

  cfg.lambda_s = 1.0;
  std::vector<Vec3> on_line;
  for (int i = 3; i <= 8; ++i) on_line.push_back(seed.control_points().row(i).transpose());
  const UniformBSpline l = phase1_closed_form(seed, on_line, cfg);
  Eigen::MatrixXd grad;
  phase1_cost(l.control_points(), 3, on_line, cfg, &grad);
  CHECK(derivative_ctrl_points(l.control_points(), 1.0, 2).norm() < 1e-9);

  cfg.lambda_s = cfg.lambda_g = 0.0;
  CHECK_THROWS_AS(phase1_closed_form(seed, guide, cfg), Error);
}

TEST_CASE("phase 1 closed form beats gradient descent") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> lam(0.1, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n_ctrl = 8 + trial % 6;
    Eigen::MatrixXd q(n_ctrl, 3);
    for (int i = 0; i < n_ctrl; ++i) q.row(i) << g(rng), g(rng), g(rng);
    const UniformBSpline seed(q, 3, 0.4);
    std::vector<Vec3> guide;
    for (int i = 3; i <= n_ctrl - 4; ++i) guide.push_back(Vec3(g(rng), g(rng), g(rng)));
    PgoConfig cfg;
    cfg.lambda_s = lam(rng);
    cfg.lambda_g = lam(rng);
    const UniformBSpline w = phase1_closed_form(seed, guide, cfg);
    Eigen::MatrixXd grad;
    const double best = phase1_cost(w.control_points(), 3, guide, cfg, &grad);
    REQUIRE(grad.norm() < 1e-8);

    // Plain gradient descent with a fixed safe step.
    Eigen::MatrixXd x = q;
    const double step = 1.0 / (2.0 * (16.0 * cfg.lambda_s + cfg.lambda_g));
    double c = 0.0;
    for (int it = 0; it < 10000; ++it) {
      c = phase1_cost(x, 3, guide, cfg, &grad);
      x -= step * grad;
    }
    c = phase1_cost(x, 3, guide, cfg);
    REQUIRE(best <= c + 1e-8);
  }
}

TEST_CASE("phase 2 penalties inactive far from obstacles") {
  const VoxelMap map = empty_map();
  const UniformBSpline s = line_seed(kStart, kGoal, 12, 0.5);
  PgoConfig cfg;
  cfg.d_min = 0.4;
  Eigen::MatrixXd grad;
  Phase2Terms t;
  const double c = phase2_cost_grad(s.control_points(), 3, 0.5, map, cfg, &grad, &t);
  CHECK(t.collision == 0.0);
  CHECK(t.velocity == 0.0);
  CHECK(t.acceleration == 0.0);
  CHECK(c == doctest::Approx(cfg.lambda_s * t.smooth));
  CHECK(grad.norm() < 1e-12);  // straight evenly spaced line: smoothness is stationary too
}

TEST_CASE("phase 2 collision term at half clearance") {
  VoxelMap map(Vec3::Zero(), 0.1, Idx3(80, 60, 30));
  map.fill(VoxelState::kFree);
  map.set_state(map.index_of(Vec3(4.05, 3.05, 1.55)), VoxelState::kOccupied);
  map.compute_esdf();
  // Straight line at y = 4.05 except control point 5, which sits 0.2 m from the voxel.
  const UniformBSpline base = line_seed(Vec3(0.55, 4.05, 1.55), Vec3(7.55, 4.05, 1.55), 12, 0.5);
  Eigen::MatrixXd q = base.control_points();
  q.row(5) << 4.05, 3.25, 1.55;
  PgoConfig cfg;
  cfg.d_min = 0.4;
  Phase2Terms t;
  phase2_cost_grad(q, 3, 0.5, map, cfg, nullptr, &t);
  CHECK(t.collision == doctest::Approx(0.04).epsilon(1e-12));
}

TEST_CASE("phase 2 gradients match finite differences per term") {
  const VoxelMap map = box_map();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ux(2.8, 5.2), uy(1.3, 4.7), uz(0.5, 2.5), jit(-0.3, 0.3);
  const double res = map.resolution();
  auto near_cell_boundary = [&](const Eigen::MatrixXd& q) {
    for (int i = 0; i < q.rows(); ++i) {
      const Vec3 g = (Vec3(q.row(i).transpose()) - map.origin()) / res - Vec3::Constant(0.5);
      const Vec3 f = g - g.array().floor().matrix();
      if ((f.array() < 1e-4).any() || (f.array() > 1 - 1e-4).any()) return true;
    }
    return false;
  };
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const int n_ctrl = 10;
    Eigen::MatrixXd q(n_ctrl, 3);
    Vec3 p(ux(rng), uy(rng), uz(rng));
    for (int i = 0; i < n_ctrl; ++i) {
      q.row(i) = p.transpose();
      p += Vec3(jit(rng), jit(rng), jit(rng));
      p = p.cwiseMax(Vec3(0.3, 0.3, 0.3)).cwiseMin(Vec3(7.7, 5.7, 2.7));
    }
    if (near_cell_boundary(q)) continue;
    const double dt = 0.15 + 0.1 * (trial % 3);
    PgoConfig base;
    base.d_min = 0.6;
    for (int term = 0; term < 4; ++term) {
      PgoConfig cfg = base;
      cfg.lambda_s = term == 0 ? 1.0 : 0.0;
      cfg.lambda_c = term == 1 ? 1.0 : 0.0;
      cfg.lambda_d = term >= 2 ? 1.0 : 0.0;
      if (term == 2) cfg.a_max = 1e6;  // velocity only
      if (term == 3) cfg.v_max = 1e6;  // acceleration only
      auto f = [&](const Eigen::MatrixXd& x) { return phase2_cost_grad(x, 3, dt, map, cfg); };
      Eigen::MatrixXd g;
      phase2_cost_grad(q, 3, dt, map, cfg, &g);
      const Eigen::MatrixXd fd = numeric_grad(q, 3, f, h);
      REQUIRE(rel_err(g, fd) < 1e-4);
    }
  }
}

TEST_CASE("phase 2 leaves an optimal straight line alone") {
  const VoxelMap map = empty_map();
  const UniformBSpline s = line_seed(kStart, kGoal, 14, 0.5);
  PgoConfig cfg;
  const Phase2Result r = phase2_optimize(s, map, cfg);
  CHECK((r.spline.control_points() - s.control_points()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("phase 2 pushes a grazing trajectory clear") {
  const VoxelMap map = box_map();
  // Straight line skimming the box side at y = 4.1.
  const UniformBSpline s = line_seed(Vec3(1.0, 4.1, 1.5), Vec3(7.0, 4.1, 1.5), 20, 0.3);
  PgoConfig cfg;
  cfg.d_min = 0.5;
  cfg.lambda_c = 50.0;
  const Phase2Result r = phase2_optimize(s, map, cfg);
  CHECK(r.cost <= r.initial_cost);
  for (std::size_t i = 1; i < r.cost_history.size(); ++i) CHECK(r.cost_history[i] <= r.cost_history[i - 1]);
  double worst = 1e9;
  for (int i = 0; i <= 1000; ++i) {
    const double t = r.spline.t_begin() + r.spline.duration() * i / 1000.0;
    worst = std::min(worst, map.distance(r.spline.evaluate(t)));
  }
  CHECK(worst >= cfg.d_min - map.resolution());
  CHECK(r.spline.control_points().topRows(3) == s.control_points().topRows(3));
  CHECK(r.spline.control_points().bottomRows(3) == s.control_points().bottomRows(3));
}

TEST_CASE("parallel pgo selection") {
  const VoxelMap map = box_map();
  const UniformBSpline seed = line_seed(kStart, kGoal, 20, 0.3);
  const PolyPath left({kStart, Vec3(4.0, 1.2, 1.5), kGoal});
  const PolyPath right({kStart, Vec3(4.0, 4.6, 1.5), kGoal});
  PgoConfig cfg;

  const PgoOutput one = pgo_parallel(seed, {left}, map, cfg);
  CHECK(one.chosen == 0);

  const PgoOutput two = pgo_parallel(seed, {left, right}, map, cfg);
  REQUIRE(two.chosen >= 0);
  for (const auto& g : two.guides)
    if (g.feasible) CHECK(two.guides[two.chosen].cost <= g.cost);

  const PgoOutput dup = pgo_parallel(seed, {right, right}, map, cfg);
  CHECK(dup.guides[0].spline.control_points() == dup.guides[1].spline.control_points());
  CHECK(dup.guides[0].cost == dup.guides[1].cost);
  const PgoOutput seq = pgo_parallel(seed, {left, right}, map, cfg, false);
  CHECK(seq.best.control_points() == two.best.control_points());

  // Feasibility guarantee on the reported winner.
  const UniformBSpline& b = two.best;
  CHECK(hull_feasible_all(b, cfg.v_max, cfg.a_max));
  for (int i = 0; i <= 1000; ++i) {
    const double t = b.t_begin() + b.duration() * i / 1000.0;
    REQUIRE(b.evaluate(t, 1).cwiseAbs().maxCoeff() <= cfg.v_max + 1e-9);
    REQUIRE(b.evaluate(t, 2).cwiseAbs().maxCoeff() <= cfg.a_max + 1e-9);
  }
  CHECK(b.control_points().topRows(3) == seed.control_points().topRows(3));

  CHECK_THROWS_AS(pgo_parallel(seed, {}, map, cfg), Error);
}

TEST_CASE("parallel pgo fails when every guide is blocked") {
  VoxelMap map(Vec3::Zero(), 0.1, Idx3(80, 60, 30));
  map.fill(VoxelState::kFree);
  for (std::size_t n = 0; n < map.size(); ++n)
    if (map.center(map.unravel(n)).x() > 3.9 && map.center(map.unravel(n)).x() < 4.1) map.set_state(n, VoxelState::kOccupied);
  map.compute_esdf();
  const UniformBSpline seed = line_seed(kStart, kGoal, 16, 0.3);
  PgoConfig cfg;
  CHECK_THROWS_AS(pgo_parallel(seed, {PolyPath({kStart, kGoal})}, map, cfg), Error);
}
