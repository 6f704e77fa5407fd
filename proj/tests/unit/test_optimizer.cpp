#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "replan/errors.hpp"
#include "replan/optimizer.hpp"

using namespace replan;

TEST_CASE("lbfgs solves a convex quadratic") {
  Eigen::MatrixXd a(3, 3);
  a << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  const Eigen::Vector3d b(1, -2, 0.5);
  auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = a * x - b;
    return 0.5 * x.dot(a * x) - b.dot(x);
  };
  MinimizeOptions opt;
  opt.gradient_tolerance = 1e-10;
  const auto r = minimize_lbfgs(fn, Eigen::VectorXd::Zero(3), opt);
  const Eigen::VectorXd expect = a.ldlt().solve(b);
  CHECK((r.x - expect).norm() < 1e-8);
  CHECK(r.converged);
  for (std::size_t i = 1; i < r.cost_history.size(); ++i) CHECK(r.cost_history[i] <= r.cost_history[i - 1]);
}

TEST_CASE("lbfgs on rosenbrock") {
  auto fn = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  MinimizeOptions opt;
  opt.max_iterations = 500;
  opt.gradient_tolerance = 1e-8;
  const auto r = minimize_lbfgs(fn, Eigen::Vector2d(-1.2, 1.0), opt);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.cost <= r.initial_cost);
}

TEST_CASE("lbfgs stationary start and bad cost") {
  auto flat = [](const Eigen::VectorXd&, Eigen::VectorXd& g) {
    g.setZero();
    return 3.0;
  };
  const auto r = minimize_lbfgs(flat, Eigen::Vector2d(1.0, 2.0));
  CHECK(r.converged);
  CHECK(r.iterations == 0);
  CHECK(r.x == Eigen::Vector2d(1.0, 2.0));

  auto bad = [](const Eigen::VectorXd&, Eigen::VectorXd& g) {
    g.setZero();
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(minimize_lbfgs(bad, Eigen::Vector2d(1.0, 2.0)), Error);
}
