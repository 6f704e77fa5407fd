#pragma once

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace replan {

/// cost = f(x), writes the gradient into `grad` (already sized like x).
using CostGradFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct MinimizeOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-4;  // max-norm of the gradient
  int memory = 10;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double initial_cost = 0.0;
  double cost = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> cost_history;  // cost at x0 and after each accepted iteration
};

/// Limited-memory quasi-Newton descent with a Wolfe line search. Raises a
/// numerical error when the cost at x0 is not finite.
MinimizeResult minimize_lbfgs(const CostGradFn& fn, const Eigen::VectorXd& x0, const MinimizeOptions& opt = {});

}  // namespace replan
