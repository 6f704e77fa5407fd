#include "replan/optimizer.hpp"

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include <cmath>

#include "replan/errors.hpp"

namespace replan {

namespace {

class Adapter final : public ceres::FirstOrderFunction {
 public:
  Adapter(const CostGradFn& fn, int n, int* evaluations) : fn_(fn), n_(n), evaluations_(evaluations) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    const Eigen::Map<const Eigen::VectorXd> x(parameters, n_);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_);
    ++*evaluations_;
    *cost = fn_(x, g);
    if (!std::isfinite(*cost) || !g.allFinite()) return false;
    if (gradient != nullptr) Eigen::Map<Eigen::VectorXd>(gradient, n_) = g;
    return true;
  }
  int NumParameters() const override { return n_; }

 private:
  const CostGradFn& fn_;
  int n_;
  int* evaluations_;
};

class History final : public ceres::IterationCallback {
 public:
  explicit History(std::vector<double>* out) : out_(out) {}
  ceres::CallbackReturnType operator()(const ceres::IterationSummary& s) override {
    if (s.iteration == 0 || s.step_is_successful) out_->push_back(s.cost);
    return ceres::SOLVER_CONTINUE;
  }

 private:
  std::vector<double>* out_;
};

}  // namespace

MinimizeResult minimize_lbfgs(const CostGradFn& fn, const Eigen::VectorXd& x0, const MinimizeOptions& opt) {
  MinimizeResult res;
  res.x = x0;
  const int n = static_cast<int>(x0.size());
  Eigen::VectorXd g0 = Eigen::VectorXd::Zero(n);
  res.initial_cost = fn(x0, g0);
  res.evaluations = 1;
  if (!std::isfinite(res.initial_cost) || !g0.allFinite())
    raise(ErrorCode::kNumerical, "cost or gradient not finite at the initial point");
  res.cost = res.initial_cost;
  if (n == 0 || g0.cwiseAbs().maxCoeff() <= opt.gradient_tolerance) {
    res.converged = true;
    res.cost_history = {res.cost};
    return res;
  }

  ceres::GradientProblemSolver::Options o;
  o.line_search_direction_type = ceres::LBFGS;
  o.max_lbfgs_rank = opt.memory;
  o.max_num_iterations = opt.max_iterations;
  o.gradient_tolerance = opt.gradient_tolerance;
  o.function_tolerance = 1e-12;
  o.parameter_tolerance = 1e-12;
  o.logging_type = ceres::SILENT;
  History history(&res.cost_history);
  o.callbacks.push_back(&history);

  ceres::GradientProblem problem(new Adapter(fn, n, &res.evaluations));
  ceres::GradientProblemSolver::Summary summary;
  Eigen::VectorXd x = x0;
  ceres::Solve(o, problem, x.data(), &summary);

  if (std::isfinite(summary.final_cost) && summary.final_cost <= res.initial_cost) {
    res.x = x;
    res.cost = summary.final_cost;
  }
  res.iterations = static_cast<int>(summary.iterations.size()) - 1;
  res.converged = summary.termination_type == ceres::CONVERGENCE;
  return res;
}

}  // namespace replan
